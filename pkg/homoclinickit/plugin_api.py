"""Plugin API for certificate checks run after the pipeline."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional
import math

if TYPE_CHECKING:
    from .engine import PipelineReport


@dataclass
class CertificateResult:
    """Outcome of one certificate.

    ``value`` is the measured quantity (a residual, a count) and ``threshold``
    the bound it was compared against; either may be None for checks without
    a single scalar.
    """
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    metrics: Dict[str, Any] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)
    time_ms: Optional[float] = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("certificate name must be non-empty")
        self.passed = bool(self.passed)
        for attr in ("value", "threshold", "time_ms"):
            v = getattr(self, attr)
            if v is None:
                continue
            try:
                setattr(self, attr, float(v))
            except (TypeError, ValueError):
                raise ValueError(f"{attr} must be a number or None") from None
        if self.threshold is not None and not self.threshold >= 0.0:
            raise ValueError("threshold must be non-negative")

    @property
    def skipped(self) -> bool:
        return "skipped" in self.flags


def _plain(value):
    """numpy scalars and arrays to builtins; NaN and inf become strings."""
    if hasattr(value, "tolist"):
        value = value.tolist()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def serialize_certificate(result: CertificateResult) -> Dict[str, Any]:
    """JSON-compatible dict with a fixed key order."""
    return {
        "name": result.name,
        "passed": result.passed,
        "value": _plain(result.value),
        "threshold": _plain(result.threshold),
        "metrics": _plain(result.metrics or {}),
        "flags": list(result.flags or []),
        "time_ms": result.time_ms,
    }


class CertificatePlugin(ABC):
    """Base class for certificates.

    ``requires`` lists the pipeline stages whose results :meth:`run` reads;
    the engine skips the certificate when one of them did not complete.
    """

    requires: List[str] = []

    @abstractmethod
    def describe(self) -> str:
        """Return plugin description."""

    @abstractmethod
    def run(self, context: "PipelineReport", params: Dict[str, Any]) -> CertificateResult:
        """Evaluate the certificate on a pipeline report."""

    def safe_run(self, name: str, context: "PipelineReport", params: Dict[str, Any]) -> CertificateResult:
        """Run and turn an unexpected exception into a failed result flagged 'error'."""
        try:
            return self.run(context, params)
        except Exception as e:
            return CertificateResult(name, False, flags=["error"], metrics={"reason": f"{type(e).__name__}: {e}"})
