"""Exception hierarchy for homoclinickit.

Errors deriving from :class:`CertificateFailure` mean that a numerical
certificate did not hold; the CLI maps them to exit code 2. Everything else is
an operational error (exit code 1).
"""

from typing import Optional


class HomoclinicKitError(Exception):
    """Base class for all package errors."""


class CertificateFailure(HomoclinicKitError):
    """A numerical certificate was violated."""


# -- symplectic_core -------------------------------------------------------

class DomainEscape(HomoclinicKitError):
    """A point or its image left the declared domain box."""


class InverseDivergence(HomoclinicKitError):
    """Newton inversion of a map did not converge."""


class NonSymplecticJacobian(CertificateFailure):
    """Jacobian symplecticity residual above tolerance."""


# -- model_zoo --------------------------------------------------------------

class StrongResonance(CertificateFailure):
    """alpha is too close to pi/2 or 2*pi/3."""


class ZeroTwist(CertificateFailure):
    """The twist coefficient nu vanishes."""


class NonSymplecticM(CertificateFailure):
    """The global matrix M is not symplectic."""


class TransversalityFailure(CertificateFailure):
    """The transversality certificate failed."""


class GluingOverlap(HomoclinicKitError):
    """q+ lies inside the gluing ball around q-."""


# -- fixed_point_analysis ---------------------------------------------------

class NewtonDivergence(HomoclinicKitError):
    """Newton iteration for a fixed or periodic point failed."""


class NotOneElliptic(CertificateFailure):
    """The spectrum is not of 1-elliptic type."""


class IllConditionedHomological(HomoclinicKitError):
    """A homological divisor is below tol_div."""


class BadCurveData(HomoclinicKitError):
    """Curve data violates the tangency conditions at the origin."""


# -- homoclinic / scattering ------------------------------------------------

class NeverSettles(HomoclinicKitError):
    """The stored orbit never enters the requested neighbourhood."""


class DecayFitFailure(CertificateFailure):
    """Coupling blocks along the orbit do not decay geometrically."""


class NoContraction(CertificateFailure):
    """A contraction operator has Lipschitz estimate >= 1."""


# -- center_dynamics / sigma_analysis ---------------------------------------

class CenterNotInvariant(CertificateFailure):
    """The center plane {x = y = 0} is not invariant."""


class EscapedAnnulus(HomoclinicKitError):
    """A center orbit left the annulus it was started in."""


class SectionMiss(HomoclinicKitError):
    """A ray on the section carries no sign change of the side function."""


class ChartTooLarge(HomoclinicKitError):
    """The graph representation of the disk folds inside the chart."""


class SelfIntersecting(HomoclinicKitError):
    """A trace polygon crosses itself."""


class TangencySuspected(CertificateFailure):
    """A crossing angle between traces is below tol_angle."""


# -- cli_io -----------------------------------------------------------------

class ParseError(HomoclinicKitError):
    """Configuration syntax error with a source location."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(HomoclinicKitError):
    """Configuration value violates an invariant."""


class IoError(HomoclinicKitError):
    """Report files could not be written or read."""


class StageError(HomoclinicKitError):
    """An error raised inside a pipeline stage, tagged with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause: Optional[Exception] = cause

    @property
    def is_certificate_failure(self) -> bool:
        return isinstance(self.cause, CertificateFailure)
