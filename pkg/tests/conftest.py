"""Shared fixtures: a small demo configuration and one full pipeline run."""

import dataclasses

import pytest

from homoclinickit.config import AnalysisConfig, RunConfig
from homoclinickit.engine import Engine

SMALL_CONFIG_TEXT = """\
model.nu = 0.1
analysis.I_min = 1.0
analysis.I_max = 2.0
analysis.I_count = 2
analysis.trace_vertices = 64
analysis.kam_iterations = 2048
"""


def small_config(**model) -> RunConfig:
    """Demo model on a two-point action grid with coarse traces."""
    cfg = RunConfig(analysis=AnalysisConfig(I_min=1.0, I_max=2.0, I_count=2, trace_vertices=64,
                                            kam_iterations=2048))
    if model:
        cfg = dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, **model))
    return cfg


@pytest.fixture(scope="session")
def demo_report():
    """Full pipeline on the small demo configuration, certificates included."""
    engine = Engine()
    try:
        return engine.run_pipeline(small_config())
    finally:
        engine.close()
