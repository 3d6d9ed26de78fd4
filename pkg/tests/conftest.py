from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from heraldsim import analysis, model, synth

settings.register_profile(
    "heraldsim", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("heraldsim")


def random_state(rng: np.random.Generator, dim: int, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


@pytest.fixture(scope="session")
def default_params() -> model.ExperimentParams:
    return model.ExperimentParams()


@pytest.fixture(scope="session")
def default_run(default_params):
    """Desk-scale synthetic run at the default parameters (10^4 traces)."""
    return synth.synthesize_run(default_params)


@pytest.fixture(scope="session")
def default_analysis(default_run):
    return analysis.analyze(default_run, n_bootstrap=50)
