import math

import numpy as np
import pytest

from vibronic import ModelParams, MotionalEvolution, Truncation


@pytest.fixture(scope="session")
def trunc64():
    return Truncation(64, 1e-10)


@pytest.fixture(scope="session")
def fig1a_params():
    """Zeroth-sideband drive with the strong-pump working point."""
    return ModelParams(
        eta=0.3,
        delta_phi=0.0,
        k_sideband=0,
        delta_omega=20.0,
        nu=5000.0,
        beta0=100.0,
        alpha0=complex(math.sqrt(8.0)),
    )


@pytest.fixture(scope="session")
def fig1b_params(fig1a_params):
    return ModelParams(
        eta=fig1a_params.eta,
        delta_phi=fig1a_params.delta_phi,
        k_sideband=2,
        delta_omega=fig1a_params.delta_omega,
        nu=fig1a_params.nu,
        beta0=fig1a_params.beta0,
        alpha0=fig1a_params.alpha0,
    )


@pytest.fixture(scope="session")
def small_params():
    """Instance small enough for the dense tripartite oracle."""
    return ModelParams(
        eta=0.3,
        delta_phi=0.0,
        k_sideband=0,
        delta_omega=5.0,
        nu=50.0,
        omega21=200.0,
        beta0=2.0,
        alpha0=1.0,
    )


@pytest.fixture(scope="session")
def fig1a_evolution(fig1a_params, trunc64):
    return MotionalEvolution(fig1a_params, trunc64)


@pytest.fixture(scope="session")
def fig1a_state_t02(fig1a_evolution):
    """The zeroth-sideband state at t = 0.2 used by the phase-space and
    measurement checks."""
    return fig1a_evolution.rho(0.2)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240815)
