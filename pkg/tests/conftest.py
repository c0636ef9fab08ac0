"""Shared fixtures: simulated records are expensive, so they are built once
per session and shared read-only (SignalSet arrays are locked)."""
import numpy as np
import pytest

from esparse.dynamics import nominal_params, simulate_chirp


@pytest.fixture(scope="session")
def nominal_signals():
    return simulate_chirp(nominal_params())


@pytest.fixture(scope="session")
def friction_signals():
    return simulate_chirp(nominal_params(friction=True), amplitude=20.0)


@pytest.fixture(scope="session")
def short_signals():
    """A two-second record for tests that only need plausible signals."""
    return simulate_chirp(nominal_params(), duration=2.0, split=800)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
