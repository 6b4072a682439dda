import numpy as np
import pytest

from wienerchannel.montecarlo import McConfig
from wienerchannel.priors import Atomic, AtomicLaw, GaussianLaw, ScaledShape
from wienerchannel.wiener_space import Basis


def random_atomic(rng, max_atoms=5, max_n=8, scale=1.0):
    """Random atomic prior with at most ``max_atoms`` atoms on at most ``max_n`` coordinates."""
    k = int(rng.integers(1, max_atoms + 1))
    n = int(rng.integers(1, max_n + 1))
    atoms = scale * rng.standard_normal((k, n))
    w = rng.dirichlet(np.ones(k))
    w = w / w.sum()
    return Atomic(atoms, w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def pm1_scalar():
    return Atomic([[-1.0], [1.0]], [0.5, 0.5])


def pm1_constant(n):
    return ScaledShape(Basis(n).constant_shape(), AtomicLaw.symmetric_sign())


def gaussian_constant(n, var=1.0):
    return ScaledShape(Basis(n).constant_shape(), GaussianLaw(0.0, var))


@pytest.fixture
def small_mc():
    return McConfig(samples=20_000, batches=20, seed=7)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
