import numpy as np
import pytest

from hallmhd.spectral import make_lattice


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def lat4():
    return make_lattice(4, 2 * np.pi, 1.0)


@pytest.fixture(scope="session")
def lat8():
    return make_lattice(8, 2 * np.pi, 3.0)


@pytest.fixture(scope="session")
def lat16():
    return make_lattice(16, 2 * np.pi, 5.0)


def mode_position(lattice, m):
    hits = np.flatnonzero(np.all(lattice.indices == np.asarray(m), axis=1))
    assert len(hits) == 1, f"mode {m} not on the lattice"
    return int(hits[0])


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)
