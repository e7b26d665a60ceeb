import numpy as np
import pytest

from envkit.hilbert import BipartiteState, haar_unitary
from envkit.schmidt import CorrelationOperator, strong_schmidt_reconstruct

SQ2 = 1 / np.sqrt(2)


def bell():
    return BipartiteState(np.array([SQ2, 0, 0, SQ2]), 2, 2)


def two_thirds():
    return BipartiteState(np.array([np.sqrt(2 / 3), 0, 0, np.sqrt(1 / 3)]), 2, 2)


def state_with_spectrum(spectrum, d1, d2, rng):
    """Random state whose first reduced density has the given eigenvalues."""
    spectrum = np.asarray(spectrum, dtype=float)
    r = spectrum.size
    b = haar_unitary(d1, rng)[:, :r]
    c = haar_unitary(d2, rng)[:, :r]
    rho = (b * spectrum) @ b.conj().T
    return strong_schmidt_reconstruct(rho, CorrelationOperator.from_bases(b, c))


def random_state(d1, d2, rng):
    z = rng.normal(size=d1 * d2) + 1j * rng.normal(size=d1 * d2)
    return BipartiteState.normalized(z, d1, d2)


def random_density(d, rng, rank=None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return m / np.trace(m).real


def degenerate_spectrum(d1, d2, rng):
    """Random spectrum with at least one repeated eigenvalue, rank <= min(d1, d2)."""
    r = int(rng.integers(1, min(d1, d2) + 1))
    k = int(rng.integers(1, r + 1))
    mults = rng.multinomial(r - k, np.ones(k) / k) + 1
    vals = rng.dirichlet(np.ones(k)) + 0.05
    vals = vals / np.dot(vals, mults)
    return np.repeat(vals, mults)


@pytest.fixture
def rng():
    return np.random.default_rng(20260419)
