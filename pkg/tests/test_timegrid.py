import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmftlab.dmft_symm import SymmDMFT
from dmftlab.kernels import CovarianceKernel, pure_noise
from dmftlab.timegrid import (CausalField, ResponseSolver, TimeGrid, causal_sum,
                              solve_response_correlation)


def _random_fields(n, seed):
    rng = np.random.default_rng(seed)
    SR = np.tril(rng.normal(size=(n, n)))
    A = rng.normal(size=(n, n))
    SC = A @ A.T / n
    return SR, SC


@given(st.integers(1, 30), st.integers(0, 10 ** 6), st.sampled_from([0.01, 0.1, 0.5]))
@settings(max_examples=40, deadline=None)
def test_response_residual(n, seed, eta):
    SR, SC = _random_fields(n, seed)
    RA, CA = solve_response_correlation(CausalField.from_array(SR),
                                        CausalField.from_array(SC, symmetric=True), eta)
    RA, CA = RA.array(), CA.array()
    # eta R_A (I + eta S_R) = I and C_A = -eta^2 R_A S_C R_A^T
    res1 = eta * RA @ (np.eye(n) + eta * SR) - np.eye(n)
    res2 = CA + eta ** 2 * RA @ SC @ RA.T
    scale = max(1.0, np.abs(RA).max() * eta) ** 2
    assert np.abs(res1).max() <= 1e-12 * scale
    assert np.abs(res2).max() <= 1e-12 * scale * max(1.0, np.abs(CA).max())
    assert np.array_equal(CA, CA.T)
    assert np.all(np.triu(RA, 1) == 0)


def test_causal_field_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    a = np.tril(rng.normal(size=(7, 7)))
    f = CausalField.from_array(a)
    f.dump(tmp_path / "f.bin", 0.1)
    g, eta = CausalField.load(tmp_path / "f.bin")
    assert eta == 0.1
    assert np.array_equal(g.array(), f.array())
    assert f.horizon == 6
    with pytest.raises(IndexError):
        f[7, 0]
    with pytest.raises(ValueError):
        f.extend(np.zeros(3))


def test_symmetric_field_mirrors():
    f = CausalField(symmetric=True, capacity=2)
    for i in range(5):
        f.extend(np.arange(i + 1, dtype=float) + 10 * i)
    A = f.array()
    assert np.array_equal(A, A.T)


def test_causal_sum_inclusive():
    F = CausalField.from_array(np.tril(np.ones((4, 4))))
    G = CausalField.from_array(np.ones((4, 4)), symmetric=True)
    assert causal_sum(F, G, 3, 0, 0.5) == pytest.approx(0.5 * 4)
    assert causal_sum(F, G, 3, 0, 0.5, lo=2) == pytest.approx(0.5 * 2)


def test_timegrid_basic():
    g = TimeGrid(0.1, 10)
    assert g.eta == 0.1


def test_append_stability():
    """Entries written at horizon 40 are unchanged in a run to horizon 80."""
    h = CovarianceKernel([0, 0.3, 0.5])
    short = SymmDMFT(h, pure_noise(1.0), m=4, eta=0.1, n_steps=40, abar=1.5, a0=1.0).run()
    long = SymmDMFT(h, pure_noise(1.0), m=4, eta=0.1, n_steps=80, abar=1.5, a0=1.0).run()
    s = slice(0, 41)
    for name in ("C_d", "C_o", "R_d", "R_o", "C_A", "R_A"):
        assert np.array_equal(getattr(short, name)[s, s], getattr(long, name)[s, s]), name
    assert np.array_equal(short.a, long.a[s])
