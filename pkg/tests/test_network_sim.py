import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dmftlab.gaussian_sim import project_sphere
from dmftlab.kernels import CovarianceKernel
from dmftlab.network_sim import (HermiteFunction, IndexDataset, TwoLayerNet, kernel_and_link,
                                 sgd_ensemble, sgd_train)

S = [0, 0.6, 0.5, 0.3]


@given(arrays(float, (3, 5), elements=st.floats(-10, 10)).filter(lambda W: np.all(np.abs(W).sum(1) > 1e-3)))
def test_projection_idempotent(W):
    P = project_sphere(W)
    assert np.array_equal(project_sphere(P), P)


def test_centering():
    g = np.random.default_rng(0).standard_normal(10 ** 6)
    x = HermiteFunction(S)(g)
    assert abs(x.mean()) <= 4 * x.std() / np.sqrt(len(x))


@pytest.mark.parametrize("q", [0.0, 0.5, 1.0])
def test_kernel_consistency(q):
    rng = np.random.default_rng(1)
    n = 10 ** 6
    g1 = rng.standard_normal(n)
    g2 = q * g1 + np.sqrt(1 - q * q) * rng.standard_normal(n)
    sig = HermiteFunction(S)
    x = sig(g1) * sig(g2)
    h, _ = kernel_and_link(S, [0, 1], 0.0)
    assert abs(x.mean() - h(q)) <= 4 * x.std() / np.sqrt(n)


def test_link_from_hermite():
    h, phi = kernel_and_link([0, 1, 1], [0, 2, 0, 1], 0.36)
    assert h == CovarianceKernel([0, 1, 1])
    assert phi(1.0) == pytest.approx(2.0)
    assert phi.phi_norm2 == pytest.approx(5.0)
    assert phi.check_consistent(h)


def test_grads_finite_differences():
    rng = np.random.default_rng(2)
    data = IndexDataset.sample(50, 6, [0, 1, 0.5], 0.3, rng)
    net = TwoLayerNet.init(3, 6, 1.0, S, rng)
    net.a = rng.normal(size=3)
    ga, gW = net.grads(data.X, data.y)
    eps = 1e-6
    for i in range(3):
        ap, am = net.a.copy(), net.a.copy()
        ap[i] += eps
        am[i] -= eps
        fp = TwoLayerNet(net.W, ap, S).risk(data.X, data.y)
        fm = TwoLayerNet(net.W, am, S).risk(data.X, data.y)
        assert ga[i] == pytest.approx((fp - fm) / (2 * eps), rel=1e-6, abs=1e-10)
    E = np.zeros_like(net.W)
    E[1, 3] = eps
    fp = TwoLayerNet(net.W + E, net.a, S).risk(data.X, data.y)
    fm = TwoLayerNet(net.W - E, net.a, S).risk(data.X, data.y)
    assert gW[1, 3] == pytest.approx((fp - fm) / (2 * eps), rel=1e-6, abs=1e-10)


def test_sgd_deterministic():
    kw = dict(m=2, d=10, alpha=2.0, s=S, f=[0, 1], tau=0.3, batch=10, t_max=0.5, test_n=200)
    r1 = sgd_ensemble([1, 2], **kw)
    r2 = sgd_ensemble([1, 2], jobs=2, **kw)
    assert np.array_equal(r1["a"], r2["a"])
    assert np.array_equal(r1["v"], r2["v"])
    assert np.all(np.abs(r1["C_d_t0"]) <= 1 + 1e-12)
    assert r1["C_d_t0"][0] == pytest.approx(1.0)


def test_batch_too_large():
    rng = np.random.default_rng(0)
    data = IndexDataset.sample(5, 4, [0, 1], 0.1, rng)
    with pytest.raises(ValueError):
        sgd_train(TwoLayerNet.init(2, 4, 1.0, S, rng), data, batch=10)
