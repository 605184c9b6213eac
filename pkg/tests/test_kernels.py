import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import H_TEST
from dmftlab.kernels import (CovarianceKernel, KernelError, TargetLink, effective_noise,
                             eval_h, hermite_to_kernel, kernel_from_config, matched_link,
                             pure_noise, tilde_h)

coef_lists = st.lists(st.floats(0, 2), min_size=1, max_size=8).map(lambda c: [0.0] + c)


@given(coef_lists, st.floats(-1, 1))
def test_bounded_by_h1(c, q):
    h = CovarianceKernel(c)
    assert abs(h(q)) <= h(1.0) * (1 + 1e-12) + 1e-15


@pytest.mark.parametrize("h", H_TEST)
@pytest.mark.parametrize("q", [-0.9, -0.3, 0.0, 0.4, 0.99])
def test_derivatives_fd(h, q):
    eps = 1e-5
    fd1 = (h(q + eps) - h(q - eps)) / (2 * eps)
    fd2 = (h.d1(q + eps) - h.d1(q - eps)) / (2 * eps)
    assert abs(h.d1(q) - fd1) < 1e-8
    assert abs(h.d2(q) - fd2) < 1e-8


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=8))
def test_hermite_kernel_at_one(s):
    s = [0.0] + s
    assert hermite_to_kernel(s)(1.0) == pytest.approx(sum(x * x for x in s), rel=1e-12, abs=1e-14)


def test_rejects_bad_coefficients():
    with pytest.raises(KernelError):
        CovarianceKernel([0, -0.1])
    with pytest.raises(KernelError):
        CovarianceKernel([0.5, 1.0])
    with pytest.raises(KernelError):
        hermite_to_kernel([1.0, 0.5])
    with pytest.raises(KernelError):
        eval_h(CovarianceKernel([0, 1]), 1.5)
    with pytest.raises(KernelError):
        TargetLink([0, 1], -1.0)


def test_tilde_h_drops_linear_part():
    h = CovarianceKernel([0, 0.9, 0.2, 1 / 6])
    ht = tilde_h(h)
    assert ht.d1(0.0) == 0
    assert ht(0.7) == pytest.approx(h(0.7) - 0.9 * 0.7)


def test_effective_noise():
    h = CovarianceKernel([0, 0.5, 0.5])
    # phi = sigma: tau'^2 = tau^2 + h(1) - h'(0)
    assert effective_noise(matched_link(h, 0.25), h) == pytest.approx(0.25 + 1.0 - 0.5)
    assert effective_noise(pure_noise(0.3), h) == pytest.approx(0.3)
    with pytest.raises(KernelError):
        effective_noise(pure_noise(1.0), CovarianceKernel([0, 0, 1]))


def test_matched_link_consistent():
    h = CovarianceKernel([0, 0.3, 0.5])
    phi = matched_link(h, 1.0)
    assert phi.check_consistent(h)
    assert not TargetLink([0, 2.0], 1.0).check_consistent(h)


def test_kernel_from_config():
    assert kernel_from_config({"h_coeffs": [0, 0.3, 0.5]}) == CovarianceKernel([0, 0.3, 0.5])
    assert kernel_from_config({"sigma_hermite": [0, 1, 1]}) == CovarianceKernel([0, 1, 1])
    with pytest.raises(KernelError):
        kernel_from_config({})
