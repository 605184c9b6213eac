"""Polynomial covariance kernels h(q) and target links phi_hat(q)."""
import numpy as np
from numpy.polynomial import polynomial as P


class KernelError(ValueError):
    pass


class CovarianceKernel:
    """h(q) = sum_k coeffs[k] q^k, coeffs[k] = c_k^2 >= 0."""

    def __init__(self, coeffs, centered=True):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float)).copy()
        if c.ndim != 1 or len(c) == 0:
            raise KernelError("coeffs must be a non-empty list")
        if len(c) > 17:
            raise KernelError("degree > 16 not supported")
        if np.any(c < 0):
            raise KernelError("kernel coefficients must be non-negative")
        if centered and c[0] != 0:
            raise KernelError("coeffs[0] must be 0 (centered activation)")
        c.setflags(write=False)
        self.coeffs = c
        self._d = [c, P.polyder(c, 1) if len(c) > 1 else np.zeros(1),
                   P.polyder(c, 2) if len(c) > 2 else np.zeros(1),
                   P.polyder(c, 3) if len(c) > 3 else np.zeros(1)]

    def __call__(self, q, order=0):
        return P.polyval(q, self._d[order])

    def d1(self, q):
        return P.polyval(q, self._d[1])

    def d2(self, q):
        return P.polyval(q, self._d[2])

    @property
    def degree(self):
        nz = np.nonzero(self.coeffs)[0]
        return int(nz[-1]) if len(nz) else 0

    @property
    def c(self):
        # c_k = sqrt of coefficient
        return np.sqrt(self.coeffs)

    def __eq__(self, other):
        return isinstance(other, CovarianceKernel) and np.array_equal(
            np.trim_zeros(self.coeffs, "b"), np.trim_zeros(other.coeffs, "b"))

    def __repr__(self):
        return "CovarianceKernel(%s)" % list(self.coeffs)


class TargetLink:
    """phi_hat(q) = sum_k coeffs[k] q^k with coeffs[k] = s_k f_k, plus ||phi||^2 and tau^2."""

    def __init__(self, coeffs=(0.0,), phi_norm2=0.0, tau2=0.0):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float)).copy()
        if phi_norm2 < 0 or tau2 < 0:
            raise KernelError("phi_norm2 and tau2 must be >= 0")
        c.setflags(write=False)
        self.coeffs = c
        self.phi_norm2 = float(phi_norm2)
        self.tau2 = float(tau2)
        self._d = [c, P.polyder(c, 1) if len(c) > 1 else np.zeros(1),
                   P.polyder(c, 2) if len(c) > 2 else np.zeros(1)]

    def __call__(self, q, order=0):
        return P.polyval(q, self._d[order])

    def d1(self, q):
        return P.polyval(q, self._d[1])

    def d2(self, q):
        return P.polyval(q, self._d[2])

    @property
    def pure_noise(self):
        return not np.any(self.coeffs) and self.phi_norm2 == 0

    def check_consistent(self, kernel):
        # Cauchy-Schwarz: phi_hat(1)^2 <= h(1) ||phi||^2 is necessary for a joint Gaussian
        lhs = self(1.0) ** 2
        rhs = kernel(1.0) * self.phi_norm2
        return lhs <= rhs * (1 + 1e-12) + 1e-15

    def __repr__(self):
        return "TargetLink(%s, phi_norm2=%g, tau2=%g)" % (list(self.coeffs), self.phi_norm2, self.tau2)


def pure_noise(tau2):
    return TargetLink([0.0], 0.0, tau2)


def matched_link(kernel, tau2):
    """phi = sigma: phi_hat = h and ||phi||^2 = h(1)."""
    return TargetLink(kernel.coeffs, float(kernel(1.0)), tau2)


def eval_h(kernel, q, order=0):
    q = np.asarray(q)
    if np.any(np.abs(q) > 1 + 1e-8):
        raise KernelError("|q| must be <= 1")
    if order not in (0, 1, 2):
        raise KernelError("order must be 0, 1 or 2")
    return kernel(q, order)


def hermite_to_kernel(s):
    s = np.asarray(s, dtype=float)
    if s[0] != 0:
        raise KernelError("s[0] must vanish (centered activation)")
    return CovarianceKernel(s ** 2)


def effective_noise(link, kernel):
    """tau'^2 of the equivalent pure-noise problem for lazy single-index learning."""
    h1 = kernel.d1(0.0)
    if h1 <= 0:
        raise KernelError("h'(0) = 0: linear-learning reduction undefined")
    return link.tau2 + link.phi_norm2 - link.d1(0.0) ** 2 / h1


def tilde_h(kernel):
    c = np.array(kernel.coeffs)
    if len(c) > 1:
        c[1] = 0.0
    return CovarianceKernel(c)


def kernel_from_config(d):
    if "h_coeffs" in d and d["h_coeffs"] is not None:
        return CovarianceKernel(d["h_coeffs"])
    if "sigma_hermite" in d and d["sigma_hermite"] is not None:
        return hermite_to_kernel(d["sigma_hermite"])
    raise KernelError("model needs h_coeffs or sigma_hermite")
