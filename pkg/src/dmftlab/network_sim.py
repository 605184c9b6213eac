"""Projected SGD on an actual two-layer network f(x) = (1/m) sum_i a_i sigma(<w_i, x>)
trained on single-index data y = phi(<u, x>) + eps.

Activations and targets are given by coefficients in the normalized
probabilists' Hermite basis He_k / sqrt(k!), so that the network kernel is
h(q) = sum_k s_k^2 q^k and phi_hat(q) = sum_k s_k f_k q^k.
"""
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from numpy.polynomial import hermite_e as He

from .engine import SolverAbort
from .gaussian_sim import project_sphere, realization_rng
from .kernels import CovarianceKernel, TargetLink


class HermiteFunction:
    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        self.coeffs = coeffs
        norm = np.array([1 / math.sqrt(math.factorial(k)) for k in range(len(coeffs))])
        self._c = coeffs * norm
        self._dc = He.hermeder(self._c) if len(coeffs) > 1 else np.zeros(1)

    def __call__(self, z):
        return He.hermeval(z, self._c)

    def deriv(self, z):
        return He.hermeval(z, self._dc)


def kernel_and_link(s, f, tau2):
    """Kernel h and link (phi_hat, ||phi||^2, tau^2) implied by Hermite lists."""
    s = np.asarray(s, dtype=float)
    f = np.asarray(f, dtype=float)
    K = max(len(s), len(f))
    s = np.pad(s, (0, K - len(s)))
    f = np.pad(f, (0, K - len(f)))
    return CovarianceKernel(s ** 2), TargetLink(s * f, float(np.sum(f ** 2)), tau2)


class IndexDataset:
    def __init__(self, X, y, u, phi, tau):
        self.X, self.y, self.u = X, y, u
        self.phi, self.tau = phi, tau

    @property
    def n(self):
        return self.X.shape[0]

    @classmethod
    def sample(cls, n, d, f, tau, rng, u=None):
        if u is None:
            u = rng.standard_normal(d)
            u /= np.linalg.norm(u)
        X = rng.standard_normal((n, d))
        phi = HermiteFunction(f)
        y = phi(X @ u) + tau * rng.standard_normal(n)
        return cls(X, y, u, phi, tau)


class TwoLayerNet:
    def __init__(self, W, a, s):
        self.W = np.array(W, dtype=float)
        self.a = np.array(a, dtype=float)
        self.sigma = HermiteFunction(s)

    @property
    def m(self):
        return len(self.a)

    @classmethod
    def init(cls, m, d, a0, s, rng):
        W = rng.standard_normal((m, d)) / np.sqrt(d)
        return cls(project_sphere(W), np.full(m, float(a0)), s)

    def project(self, eps=1e-8):
        self.W = project_sphere(self.W, eps)

    def forward(self, X):
        return self.sigma(X @ self.W.T) @ self.a / self.m

    def risk(self, X, y):
        r = y - self.forward(X)
        return 0.5 * np.mean(r * r)

    def grads(self, X, y):
        Z = X @ self.W.T
        S = self.sigma(Z)
        r = y - S @ self.a / self.m
        b = len(y)
        ga = -(S.T @ r) / (self.m * b)
        gW = -((self.sigma.deriv(Z) * r[:, None]).T @ X) * (self.a / (self.m * b))[:, None]
        return ga, gW


def empirical_overlaps(net, u):
    return {"v": net.W @ u, "C": net.W @ net.W.T}


def sgd_train(net, data, eta=0.1, batch=100, steps=100, seed=0, freeze_a=False,
              test_n=10000, record_every=1, test_data=None):
    """Minibatch SGD on 1/(2b) sum (y - f)^2 with row projection after each step.
    Step k is mapped to gradient-flow time t = k eta d / n."""
    n, d = data.X.shape
    if batch > n:
        raise ValueError("batch larger than n")
    rng = realization_rng([seed, 7])
    if test_data is None:
        test_data = IndexDataset.sample(test_n, d, data.phi.coeffs, data.tau, rng, u=data.u)
    rows = []
    W0 = net.W.copy()
    m = net.m
    off = ~np.eye(m, dtype=bool)
    perm = rng.permutation(n)
    pos = 0
    for k in range(steps + 1):
        if k % record_every == 0 or k == steps:
            ov = empirical_overlaps(net, data.u)
            Cd0 = np.mean(np.sum(net.W * W0, axis=1))
            Co = ov["C"][off].mean() if m > 1 else 0.0
            rows.append((k, k * eta * d / n, net.risk(data.X, data.y),
                         net.risk(test_data.X, test_data.y), net.a.mean(), ov["v"].mean(), Co, Cd0))
            if not np.isfinite(rows[-1][2]):
                raise SolverAbort(k)
        if k == steps:
            break
        if pos + batch > n:
            perm = rng.permutation(n)
            pos = 0
        idx = perm[pos:pos + batch]
        pos += batch
        ga, gW = net.grads(data.X[idx], data.y[idx])
        if not freeze_a:
            net.a = net.a - eta * ga
        net.W = net.W - eta * gW
        net.project()
    arr = np.array(rows)
    return {"step": arr[:, 0].astype(int), "t": arr[:, 1], "e_tr": arr[:, 2],
            "e_ts": arr[:, 3], "a": arr[:, 4], "v": arr[:, 5], "C_o_tt": arr[:, 6],
            "C_d_t0": arr[:, 7]}


def _sgd_one(args):
    sd, m, d, n, s, f, tau, a0, eta, batch, steps, test_n, record_every = args
    rng = realization_rng([sd, 0])
    data = IndexDataset.sample(n, d, f, tau, rng)
    net = TwoLayerNet.init(m, d, a0, s, rng)
    return sgd_train(net, data, eta, batch, steps, seed=sd, test_n=test_n,
                     record_every=record_every)


def sgd_ensemble(seeds, m, d, alpha, s, f, tau, a0=1.0, eta=0.1, batch=100, t_max=20.0,
                 test_n=10000, record_every=1, jobs=1):
    n = int(round(alpha * m * d))
    steps = int(round(t_max * n / (eta * d)))
    tasks = [(sd, m, d, n, s, f, tau, a0, eta, batch, steps, test_n, record_every) for sd in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            runs = list(ex.map(_sgd_one, tasks))
    else:
        runs = [_sgd_one(a) for a in tasks]
    out = {"step": runs[0]["step"], "t": runs[0]["t"], "n": n, "runs": runs}
    for k in ("e_tr", "e_ts", "a", "v", "C_o_tt", "C_d_t0"):
        x = np.stack([r[k] for r in runs])
        out[k] = x.mean(0)
        out[k + "_stderr"] = x.std(0, ddof=1) / np.sqrt(len(runs)) if len(runs) > 1 else 0 * x[0]
    return out
