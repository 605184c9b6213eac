"""Symmetric-ansatz DMFT: all neurons exchangeable, fields reduce to
diagonal/off-diagonal pairs (C_d, C_o, R_d, R_o) plus scalars a, v.

Internally everything is written in terms of alpha = abar/m and q = 1/m, so
the step is an analytic function of q and can be run with complex q (this is
what the 1/m-correction module uses).
"""
import numpy as np

from .engine import Engine
from .kernels import pure_noise


class SymmPlugin:
    def __init__(self, kernel, link, alpha, inv_m, a0, v0=0.0, freeze_a=False):
        self.h = kernel
        self.phi = link if link is not None else pure_noise(1.0)
        self.alpha = alpha
        self.q = inv_m
        self.a0 = a0
        self.v0 = v0
        self.freeze_a = freeze_a

    def attach(self, eng):
        self.e = eng
        N = eng.N
        self.a = np.zeros(N, dtype=eng.dtype)
        self.v = np.zeros(N, dtype=eng.dtype)
        self.a[0] = self.a0
        self.v[0] = self.v0

    def sigma(self, T):
        e, h, phi = self.e, self.h, self.phi
        q = self.q
        p = 1 - q
        n = T + 1
        cd = e.C[0][T, :n]
        co = e.C[1][T, :n]
        rd = e.R[0][T, :n]
        ro = e.R[1][T, :n]
        a = self.a[:n]
        v = self.v[:n]
        aT = a[T]
        ph = phi(v)
        sc = phi.tau2 + phi.phi_norm2 - aT * ph[T] - a * ph + aT * a * (q * h(cd) + p * h(co))
        sr = aT * a * (q * h.d1(cd) * rd + p * h.d1(co) * ro)
        return sr, sc

    def kernels(self, T):
        e, h, phi = self.e, self.h, self.phi
        q = self.q
        p = 1 - q
        p2 = 1 - 2 * q
        eta = e.eta
        n = T + 1
        cd = e.C[0][T, :n]
        co = e.C[1][T, :n]
        rd = e.R[0][T, :n]
        ro = e.R[1][T, :n]
        ra = e.RA[T, :n]
        ca = e.CA[T, :n]
        aa = self.alpha * self.a[T] * self.a[:n]
        h1d, h1o = h.d1(cd), h.d1(co)
        MRd = aa * (ra * h1d + ca * h.d2(cd) * rd)
        MRo = aa * (ra * h1o + ca * h.d2(co) * ro)
        MCd = aa * ca * h1d
        MCo = aa * ca * h1o
        K = np.empty((2, 2, n), dtype=e.dtype)
        K[0, 0] = q * MRd
        K[0, 1] = p * MRo
        K[1, 0] = q * MRo
        K[1, 1] = q * MRd + p2 * MRo
        KC = np.empty_like(K)
        KC[0, 0] = q * MCd
        KC[0, 1] = p * MCo
        KC[1, 0] = q * MCo
        KC[1, 1] = q * MCd + p2 * MCo
        vT = self.v[T]
        aT = self.a[T]
        S_RA = eta * ra.sum()
        self._S_RA = S_RA
        self._Kv = K[0, 0] + K[0, 1]
        s = self.alpha * phi.d1(vT) * aT * S_RA * self.v[:n]
        src = np.vstack([s, s])
        self._cache = (cd, co, rd, ro, ra, ca)
        return K, KC, K, src

    def scalars(self, T, nu):
        e, h, phi = self.e, self.h, self.phi
        q = self.q
        p = 1 - q
        eta = e.eta
        n = T + 1
        cd, co, rd, ro, ra, ca = self._cache
        aT, vT = self.a[T], self.v[T]
        a = self.a[:n]
        S_RA = self._S_RA
        if self.freeze_a:
            self.a[n] = aT
        else:
            da = self.alpha * (phi(vT) * S_RA
                               - eta * np.sum(ra * a * (q * h(cd) + p * h(co)))
                               - eta * np.sum(ca * a * (q * h.d1(cd) * rd + p * h.d1(co) * ro)))
            self.a[n] = aT + eta * da
        dv = -nu * vT + self.alpha * phi.d1(vT) * aT * S_RA - eta * np.dot(self._Kv, self.v[:n])
        self.v[n] = vT + eta * dv

    def finalize(self, T):
        pass


class SymmDMFT:
    """Run container. Either alpha (= abar/m) or abar must be given."""

    def __init__(self, kernel, link, m, eta=0.1, n_steps=100, alpha=None, abar=None,
                 a0=None, gamma0=None, freeze_a=False, v0=0.0, c0_o=0.0, inv_m=None,
                 dtype=float):
        if (alpha is None) == (abar is None):
            raise ValueError("give exactly one of alpha, abar")
        if (a0 is None) == (gamma0 is None):
            raise ValueError("give exactly one of a0, gamma0")
        self.m = m
        q = 1.0 / m if inv_m is None else inv_m
        self.inv_m = q
        self.alpha = alpha if alpha is not None else abar * q
        if gamma0 is not None:
            a0 = gamma0 / np.sqrt(q)
        self.kernel = kernel
        self.link = link if link is not None else pure_noise(1.0)
        self.eta = eta
        self.n_steps = n_steps
        self.plugin = SymmPlugin(kernel, self.link, self.alpha, q, a0, v0, freeze_a)
        self.engine = Engine(self.plugin, n_steps, eta, 2, dtype=dtype, c_init=[1.0, c0_o])

    def run(self, progress=None):
        self.engine.run(progress)
        return self

    # field views
    @property
    def C_d(self):
        return self.engine.C[0]

    @property
    def C_o(self):
        return self.engine.C[1]

    @property
    def R_d(self):
        return self.engine.R[0]

    @property
    def R_o(self):
        return self.engine.R[1]

    @property
    def a(self):
        return self.plugin.a

    @property
    def v(self):
        return self.plugin.v

    @property
    def nu(self):
        return self.engine.nu

    @property
    def C_A(self):
        return self.engine.CA

    @property
    def R_A(self):
        return self.engine.RA

    @property
    def t(self):
        return np.arange(self.engine.N) * self.eta

    def observables(self):
        return symm_observables(self)


def symm_observables(run):
    h, phi = run.kernel, run.link
    q = run.inv_m
    a, v = run.a, run.v
    cott = np.diagonal(run.C_o).copy()
    e_tr = -0.5 * np.diagonal(run.C_A).copy()
    e_ts = 0.5 * (phi.tau2 + phi.phi_norm2 - 2 * a * phi(v) + a * a * q * h(1.0)
                  + (1 - q) * a * a * h(cott))
    return {
        "t": run.t,
        "e_tr": e_tr,
        "e_ts": e_ts,
        "a": a.copy(),
        "gamma": a * np.sqrt(q),
        "v": v.copy(),
        "nu": run.nu.copy(),
        "C_o_tt": cott,
        "C_d_t0": run.C_d[:, 0].copy(),
    }


SYMM_COLUMNS = ["step", "t", "e_tr", "e_ts", "a", "gamma", "v", "nu", "C_o_tt", "C_d_t0"]
