"""Full DMFT for m neurons with arbitrary (a0, C0, v0) initialization.

Fields are stored as C[i, j, t, s] (with C[i,j,t,s] = C[j,i,s,t]) and
R[i, j, t, s] (zero for s >= t). The Lagrange multiplier nu_i is taken from
the diagonal of the correlation update itself, so that C_ii(t,t) stays at 1
up to roundoff.
"""
import numpy as np

from .engine import SolverAbort
from .kernels import pure_noise
from .timegrid import ResponseSolver


def _nsum(x):
    """Sum over axis 0 after sorting it: the result does not depend on how
    neurons are labelled, so relabelled runs agree bit for bit."""
    return np.sort(x, axis=0).sum(axis=0)


class InitialCondition:
    def __init__(self, a0, C0=None, v0=None):
        a0 = np.asarray(a0, dtype=float)
        m = len(a0)
        C0 = np.eye(m) if C0 is None else np.asarray(C0, dtype=float)
        v0 = np.zeros(m) if v0 is None else np.asarray(v0, dtype=float)
        if C0.shape != (m, m) or not np.allclose(C0, C0.T):
            raise ValueError("C0 must be a symmetric m x m matrix")
        if not np.allclose(np.diag(C0), 1.0):
            raise ValueError("C0 must have unit diagonal")
        if np.linalg.eigvalsh(C0).min() < -1e-10:
            raise ValueError("C0 must be positive semidefinite")
        if np.any(np.abs(v0) > 1):
            raise ValueError("|v0_i| must be <= 1")
        self.a0, self.C0, self.v0, self.m = a0, C0, v0, m


class GeneralDMFT:
    def __init__(self, kernel, link, init, abar, eta=0.1, n_steps=100, freeze_a=False):
        self.h = kernel
        self.phi = link if link is not None else pure_noise(1.0)
        self.init = init
        self.m = m = init.m
        self.abar = abar
        self.eta = eta
        self.freeze_a = freeze_a
        N = n_steps + 1
        self.N = N
        self.C = np.zeros((m, m, N, N))
        self.R = np.zeros((m, m, N, N))
        self.C[:, :, 0, 0] = init.C0
        self.a = np.zeros((N, m))
        self.v = np.zeros((N, m))
        self.nu = np.zeros((N, m))
        self.a[0] = init.a0
        self.v[0] = init.v0
        self.SC = np.zeros((N, N))
        self.SR = np.zeros((N, N))
        self.resp = ResponseSolver(N, eta)
        self.T = 0

    @property
    def R_A(self):
        return self.resp.RA

    @property
    def C_A(self):
        return self.resp.CA

    @property
    def t(self):
        return np.arange(self.N) * self.eta

    def _sigma(self, T):
        h, phi, m = self.h, self.phi, self.m
        n = T + 1
        c = self.C[:, :, T, :n]
        r = self.R[:, :, T, :n]
        aT = self.a[T]
        a = self.a[:n]  # (n, m)
        aa = aT[:, None, None] * a.T[None, :, :]
        # sum_ij a_i(T) a_j(s) f(C_ij(T,s))
        sc = _nsum((aa * h(c)).reshape(m * m, n)) / m ** 2
        lin = _nsum((a * phi(self.v[:n])).T) / m
        sc = self.phi.tau2 + phi.phi_norm2 + sc - lin[T] - lin
        sr = _nsum((aa * h.d1(c) * r).reshape(m * m, n)) / m ** 2
        self.SR[T, :n] = sr
        self.SC[T, :n] = sc
        self.SC[:T, T] = sc[:T]
        self.resp.add_row(self.SR[T, :n], self.SC)

    def _memory(self, T):
        h, m = self.h, self.m
        eta = self.eta
        n = T + 1
        c = self.C[:, :, T, :n]
        r = self.R[:, :, T, :n]
        ra = self.R_A[T, :n]
        ca = self.C_A[T, :n]
        aa = (self.abar / m) * self.a[T][:, None, None] * self.a[:n].T[None, :, :]
        MR = aa * (ra * h.d1(c) + ca * h.d2(c) * r)
        MC = aa * ca * h.d1(c)
        # per-neuron partial contractions P[l, i, j, tb] summed over s along a
        # contiguous axis, then an order-free sum over l
        Cs = self.C[:, :, :n, :n]  # C_lj(s, tb) = C[l, j, s, tb], symmetric under (l,s)<->(j,tb)
        Rs = self.R[:, :, :n, :n]
        Ct = np.ascontiguousarray(Cs.transpose(0, 1, 3, 2))  # [l, j, tb, s]
        Rt = np.ascontiguousarray(Rs.transpose(1, 0, 2, 3))  # R_jl(tb, s) -> [l, j, tb, s]
        Rrt = np.ascontiguousarray(Rs.transpose(0, 1, 3, 2))  # R_lj(s, tb) -> [l, j, tb, s]
        MRl = MR.transpose(1, 0, 2)[:, :, None, None, :]
        MCl = MC.transpose(1, 0, 2)[:, :, None, None, :]
        # sum_l sum_s MR_il(T,s) C_lj(s,tb) and sum_l sum_s MC_il(T,s) R_jl(tb,s)
        memC = _nsum((MRl * Ct[:, None]).sum(axis=-1))
        memCR = _nsum((MCl * Rt[:, None]).sum(axis=-1))
        memR = _nsum((MRl * Rrt[:, None]).sum(axis=-1))
        S_RA = eta * ra.sum()
        phi = self.phi
        aT, vT = self.a[T], self.v[T]
        src = (self.abar / m) * (aT * phi.d1(vT))[:, None, None] * S_RA * self.v[:n].T[None, :, :]
        rest = src - (eta / m) * memC - (eta / m) * memCR
        return MR, MC, rest, memR, S_RA

    def step(self):
        T = self.T
        m, eta, h, phi = self.m, self.eta, self.h, self.phi
        n = T + 1
        self._sigma(T)
        MR, MC, rest, memR, S_RA = self._memory(T)
        ii = np.arange(m)
        nu = rest[ii, ii, T].copy()
        self.nu[T] = nu
        aT, vT = self.a[T], self.v[T]
        if self.freeze_a:
            self.a[n] = aT
        else:
            ra = self.R_A[T, :n]
            ca = self.C_A[T, :n]
            c = self.C[:, :, T, :n]  # C_il(T,s) = C_li(s,T)
            r = self.R[:, :, T, :n]
            a = self.a[:n]
            t1 = _nsum((h(c) * (ra * a.T)[None]).sum(axis=2).T) / m
            t2 = _nsum((h.d1(c) * r * (ca * a.T)[None]).sum(axis=2).T) / m
            da = -(self.abar / m) * eta * (t1 - phi(vT) * ra.sum()) - (self.abar / m) * eta * t2
            self.a[n] = aT + eta * da
        memv = _nsum((MR * self.v[:n].T[None]).sum(axis=2).T)
        dv = -nu * vT + (self.abar / m) * aT * phi.d1(vT) * S_RA - (eta / m) * memv
        self.v[n] = vT + eta * dv
        D = rest - nu[:, None, None] * self.C[:, :, T, :n]
        newC = self.C[:, :, T, :n] + eta * D
        self.C[:, :, n, :n] = newC
        self.C[:, :, :n, n] = newC.transpose(1, 0, 2)
        self.C[:, :, n, n] = self.C[:, :, T, T] + eta * (D[:, :, T] + D[:, :, T].T)
        newR = (1 - eta * nu)[:, None, None] * self.R[:, :, T, :n] - (eta * eta / m) * memR
        newR[ii, ii, T] += 1.0
        self.R[:, :, n, :n] = newR
        self.T = n
        if not np.all(np.isfinite(newC)) or not np.all(np.isfinite(self.a[n])):
            raise SolverAbort(n)

    def run(self, progress=None):
        while self.T < self.N - 1:
            self.step()
            if progress is not None:
                progress(self.T)
        self._sigma(self.T)
        _, _, rest, _, _ = self._memory(self.T)
        ii = np.arange(self.m)
        self.nu[self.T] = rest[ii, ii, self.T]
        return self

    def observables(self):
        return general_observables(self)


def general_observables(run):
    h, phi, m = run.h, run.phi, run.m
    N = run.N
    ctt = run.C[:, :, np.arange(N), np.arange(N)]  # (m, m, N)
    a = run.a
    e_tr = -0.5 * np.diagonal(run.C_A).copy()
    quad = _nsum((a.T[:, None, :] * a.T[None, :, :] * h(ctt)).reshape(m * m, N)) / m ** 2
    lin = _nsum((a * phi(run.v)).T) / m
    e_ts = 0.5 * (phi.tau2 + phi.phi_norm2 + quad - 2 * lin)
    return {"t": run.t, "e_tr": e_tr, "e_ts": e_ts, "a": a.copy(), "v": run.v.copy(),
            "nu": run.nu.copy(), "C_t0": run.C[:, :, :, 0].transpose(2, 0, 1).copy(),
            "residual_corr": -run.C_A.copy()}


def general_columns(m):
    return (["step", "t", "e_tr", "e_ts"] + ["a_%d" % (i + 1) for i in range(m)]
            + ["v_%d" % (i + 1) for i in range(m)] + ["nu_%d" % (i + 1) for i in range(m)]
            + ["C_%d_%d_t0" % (i + 1, j + 1) for i in range(m) for j in range(m)])


def general_table(obs):
    """Rows matching general_columns(m)."""
    N, m = obs["a"].shape
    return np.column_stack([np.arange(N), obs["t"], obs["e_tr"], obs["e_ts"], obs["a"], obs["v"],
                            obs["nu"], obs["C_t0"].reshape(N, m * m)])
