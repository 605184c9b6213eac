"""Large-m asymptotics: closed forms, reduced two-time systems, mean-field ODEs.

Reduced systems are engine plugins (see engine.py). Time conventions:
  lazy regime 1   t_hat = m t (closed form)
  lazy regime 2   t (plugin on one species)
  mean-field 1    t (closed form, pure noise) and the ODE for (a, v)
  sqrt(m) regime  t / sqrt(m) (plugin, one species + a)
  fixed abar      t / m (plugin, two species)
"""
from dataclasses import dataclass

import numpy as np

from .dmft_symm import SymmDMFT
from .engine import Engine, SolverAbort
from .kernels import (CovarianceKernel, KernelError, TargetLink, effective_noise,
                      pure_noise, tilde_h)


@dataclass
class RegimeParams:
    alpha: float
    kernel: CovarianceKernel
    link: TargetLink = None
    gamma0: float = None
    a0: float = None
    regime: str = ""

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.link is None:
            self.link = pure_noise(1.0)

    @property
    def tau2(self):
        return self.link.tau2


class _Plugin:
    def attach(self, eng):
        self.e = eng

    def scalars(self, T, nu):
        pass

    def finalize(self, T):
        pass


def _kappa(p):
    h1 = p.kernel.d1(0.0)
    return p.alpha * p.gamma0 ** 2 * h1


# ---------------------------------------------------------------- lazy, t = O(1/m)

def lazy_pn_regime1(p, t, tp=None):
    """Closed forms in t_hat = m t. tp defaults to t (equal times); t >= tp assumed
    for the two-time entries and enforced by sorting."""
    k = _kappa(p)
    h = p.kernel
    t = np.asarray(t, dtype=float)
    tp = t if tp is None else np.asarray(tp, dtype=float)
    hi, lo = np.maximum(t, tp), np.minimum(t, tp)
    R_o = np.where(t > tp, np.exp(-k * (t - tp)) - 1, 0.0)
    C_o_tt = np.exp(-2 * k * t) - 1
    C_o = -1 + np.exp(-k * (hi + lo))
    # the leading constant of the displayed C_d would violate C_d(t,t) = 0; it is dropped
    C_d = np.exp(-k * (hi + lo)) - 0.5 * (np.exp(-2 * k * hi) + np.exp(-2 * k * lo))
    nu = -p.alpha * p.gamma0 ** 2 * (h.d1(1.0) + h.d1(0.0) * C_o_tt)
    e_tr = 0.5 * (p.tau2 + p.gamma0 ** 2 * h(1.0) + p.gamma0 ** 2 * h.d1(0.0) * C_o_tt)
    return {"R_o": R_o, "C_o_tt": C_o_tt, "C_o": C_o, "C_d": C_d, "nu": nu, "e_tr": e_tr,
            "plateau": 0.5 * (p.tau2 + p.gamma0 ** 2 * (h(1.0) - h.d1(0.0)))}


def lazy_si_regime1(p, t):
    """Single-index, frozen gamma, t_hat = m t; v_hat = sqrt(m) v."""
    h, phi = p.kernel, p.link
    h1 = h.d1(0.0)
    if h1 <= 0:
        raise KernelError("h'(0) = 0: lazy single-index regime 1 is singular")
    k = _kappa(p)
    g = p.gamma0
    t = np.asarray(t, dtype=float)
    vinf = phi.d1(0.0) / (g * h1)
    v = vinf * (1 - np.exp(-k * t))
    cott = vinf ** 2 - 1 - 2 * vinf ** 2 * np.exp(-k * t) + (1 + vinf ** 2) * np.exp(-2 * k * t)
    e = 0.5 * (p.tau2 + phi.phi_norm2 - 2 * g * phi.d1(0.0) * v + g * g * (h(1.0) + h1 * cott))
    plateau = 0.5 * (p.tau2 + phi.phi_norm2 - phi.d1(0.0) ** 2 / h1 + g * g * tilde_h(h)(1.0))
    return {"v": v, "C_o_tt": cott, "v_inf": vinf, "e_tr": e, "e_plateau": plateau}


# ---------------------------------------------------------------- lazy, t = O(1)

class LazyRegime2Plugin(_Plugin):
    def __init__(self, kernel, tau2, alpha, gamma0):
        self.h = kernel
        self.ht = tilde_h(kernel)
        self.tau2 = tau2
        self.alpha = alpha
        self.g2 = gamma0 ** 2

    def sigma(self, T):
        e, ht = self.e, self.ht
        cd = e.C[0][T, :T + 1]
        rd = e.R[0][T, :T + 1]
        return self.g2 * ht.d1(cd) * rd, self.tau2 + self.g2 * ht(cd)

    def kernels(self, T):
        e, ht = self.e, self.ht
        n = T + 1
        cd = e.C[0][T, :n]
        rd = e.R[0][T, :n]
        ra, ca = e.RA[T, :n], e.CA[T, :n]
        c = self.alpha * self.g2
        MR = c * (ra * ht.d1(cd) + ca * ht.d2(cd) * rd)
        MC = c * ca * ht.d1(cd)
        return MR[None, None], MC[None, None], MR[None, None], None


def lazy_pn_regime2_solve(p, eta=0.05, n_steps=200, progress=None):
    """Frozen-gamma second lazy regime. With a signal in p.link the run is the
    pure-noise problem at tau'^2 = effective_noise, plus the constant shift of C_o."""
    si = not p.link.pure_noise
    tau2 = effective_noise(p.link, p.kernel) if si else p.tau2
    eng = Engine(LazyRegime2Plugin(p.kernel, tau2, p.alpha, p.gamma0), n_steps, eta, 1)
    eng.run(progress)
    t = np.arange(n_steps + 1) * eta
    C_d, R_d = eng.C[0], eng.R[0]
    out = {"t": t, "C_d": C_d, "R_d": R_d, "nu": eng.nu.copy(),
           "e_tr": -0.5 * np.diagonal(eng.CA).copy(), "C_A": eng.CA, "R_A": eng.RA,
           "tau2_eff": tau2}
    if si:
        r1 = lazy_si_regime1(p, np.inf)
        out["v_inf"] = r1["v_inf"]
        out["C_o"] = -C_d + r1["v_inf"] ** 2
        out["e_ts"] = np.full(len(t), r1["e_plateau"])
    else:
        out["C_o"] = -C_d
        out["R_o"] = -R_d
    return out


# ---------------------------------------------------------------- mean field, t = O(1)

def mf_pn_regime1(p, t, tp=None):
    rho = p.alpha * p.a0 ** 2 * p.kernel.d1(0.0)
    if rho == 0:
        raise KernelError("rho0 = 0: mean-field regime-1 forms are singular")
    tau2 = p.tau2
    t = np.asarray(t, dtype=float)
    tp = t if tp is None else np.asarray(tp, dtype=float)
    hi, lo = np.maximum(t, tp), np.minimum(t, tp)
    R_o = np.where(t > tp, np.exp(-rho * (t - tp)) - 1, 0.0)
    lim = (tau2 - rho) / rho
    C_o = (((tau2 + rho) / rho * np.exp(-2 * rho * lo) - tau2 / rho * np.exp(-rho * lo))
           * np.exp(-rho * (hi - lo)) + lim - tau2 / rho * np.exp(-rho * lo))
    return {"R_o": R_o, "C_o": C_o, "rho0": rho, "limit": lim,
            "limit_t0": lim - tau2 / rho * np.exp(-rho * lo)}


def _mf_rhs(a, v, alpha, phi, h):
    m = len(a)
    G = np.outer(v, v)
    dv = alpha * a * (1 - v * v) * (phi.d1(v) - (h.d1(G) * a[None, :]) @ v / m)
    da = alpha * (phi(v) - (h(G) @ a) / m)
    return da, dv


def mf_energy(a, v, phi, h):
    a = np.atleast_2d(a)
    v = np.atleast_2d(v)
    m = a.shape[1]
    G = v[:, :, None] * v[:, None, :]
    quad = np.einsum("ti,tj,tij->t", a, a, h(G)) / m ** 2
    lin = (a * phi(v)).sum(axis=1) / m
    return 0.5 * (phi.tau2 + phi.phi_norm2 - 2 * lin + quad)


def mf_ode_solve(link, kernel, alpha, a0, v0=None, t_max=50.0, dt=1e-3, record_every=10):
    """Classical RK4 for the single-index mean-field ODE of heterogeneous neurons
    (pass length-1 arrays for the homogeneous system)."""
    a = np.atleast_1d(np.asarray(a0, dtype=float)).copy()
    v = np.zeros_like(a) if v0 is None else np.atleast_1d(np.asarray(v0, dtype=float)).copy()
    if np.any(np.abs(v) > 1):
        raise ValueError("|v_i(0)| must be <= 1")
    n = int(round(t_max / dt))
    ts, A, V = [0.0], [a.copy()], [v.copy()]
    f = lambda a_, v_: _mf_rhs(a_, v_, alpha, link, kernel)
    for k in range(1, n + 1):
        k1a, k1v = f(a, v)
        k2a, k2v = f(a + 0.5 * dt * k1a, v + 0.5 * dt * k1v)
        k3a, k3v = f(a + 0.5 * dt * k2a, v + 0.5 * dt * k2v)
        k4a, k4v = f(a + dt * k3a, v + dt * k3v)
        a = a + dt / 6 * (k1a + 2 * k2a + 2 * k3a + k4a)
        v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if np.any(np.abs(v) > 1 + 1e-9) or not np.all(np.isfinite(a)):
            raise SolverAbort(k, "|v| left [-1, 1]")
        if k % record_every == 0 or k == n:
            ts.append(k * dt)
            A.append(a.copy())
            V.append(v.copy())
    A, V = np.array(A), np.array(V)
    return {"t": np.array(ts), "a": A, "v": V, "e": mf_energy(A, V, link, kernel)}


# ---------------------------------------------------------------- mean field, t = O(sqrt m)

class SqrtMPlugin(_Plugin):
    """Also the p-spin system when a is frozen at 1 and c = 1."""

    def __init__(self, kernel_tilde, c, a0, freeze_a=False):
        self.ht = kernel_tilde
        self.c = c  # alpha tau^2
        self.a0 = a0
        self.freeze_a = freeze_a

    def attach(self, eng):
        self.e = eng
        self.a = np.zeros(eng.N)
        self.a[0] = self.a0
        self.energy = np.zeros(eng.N)

    def sigma(self, T):
        # the reduced system carries no residual pair of its own
        n = T + 1
        return np.zeros(n), np.zeros(n)

    def kernels(self, T):
        e, ht = self.e, self.ht
        n = T + 1
        cd = e.C[0][T, :n]
        rd = e.R[0][T, :n]
        aa = self.c * self.a[T] * self.a[:n]
        h2 = aa * ht.d2(cd) * rd
        self._g = ht.d1(cd) * rd
        self.energy[T] = -e.eta * np.sum(self._g)
        return -h2[None, None], -(aa * ht.d1(cd))[None, None], -h2[None, None], None

    def scalars(self, T, nu):
        if self.freeze_a:
            self.a[T + 1] = self.a[T]
        else:
            eta = self.e.eta
            self.a[T + 1] = self.a[T] + eta * self.c * eta * np.dot(self.a[:T + 1], self._g)

    def finalize(self, T):
        self.kernels(T)


def _run_sqrtm(kernel_tilde, c, a0, eta, n_steps, freeze_a, progress):
    if np.any(kernel_tilde.coeffs[:2] != 0):
        raise KernelError("tilde_h must have no constant or linear part")
    pl = SqrtMPlugin(kernel_tilde, c, a0, freeze_a)
    eng = Engine(pl, n_steps, eta, 1)
    eng.run(progress)
    return eng, pl


def mf_sqrtm_solve(p, eta=0.02, t_max=40.0, progress=None):
    n = int(round(t_max / eta))
    eng, pl = _run_sqrtm(tilde_h(p.kernel), p.alpha * p.tau2, p.a0, eta, n, False, progress)
    t = np.arange(n + 1) * eta
    k = max(2, int(0.2 * len(t)))
    slope = np.polyfit(t[-k:], pl.a[-k:], 1)[0]
    return {"t": t, "C_d": eng.C[0], "R_d": eng.R[0], "a": pl.a.copy(), "nu": eng.nu.copy(),
            "slope": slope}


def convergence_flag(x, frac=0.2, rtol=1e-3):
    k = max(2, int(frac * len(x)))
    tail = x[-k:]
    return bool(abs(tail[-1] - tail[0]) <= rtol * abs(tail[-1]))


def pspin_solve(kernel_tilde, eta=0.05, t_max=50.0, progress=None):
    if not isinstance(kernel_tilde, CovarianceKernel):
        kernel_tilde = CovarianceKernel(kernel_tilde)
    n = int(round(t_max / eta))
    eng, pl = _run_sqrtm(kernel_tilde, 1.0, 1.0, eta, n, True, progress)
    E = pl.energy
    return {"t": np.arange(n + 1) * eta, "C_d": eng.C[0], "R_d": eng.R[0], "nu": eng.nu.copy(),
            "energy": E.copy(), "E_estimate": float(E[-1]),
            "converged": convergence_flag(E)}


def pspin_threshold_energy(ck2, k):
    """-2 c_k sqrt((k-1)/k) for tilde_h = c_k^2 z^k."""
    return -2 * np.sqrt(ck2) * np.sqrt((k - 1) / k)


def a_inf_prediction(tau2, alpha, E):
    return -np.sqrt(tau2) * np.sqrt(alpha) * E


# ---------------------------------------------------------------- 1/m corrections

def mf_corrections_solve(kernel, tau2, alpha, eta=0.1, t_max=200.0, tail=0.3, h_step=1e-20, baseline_tol=0.1,
                         progress=None):
    """Mean-field baseline and its first-order 1/m correction for phi = sigma, a(0) = 1.

    The correction is the exact derivative of the discretized symmetric system with
    respect to q = 1/m at q = 0, taken by a complex step (no subtractive cancellation).
    Slopes are reported twice: from a tail fit of the corrections, and from the
    asymptotic linear system with v1, nu1 fitted on the baseline tail."""
    from .kernels import matched_link
    link = matched_link(kernel, tau2)
    n = int(round(t_max / eta))
    run = SymmDMFT(kernel, link, m=np.inf, eta=eta, n_steps=n, alpha=alpha, a0=1.0,
                   inv_m=1j * h_step, dtype=complex).run(progress)
    t = run.t
    a, v, nu = run.a, run.v, run.nu
    cott = np.diagonal(run.C_o)
    base = {"a": a.real.copy(), "v": v.real.copy(), "nu": nu.real.copy(), "C_o_tt": cott.real.copy()}
    corr = {"a": a.imag / h_step, "v": v.imag / h_step, "nu": nu.imag / h_step,
            "C_o_tt": cott.imag / h_step}
    if abs(base["a"][-1] - 1) > baseline_tol or abs(base["v"][-1] - 1) > baseline_tol:
        raise ValueError("mean-field baseline has not reached (1, 1); slopes undefined")
    k = max(3, int(tail * len(t)))
    tt = t[-k:]
    fit = {key: float(np.polyfit(tt, corr[key][-k:], 1)[0]) for key in corr}
    # v1, nu1: (v - 1) t and nu t over the last decade, extrapolated linearly in 1/t
    dec = t >= t[-1] / 10
    td = t[dec]
    v1 = float(np.polyfit(1 / td, (base["v"][dec] - 1) * td, 1)[1])
    nu1 = float(np.polyfit(1 / td, base["nu"][dec] * td, 1)[1])
    exact = mf_asymptotic_constants(kernel, alpha)
    return {"t": t, "baseline": base, "corrections": corr,
            "slopes_fit": {"a": fit["a"], "v": fit["v"], "nu": fit["nu"], "c": fit["C_o_tt"]},
            "slopes_linear": asymptotic_slopes(kernel, tau2, alpha, v1, nu1),
            "slopes_linear_exact_v1": asymptotic_slopes(kernel, tau2, alpha, exact["v1"], exact["nu1"]),
            "v1": v1, "nu1": nu1, "v1_exact": exact["v1"], "nu1_exact": exact["nu1"]}


def asymptotic_slopes(kernel, tau2, alpha, v1, nu1, sign=1.0):
    """Solve the 4x4 linear system for (a*, v*, nu*, c*) with phi_hat = h.
    sign=-1 flips the a*-term of the nu* equation (diagnostic variant)."""
    f, f1, f2 = kernel(1.0), kernel.d1(1.0), kernel.d2(1.0)
    A = np.array([
        [f, f1, 0, 0],
        [2 * f, 0, 0, f1],
        [-sign * f1 * alpha * (f2 - f1 - f1 ** 2), 0, -f1, 0],
        [0, 0, -2 * v1, -0.5 - nu1],
    ])
    b = np.array([0, 0, -2 * alpha * f * f2, -4 * v1 * alpha * tau2])
    x = np.linalg.solve(A, b)
    return {"a": x[0], "v": x[1], "nu": x[2], "c": x[3]}


def mf_asymptotic_constants(kernel, alpha):
    """Analytic v1, nu1 for phi = h from the 1/t approach to (1, 1)."""
    f, f1, f2 = kernel(1.0), kernel.d1(1.0), kernel.d2(1.0)
    K = f2 + f1 - f1 ** 2 / f
    v1 = -1 / (2 * alpha * K)
    return {"K": K, "v1": v1, "nu1": -alpha * K * v1}


# ---------------------------------------------------------------- fixed abar, t = O(m)

class FixedAbarPlugin(_Plugin):
    def __init__(self, kernel, tau2, abar):
        self.h = kernel
        self.tau2 = tau2
        self.abar = abar

    def sigma(self, T):
        e, h = self.e, self.h
        n = T + 1
        cd, co = e.C[0][T, :n], e.C[1][T, :n]
        rd, ro = e.R[0][T, :n], e.R[1][T, :n]
        return h.d1(cd) * rd + h.d1(co) * ro, self.tau2 + h(co)

    def kernels(self, T):
        e, h = self.e, self.h
        n = T + 1
        cd, co = e.C[0][T, :n], e.C[1][T, :n]
        rd, ro = e.R[0][T, :n], e.R[1][T, :n]
        ra, ca = e.RA[T, :n], e.CA[T, :n]
        ab = self.abar
        Md = ab * ca * h.d2(cd) * rd
        Mo = ab * (ca * h.d2(co) * ro + ra * h.d1(co))
        MCd = ab * ca * h.d1(cd)
        MCo = ab * ca * h.d1(co)
        z = np.zeros(n)
        KC = np.array([[Md, Mo], [z, Md + Mo]])
        KCR = np.array([[MCd, MCo], [MCo, MCo]])
        KR = np.array([[Md, z], [Mo, Md + Mo]])
        return KC, KCR, KR, None


def fixed_abar_solve(kernel, tau2, abar, eta=0.05, n_steps=400, stop_below=None, progress=None):
    """m -> infinity at fixed abar with a = 1, time in units of m. If stop_below is
    given the run stops once e_tr drops under it (the tail is then truncated)."""
    pl = FixedAbarPlugin(kernel, tau2, abar)
    eng = Engine(pl, n_steps, eta, 2, c_init=[1.0, 0.0])
    last = n_steps
    while eng.T < eng.N - 1:
        eng.step()
        if progress is not None:
            progress(eng.T)
        if stop_below is not None and -0.5 * eng.CA[eng.T - 1, eng.T - 1] < stop_below:
            last = eng.T - 1
            break
    else:
        eng._response_row(eng.T)
        eng._rest(eng.T)
    e_tr = -0.5 * np.diagonal(eng.CA)[:last + 1].copy()
    s = slice(0, last + 1)
    return {"t": np.arange(last + 1) * eta, "e_tr": e_tr, "C_d": eng.C[0][s, s],
            "C_o": eng.C[1][s, s], "R_d": eng.R[0][s, s], "R_o": eng.R[1][s, s],
            "nu": eng.nu[s].copy()}
