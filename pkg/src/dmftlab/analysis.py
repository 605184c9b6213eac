"""Post-processing of finished runs: relaxation times, threshold fits,
threshold transfer, parametric resampling and collapse distances."""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .kernels import effective_noise

DID_NOT_RELAX = "did-not-relax"


@dataclass
class RelaxationResult:
    t_rel: object  # float, or DID_NOT_RELAX
    epsilon: float
    run_id: str = ""

    @property
    def relaxed(self):
        return self.t_rel != DID_NOT_RELAX


def relaxation_time(t, e_tr, tau2, epsilon=1e-7, run_id=""):
    """First time e_tr < epsilon * tau2, interpolated linearly in log e_tr."""
    t = np.asarray(t, dtype=float)
    e = np.asarray(e_tr, dtype=float)
    thr = epsilon * tau2
    below = np.nonzero(e < thr)[0]
    if len(below) == 0:
        return RelaxationResult(DID_NOT_RELAX, epsilon, run_id)
    j = below[0]
    if j == 0:
        return RelaxationResult(0.0, epsilon, run_id)
    e0, e1 = e[j - 1], e[j]
    if e1 > 0 and e0 > 0:
        w = (np.log(e0) - np.log(thr)) / (np.log(e0) - np.log(e1))
    else:
        w = (e0 - thr) / (e0 - e1)
    return RelaxationResult(float(t[j - 1] + w * (t[j] - t[j - 1])), epsilon, run_id)


@dataclass
class PowerLawFit:
    x_star: float
    nu: float
    L: float
    residual: float
    ok: bool = True
    monotone: bool = True
    side: str = "below"
    notes: list = field(default_factory=list)

    def predict(self, x):
        return self.L * np.abs(self.x_star - np.asarray(x, dtype=float)) ** (-self.nu)


def _linfit(x, t, xs, fix_nu):
    u = np.log(np.abs(xs - x))
    y = np.log(t)
    if fix_nu is None:
        A = np.c_[np.ones_like(u), -u]
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        logL, nu = coef
    else:
        nu = fix_nu
        logL = np.mean(y + nu * u)
    r = y - (logL - nu * u)
    return np.sqrt(np.dot(r, r)), logL, nu


def fit_powerlaw(x, t_rel, fix_nu=None, span=50.0, ngrid=400):
    """t_rel = L |x* - x|^(-nu): scan x* on a log grid beyond the data, then
    polish with bounded Brent on the residual norm of the log-linear fit."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t_rel, dtype=float)
    if len(x) < 4:
        raise ValueError("need at least 4 relaxed points")
    if np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise ValueError("t_rel must be finite and positive")
    o = np.argsort(x)
    x, t = x[o], t[o]
    notes = []
    d = np.diff(t)
    up = np.sum(d > 0) >= np.sum(d < 0)
    monotone = bool(np.all(d > 0) if up else np.all(d < 0))
    if not monotone:
        notes.append("t_rel not monotone in x")
        warnings.warn("t_rel not monotone in x")
    width = x[-1] - x[0]
    if width <= 0:
        raise ValueError("need distinct x values")
    edge = x[-1] if up else x[0]
    sgn = 1.0 if up else -1.0
    # distance of x* from the data edge, log-spaced
    dist = np.geomspace(width * 1e-6, width * span, ngrid)
    res = np.array([_linfit(x, t, edge + sgn * q, fix_nu)[0] for q in dist])
    i = int(np.argmin(res))
    ok = 0 < i < ngrid - 1
    if not ok:
        notes.append("x* search bracket exhausted")
    lo, hi = dist[max(i - 1, 0)], dist[min(i + 1, ngrid - 1)]
    f = lambda q: _linfit(x, t, edge + sgn * q, fix_nu)[0]
    r = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                        options={"xatol": 1e-14 * max(1.0, hi)})
    q = r.x if r.fun <= res[i] else dist[i]
    resid, logL, nu = _linfit(x, t, edge + sgn * q, fix_nu)
    if nu <= 0:
        ok = False
        notes.append("non-positive exponent")
    return PowerLawFit(float(edge + sgn * q), float(nu), float(np.exp(logL)), float(resid),
                       ok, monotone, "below" if up else "above", notes)


def gamma_star_transfer(gamma_star_pn, link, kernel):
    """Threshold for a target with signal from the unit-noise pure-noise threshold."""
    return float(np.sqrt(effective_noise(link, kernel)) * gamma_star_pn)


def parametric_curve(x, y, n_points=200, window=None):
    """Resample y(x) on a uniform x grid; x must be strictly monotone on the window."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is not None:
        s = slice(*window)
        x, y = x[s], y[s]
    d = np.diff(x)
    if len(x) < 2 or np.all(d == 0):
        raise ValueError("x is constant")
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("x is not strictly monotone; restrict the window")
    if d[0] < 0:
        x, y = x[::-1], y[::-1]
    xg = np.linspace(x[0], x[-1], n_points)
    return xg, np.interp(xg, x, y)


def collapse_distance(runs, time_exponent=0.0, value_rescale=None, reference=None, n_points=500):
    """runs: list of (m, t, y). Time is rescaled as t / m^p and values by
    value_rescale(y, m) (identity if None). Returns sup distances between
    consecutive widths, or to `reference` = (t, y) if given."""
    if len(runs) < 2 and reference is None:
        raise ValueError("need at least two runs")
    runs = sorted(runs, key=lambda r: r[0])
    curves = []
    for m, t, y in runs:
        ts = np.asarray(t, dtype=float) / m ** time_exponent
        ys = np.asarray(y, dtype=float)
        if value_rescale is not None:
            ys = value_rescale(ys, m)
        curves.append((m, ts, ys))
    lo = max(c[1][0] for c in curves)
    hi = min(c[1][-1] for c in curves)
    if reference is not None:
        lo, hi = max(lo, reference[0][0]), min(hi, reference[0][-1])
    if not hi > lo:
        raise ValueError("empty common window")
    g = np.linspace(lo, hi, n_points)
    vals = [(m, np.interp(g, ts, ys)) for m, ts, ys in curves]
    if reference is not None:
        ref = np.interp(g, reference[0], reference[1])
        dists = [(m, float(np.max(np.abs(v - ref)))) for m, v in vals]
    else:
        dists = [((vals[i][0], vals[i + 1][0]), float(np.max(np.abs(vals[i + 1][1] - vals[i][1]))))
                 for i in range(len(vals) - 1)]
    dd = [d for _, d in dists]
    return {"window": (lo, hi), "distances": dists,
            "decreasing": bool(all(b < a for a, b in zip(dd, dd[1:])))}
