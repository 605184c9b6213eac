"""Command line runner: run / compare / fit-threshold / collapse.

Configs are single JSON documents validated by pydantic; every run directory
gets its CSVs, an optional summary (key=value lines) and manifest.json.
"""
import copy
import hashlib
import json
import logging
import os
import resource
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Literal, Optional, Union

import click
import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from . import __version__
from . import analysis, scaling
from .dmft_general import GeneralDMFT, InitialCondition, general_columns, general_table
from .dmft_symm import SYMM_COLUMNS, SymmDMFT
from .engine import SolverAbort
from .kernels import TargetLink, kernel_from_config, matched_link, pure_noise, tilde_h
from .timegrid import CausalField

log = logging.getLogger("dmftlab")

REGIMES = ("lazy_pn_regime1", "lazy_si_regime1", "lazy_pn_regime2", "mf_pn_regime1",
           "mf_sqrtm", "pspin", "mf_ode", "mf_corrections")
ENGINES = ("symm", "general", "gp_sim", "sgd_sim", "fixed_abar")
OUT_ENV = "DMFTLAB_OUT"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelCfg(_Strict):
    h_coeffs: Optional[List[float]] = None
    sigma_hermite: Optional[List[float]] = None
    phi_hermite: Optional[List[float]] = None
    phi_hat_coeffs: Optional[List[float]] = None
    phi_norm2: float = 0.0
    tau2: float = 1.0
    matched: bool = False

    @model_validator(mode="after")
    def _one_kernel(self):
        if (self.h_coeffs is None) == (self.sigma_hermite is None):
            raise ValueError("give exactly one of h_coeffs, sigma_hermite")
        if self.phi_hermite is not None and self.sigma_hermite is None:
            raise ValueError("phi_hermite requires sigma_hermite")
        if self.tau2 < 0 or self.phi_norm2 < 0:
            raise ValueError("tau2 and phi_norm2 must be >= 0")
        return self


class InitCfg(_Strict):
    type: Literal["mean_field", "lazy"] = "mean_field"
    a0: Optional[Union[float, List[float]]] = None
    gamma0: Optional[float] = None
    freeze_a: bool = False
    C0: Optional[List[List[float]]] = None
    v0: Optional[Union[float, List[float]]] = None

    @model_validator(mode="after")
    def _scale(self):
        if (self.a0 is None) == (self.gamma0 is None):
            raise ValueError("give exactly one of a0, gamma0")
        if self.type == "lazy" and self.gamma0 is None:
            raise ValueError("lazy init takes gamma0")
        if self.type == "mean_field" and self.a0 is None:
            raise ValueError("mean_field init takes a0")
        return self


class NetworkCfg(_Strict):
    m: Optional[int] = None
    alpha: Optional[Union[float, List[float]]] = None
    alpha_bar: Optional[Union[float, List[float]]] = None
    init: InitCfg = InitCfg(a0=1.0)

    @model_validator(mode="after")
    def _one_alpha(self):
        if (self.alpha is None) == (self.alpha_bar is None):
            raise ValueError("give exactly one of alpha, alpha_bar")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be >= 1")
        return self


class GridCfg(_Strict):
    eta: float = 0.1
    t_max: float = 10.0

    @field_validator("eta", "t_max")
    @classmethod
    def _pos(cls, v):
        if not v > 0:
            raise ValueError("must be > 0")
        return v


class SimCfg(_Strict):
    n: Optional[int] = None
    d: int = 100
    realizations: int = 100
    batch: int = 100
    eta_sgd: float = 0.1
    test_n: int = 10000
    tensor_dtype: Literal["float64", "float32"] = "float64"
    record_every: int = 1


class ExperimentConfig(_Strict):
    model: ModelCfg
    network: NetworkCfg
    grid: GridCfg = GridCfg()
    engine: str = "symm"
    sim: Optional[SimCfg] = None
    seeds: Optional[Union[int, List[int]]] = None
    output: Optional[str] = None
    epsilon: float = 1e-7
    save_fields: bool = False

    @field_validator("engine")
    @classmethod
    def _engine(cls, v):
        if v in ENGINES:
            return v
        if v.startswith("scaling:") and v.split(":", 1)[1] in REGIMES:
            return v
        raise ValueError("unknown engine %r; expected one of %s or scaling:<%s>"
                         % (v, ", ".join(ENGINES), "|".join(REGIMES)))

    @model_validator(mode="after")
    def _needs(self):
        if self.engine in ("symm", "general", "gp_sim", "sgd_sim") and self.network.m is None:
            raise ValueError("network.m is required for engine %s" % self.engine)
        if self.engine in ("gp_sim", "sgd_sim") and self.sim is None:
            raise ValueError("engine %s needs a sim section" % self.engine)
        if self.engine == "sgd_sim" and self.model.sigma_hermite is None:
            raise ValueError("sgd_sim needs model.sigma_hermite")
        return self


def format_errors(err):
    return "\n".join("%s: %s" % (".".join(str(x) for x in e["loc"]) or "<root>", e["msg"])
                     for e in err.errors())


def load_config(path):
    with open(path) as fh:
        return ExperimentConfig.model_validate(json.load(fh))


def config_hash(cfg):
    blob = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------- model objects

def build_model(mc):
    kernel = kernel_from_config(mc.model_dump())
    if mc.matched:
        return kernel, matched_link(kernel, mc.tau2)
    if mc.phi_hermite is not None:
        s = np.asarray(mc.sigma_hermite, dtype=float)
        f = np.asarray(mc.phi_hermite, dtype=float)
        K = max(len(s), len(f))
        s, f = np.pad(s, (0, K - len(s))), np.pad(f, (0, K - len(f)))
        return kernel, TargetLink(s * f, float(np.sum(f ** 2)), mc.tau2)
    if mc.phi_hat_coeffs is not None:
        return kernel, TargetLink(mc.phi_hat_coeffs, mc.phi_norm2, mc.tau2)
    return kernel, pure_noise(mc.tau2)


def expand_sweep(cfg):
    """One config per point of a list-valued alpha / alpha_bar."""
    net = cfg.network
    for key in ("alpha", "alpha_bar"):
        val = getattr(net, key)
        if isinstance(val, list):
            pts = []
            for i, x in enumerate(val):
                c = cfg.model_copy(deep=True)
                setattr(c.network, key, float(x))
                pts.append(("point_%03d_%s=%s" % (i, key, repr(float(x))), {key: float(x)}, c))
            return pts
    return [("", {}, cfg)]


def _alpha_pair(cfg):
    net = cfg.network
    if net.alpha is not None:
        alpha = float(net.alpha)
        abar = alpha * net.m if net.m else None
    else:
        abar = float(net.alpha_bar)
        alpha = abar / net.m if net.m else None
    return alpha, abar


def _seeds(cfg, n, base=None):
    if base is not None:
        return list(range(base, base + n))
    if isinstance(cfg.seeds, list):
        if len(cfg.seeds) < n:
            raise click.UsageError("config lists %d seeds, %d needed" % (len(cfg.seeds), n))
        return cfg.seeds[:n]
    b = 0 if cfg.seeds is None else int(cfg.seeds)
    return list(range(b, b + n))


# ---------------------------------------------------------------- output

def write_csv(path, columns, rows):
    rows = np.asarray(rows)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(x) for x in r) + "\n")


def _fmt(x):
    x = float(x)
    if not np.isfinite(x):
        return str(x)
    if x == int(x) and abs(x) < 2 ** 53:
        return str(int(x))
    return "%.17g" % x


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {c: data[:, i] for i, c in enumerate(header)}


def write_summary(path, d):
    with open(path, "w") as fh:
        for k in sorted(d):
            v = d[k]
            if isinstance(v, (float, np.floating)):
                v = repr(float(v))
            fh.write("%s=%s\n" % (k, v))


def read_summary(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------- engines

def _steps(cfg):
    return int(round(cfg.grid.t_max / cfg.grid.eta))


def _progress(name, total):
    every = max(1, total // 10)

    def cb(k):
        if k % every == 0 or k == total:
            log.info("%s: %d/%d", name, k, total)
    return cb


def run_symm(cfg, outdir):
    kernel, link = build_model(cfg.model)
    alpha, _ = _alpha_pair(cfg)
    ini = cfg.network.init
    n = _steps(cfg)
    kw = dict(gamma0=ini.gamma0) if ini.type == "lazy" else dict(a0=float(np.mean(ini.a0)))
    run = SymmDMFT(kernel, link, m=cfg.network.m, eta=cfg.grid.eta, n_steps=n, alpha=alpha,
                   freeze_a=ini.freeze_a, v0=float(ini.v0 or 0.0), **kw)
    run.run(_progress("symm", n))
    o = run.observables()
    rows = np.column_stack([np.arange(n + 1)] + [o[c] for c in SYMM_COLUMNS[1:]])
    write_csv(outdir / "symm.csv", SYMM_COLUMNS, rows)
    if cfg.save_fields:
        for name in ("C_d", "C_o"):
            CausalField.from_array(getattr(run, name), symmetric=True).dump(outdir / (name + ".bin"), run.eta)
        for name in ("R_d", "R_o"):
            CausalField.from_array(getattr(run, name)).dump(outdir / (name + ".bin"), run.eta)
    return {"e_tr_final": o["e_tr"][-1], "a_final": o["a"][-1]}


def _general_init(cfg):
    m = cfg.network.m
    ini = cfg.network.init
    if ini.type == "lazy":
        a0 = np.full(m, ini.gamma0 * np.sqrt(m))
    else:
        a0 = np.broadcast_to(np.asarray(ini.a0, dtype=float), (m,)).copy()
    v0 = None if ini.v0 is None else np.broadcast_to(np.asarray(ini.v0, dtype=float), (m,)).copy()
    return InitialCondition(a0, ini.C0, v0)


def run_general(cfg, outdir):
    kernel, link = build_model(cfg.model)
    _, abar = _alpha_pair(cfg)
    n = _steps(cfg)
    run = GeneralDMFT(kernel, link, _general_init(cfg), abar, cfg.grid.eta, n,
                      freeze_a=cfg.network.init.freeze_a)
    run.run(_progress("general", n))
    o = run.observables()
    write_csv(outdir / "general.csv", general_columns(run.m), general_table(o))
    return {"e_tr_final": o["e_tr"][-1]}


def run_gp_sim(cfg, outdir, jobs=1, seed=None):
    from .gaussian_sim import mc_average
    kernel, link = build_model(cfg.model)
    sim = cfg.sim
    m = cfg.network.m
    _, abar = _alpha_pair(cfg)
    n = sim.n if sim.n is not None else int(round(abar * sim.d))
    ini = _general_init(cfg)
    steps = _steps(cfg)
    seeds = _seeds(cfg, sim.realizations, seed)
    r = mc_average(seeds, n, sim.d, kernel, link, ini.a0, ini.C0, cfg.grid.eta, steps,
                   freeze_a=cfg.network.init.freeze_a, batch=8, jobs=jobs,
                   tensor_dtype=np.dtype(sim.tensor_dtype).type,
                   progress=lambda k: log.info("gp_sim: %d/%d realizations", min(k, len(seeds)), len(seeds)))
    cols = ["step", "t", "e_tr", "e_tr_stderr"]
    parts = [np.arange(steps + 1), r["t"], r["e_tr"], r["e_tr_stderr"]]
    for i in range(m):
        cols += ["a_%d" % (i + 1), "a_%d_stderr" % (i + 1)]
        parts += [r["a"][:, i], r["a_stderr"][:, i]]
    for i in range(m):
        cols += ["v_%d" % (i + 1), "v_%d_stderr" % (i + 1)]
        parts += [r["v"][:, i], r["v_stderr"][:, i]]
    for i in range(m):
        for j in range(m):
            cols += ["C_%d_%d_t0" % (i + 1, j + 1), "C_%d_%d_t0_stderr" % (i + 1, j + 1)]
            parts += [r["C_t0"][:, i, j], r["C_t0_stderr"][:, i, j]]
    write_csv(outdir / "gp_sim.csv", cols, np.column_stack(parts))
    return {"n": n, "realizations": len(seeds)}


SGD_COLUMNS = ["seed"] + SYMM_COLUMNS


def run_sgd_sim(cfg, outdir, jobs=1, seed=None):
    from .network_sim import sgd_ensemble
    mc, sim = cfg.model, cfg.sim
    alpha, _ = _alpha_pair(cfg)
    m = cfg.network.m
    ini = cfg.network.init
    a0 = float(np.mean(ini.a0)) if ini.a0 is not None else ini.gamma0 * np.sqrt(m)
    f = mc.phi_hermite if mc.phi_hermite is not None else [0.0]
    seeds = _seeds(cfg, sim.realizations, seed)
    r = sgd_ensemble(seeds, m, sim.d, alpha, mc.sigma_hermite, f, np.sqrt(mc.tau2), a0=a0,
                     eta=sim.eta_sgd, batch=sim.batch, t_max=cfg.grid.t_max, test_n=sim.test_n,
                     record_every=sim.record_every, jobs=jobs)
    nan = np.full(len(r["t"]), np.nan)
    rows = []
    for sd, run in zip(seeds, r["runs"]):
        rows.append(np.column_stack([np.full(len(run["t"]), sd), run["step"], run["t"], run["e_tr"],
                                     run["e_ts"], run["a"], run["a"] / np.sqrt(m), run["v"], nan,
                                     run["C_o_tt"], run["C_d_t0"]]))
    write_csv(outdir / "sgd.csv", SGD_COLUMNS, np.vstack(rows))
    cols = SYMM_COLUMNS + ["a_stderr", "v_stderr", "e_tr_stderr"]
    mean = np.column_stack([r["step"], r["t"], r["e_tr"], r["e_ts"], r["a"], r["a"] / np.sqrt(m),
                            r["v"], nan, r["C_o_tt"], r["C_d_t0"], r["a_stderr"], r["v_stderr"],
                            r["e_tr_stderr"]])
    write_csv(outdir / "sgd_mean.csv", cols, mean)
    return {"n": r["n"], "realizations": len(seeds)}


def run_fixed_abar(cfg, outdir):
    kernel, link = build_model(cfg.model)
    _, abar = _alpha_pair(cfg)
    if abar is None:
        abar = float(cfg.network.alpha_bar)
    n = _steps(cfg)
    r = scaling.fixed_abar_solve(kernel, link.tau2, abar, cfg.grid.eta, n,
                                 stop_below=0.1 * cfg.epsilon * link.tau2,
                                 progress=_progress("fixed_abar", n))
    k = len(r["t"])
    rows = np.column_stack([np.arange(k), r["t"], r["e_tr"], r["nu"], r["C_d"][:, 0],
                            np.diagonal(r["C_o"])])
    write_csv(outdir / "fixed_abar.csv", ["step", "t", "e_tr", "nu", "C_d_t0", "C_o_tt"], rows)
    rel = analysis.relaxation_time(r["t"], r["e_tr"], link.tau2, cfg.epsilon)
    return {"abar": abar, "t_rel": rel.t_rel, "epsilon": cfg.epsilon}


def run_scaling(cfg, outdir):
    regime = cfg.engine.split(":", 1)[1]
    kernel, link = build_model(cfg.model)
    net = cfg.network
    ini = net.init
    alpha = float(net.alpha) if net.alpha is not None else float(net.alpha_bar) / net.m
    p = scaling.RegimeParams(alpha, kernel, link, gamma0=ini.gamma0,
                             a0=None if ini.a0 is None else float(np.mean(ini.a0)), regime=regime)
    eta, tmax = cfg.grid.eta, cfg.grid.t_max
    n = _steps(cfg)
    t = np.arange(n + 1) * eta
    step = np.arange(n + 1)
    summary = {}
    if regime == "lazy_pn_regime1":
        r = scaling.lazy_pn_regime1(p, t)
        r0 = scaling.lazy_pn_regime1(p, t, np.zeros_like(t))
        cols = ["step", "t_hat", "R_o_t0", "C_o_tt", "C_o_t0", "C_d_t0", "nu", "e_tr"]
        rows = np.column_stack([step, t, r0["R_o"], r["C_o_tt"], r0["C_o"], r0["C_d"], r["nu"], r["e_tr"]])
        summary["plateau"] = r["plateau"]
    elif regime == "lazy_si_regime1":
        r = scaling.lazy_si_regime1(p, t)
        cols = ["step", "t_hat", "v_hat", "C_o_tt", "e_tr"]
        rows = np.column_stack([step, t, r["v"], r["C_o_tt"], r["e_tr"]])
        summary.update(v_inf=r["v_inf"], e_plateau=r["e_plateau"])
    elif regime == "lazy_pn_regime2":
        r = scaling.lazy_pn_regime2_solve(p, eta, n, _progress(regime, n))
        cols = ["step", "t", "e_tr", "nu", "C_d_t0"]
        parts = [step, t, r["e_tr"], r["nu"], r["C_d"][:, 0]]
        if "e_ts" in r:
            cols.append("e_ts")
            parts.append(r["e_ts"])
            summary["v_inf"] = r["v_inf"]
        rows = np.column_stack(parts)
        summary["tau2_eff"] = r["tau2_eff"]
    elif regime == "mf_pn_regime1":
        r = scaling.mf_pn_regime1(p, t)
        r0 = scaling.mf_pn_regime1(p, t, np.zeros_like(t))
        cols = ["step", "t", "R_o_t0", "C_o_tt", "C_o_t0"]
        rows = np.column_stack([step, t, r0["R_o"], r["C_o"], r0["C_o"]])
        summary.update(rho0=r["rho0"], limit=r["limit"])
    elif regime == "mf_sqrtm":
        r = scaling.mf_sqrtm_solve(p, eta, tmax, _progress(regime, n))
        cols = ["step", "t", "a", "nu", "C_d_t0"]
        rows = np.column_stack([step, t, r["a"], r["nu"], r["C_d"][:, 0]])
        summary["a_slope_tail"] = r["slope"]
    elif regime == "pspin":
        r = scaling.pspin_solve(tilde_h(kernel), eta, tmax, _progress(regime, n))
        cols = ["step", "t", "energy", "nu", "C_d_t0"]
        rows = np.column_stack([step, t, r["energy"], r["nu"], r["C_d"][:, 0]])
        summary.update(E_estimate=r["E_estimate"], converged=r["converged"])
    elif regime == "mf_ode":
        m = net.m or 1
        a0 = np.broadcast_to(np.asarray(ini.a0, dtype=float), (m,))
        v0 = None if ini.v0 is None else np.broadcast_to(np.asarray(ini.v0, dtype=float), (m,))
        r = scaling.mf_ode_solve(link, kernel, alpha, a0, v0, tmax, dt=eta, record_every=1)
        k = len(r["t"])
        cols = (["step", "t", "e"] + ["a_%d" % (i + 1) for i in range(m)]
                + ["v_%d" % (i + 1) for i in range(m)])
        rows = np.column_stack([np.arange(k), r["t"], r["e"], r["a"], r["v"]])
    elif regime == "mf_corrections":
        r = scaling.mf_corrections_solve(kernel, link.tau2, alpha, eta, tmax,
                                         progress=_progress(regime, n))
        b, c = r["baseline"], r["corrections"]
        cols = ["step", "t", "a", "v", "nu", "C_o_tt", "a_corr", "v_corr", "nu_corr", "C_o_tt_corr"]
        rows = np.column_stack([step, t, b["a"], b["v"], b["nu"], b["C_o_tt"],
                                c["a"], c["v"], c["nu"], c["C_o_tt"]])
        for tag in ("slopes_fit", "slopes_linear", "slopes_linear_exact_v1"):
            for k_, v_ in r[tag].items():
                summary["%s.%s" % (tag, k_)] = float(v_)
        summary.update(v1=r["v1"], nu1=r["nu1"])
    write_csv(outdir / ("%s.csv" % regime), cols, rows)
    return summary


def execute(cfg, outdir, jobs=1, seed=None):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    eng = cfg.engine
    if eng == "symm":
        return run_symm(cfg, outdir)
    if eng == "general":
        return run_general(cfg, outdir)
    if eng == "gp_sim":
        return run_gp_sim(cfg, outdir, jobs, seed)
    if eng == "sgd_sim":
        return run_sgd_sim(cfg, outdir, jobs, seed)
    if eng == "fixed_abar":
        return run_fixed_abar(cfg, outdir)
    return run_scaling(cfg, outdir)


def run_point(cfg, outdir, point=None, jobs=1, seed=None):
    t0 = time.perf_counter()
    summary = execute(cfg, outdir, jobs, seed)
    outdir = Path(outdir)
    if summary:
        write_summary(outdir / "summary.txt", summary)
    files = sorted(p.name for p in outdir.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "config_hash": config_hash(cfg),
        "config": cfg.model_dump(mode="json"),
        "version": __version__,
        "engine": cfg.engine,
        "point": point or {},
        "seed": seed,
        "wall_time_s": time.perf_counter() - t0,
        "peak_memory_kb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,
        "files": {f: sha256(outdir / f) for f in files},
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def _point_task(args):
    cfg_json, outdir, point, seed = args
    return run_point(ExperimentConfig.model_validate(cfg_json), outdir, point, 1, seed)


def run_config(cfg, out, jobs=1, seed=None):
    pts = expand_sweep(cfg)
    out = Path(out)
    if len(pts) == 1:
        return [run_point(cfg, out, None, jobs, seed)]
    tasks = [(c.model_dump(mode="json"), out / name, point, seed) for name, point, c in pts]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(_point_task, tasks))
    return [_point_task(t) for t in tasks]


# ---------------------------------------------------------------- compare / fit / collapse

def _main_csv(path):
    path = Path(path)
    if path.is_file():
        return path
    csvs = sorted(p for p in path.glob("*.csv") if p.name not in ("sgd.csv", "trel.csv"))
    if len(csvs) != 1:
        raise click.UsageError("cannot pick a CSV in %s (found %s)" % (path, [c.name for c in csvs]))
    return csvs[0]


def _time_col(d):
    for k in ("t", "t_hat"):
        if k in d:
            return k
    raise click.UsageError("no time column")


def compare_tables(A, B, columns=None):
    ta, tb = A[_time_col(A)], B[_time_col(B)]
    lo, hi = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    if hi < lo:
        raise ValueError("disjoint time windows")
    sel = (ta >= lo - 1e-12) & (ta <= hi + 1e-12)
    if columns is None:
        columns = [c for c in A if c in B and c not in ("step", "t", "t_hat", "seed")
                   and not c.endswith("_stderr")]
    rep = {}
    for c in columns:
        if c not in A or c not in B:
            raise ValueError("column %r missing" % c)
        a = A[c][sel]
        b = np.interp(ta[sel], tb, B[c])
        diff = a - b
        ok = np.isfinite(diff)
        r = {"sup": float(np.max(np.abs(diff[ok]))) if ok.any() else 0.0,
             "l2": float(np.sqrt(np.mean(diff[ok] ** 2))) if ok.any() else 0.0}
        for X, tag in ((B, "b"), (A, "a")):
            if c + "_stderr" in X:
                se = np.interp(ta[sel], X[_time_col(X)], X[c + "_stderr"])
                z = np.abs(diff) / np.maximum(se, 1e-300)
                r["max_z"] = float(np.max(z[ok & (se > 0)])) if np.any(ok & (se > 0)) else 0.0
                break
        rep[c] = r
    return {"window": (float(lo), float(hi)), "columns": rep}


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="progress messages on stderr")
def main(verbose):
    """Two-layer network DMFT toolkit."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(message)s", stream=sys.stderr)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, help="output directory (else config.output or $%s)" % OUT_ENV)
@click.option("--jobs", default=1, show_default=True, help="parallel sweep points / realizations")
@click.option("--seed", default=None, type=int, help="base realization seed (overrides config)")
def run(config_path, out, jobs, seed):
    """Run the experiment described by a JSON config."""
    try:
        cfg = load_config(config_path)
    except ValidationError as e:
        click.echo("invalid config:\n" + format_errors(e), err=True)
        sys.exit(2)
    except json.JSONDecodeError as e:
        click.echo("invalid config: not JSON (%s)" % e, err=True)
        sys.exit(2)
    out = out or os.environ.get(OUT_ENV) or cfg.output
    if out is None:
        raise click.UsageError("no output directory: pass --out or set config.output")
    try:
        mans = run_config(cfg, out, jobs, seed)
    except SolverAbort as e:
        click.echo("solver abort: %s" % e, err=True)
        sys.exit(3)
    except (ValueError, MemoryError) as e:
        click.echo("run failed: %s" % e, err=True)
        sys.exit(2)
    for m in mans:
        click.echo("wrote %s (%.2fs)" % (", ".join(sorted(m["files"])), m["wall_time_s"]))


@main.command()
@click.argument("run_a", type=click.Path(exists=True))
@click.argument("run_b", type=click.Path(exists=True))
@click.option("--columns", default=None, help="comma separated; default all shared")
@click.option("--norm", type=click.Choice(["sup", "l2"]), default="sup", show_default=True)
@click.option("--tol", default=None, type=float, help="exit 1 if any distance exceeds this")
@click.option("--out", default=None, type=click.Path(), help="also write the report here")
def compare(run_a, run_b, columns, norm, tol, out):
    """Distances between two runs on their common time window."""
    A, B = read_csv(_main_csv(run_a)), read_csv(_main_csv(run_b))
    cols = columns.split(",") if columns else None
    try:
        rep = compare_tables(A, B, cols)
    except ValueError as e:
        click.echo("compare: %s" % e, err=True)
        sys.exit(2)
    lines = ["window=%s,%s" % (_fmt(rep["window"][0]), _fmt(rep["window"][1]))]
    worst = 0.0
    for c, r in rep["columns"].items():
        for k, v in r.items():
            lines.append("%s.%s=%s" % (c, k, _fmt(v)))
        worst = max(worst, r[norm])
    lines.append("worst_%s=%s" % (norm, _fmt(worst)))
    text = "\n".join(lines)
    click.echo(text)
    if out:
        Path(out).write_text(text + "\n")
    if tol is not None and worst > tol:
        sys.exit(1)


@main.command("fit-threshold")
@click.argument("sweep_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--param", default=None, help="swept parameter (default: taken from manifests)")
@click.option("--epsilon", default=1e-7, show_default=True)
@click.option("--fix-nu", default=2.0, show_default=True, help="exponent of the fixed-nu variant")
@click.option("--out", default=None, type=click.Path(), help="output directory (default sweep_dir)")
def fit_threshold(sweep_dir, param, epsilon, fix_nu, out):
    """Relaxation times across a sweep and the power-law threshold fit."""
    pts = []
    for d in sorted(Path(sweep_dir).iterdir()):
        mf = d / "manifest.json"
        if not mf.exists():
            continue
        man = json.loads(mf.read_text())
        key = param or next(iter(man["point"]), None)
        if key is None or key not in man["point"]:
            continue
        tab = read_csv(_main_csv(d))
        tau2 = man["config"]["model"]["tau2"]
        r = analysis.relaxation_time(tab[_time_col(tab)], tab["e_tr"], tau2, epsilon, d.name)
        pts.append((man["point"][key], r))
    if not pts:
        raise click.UsageError("no sweep points found in %s" % sweep_dir)
    out = Path(out or sweep_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trel.csv", "w") as fh:
        fh.write("x,t_rel,relaxed\n")
        for x, r in pts:
            fh.write("%s,%s,%d\n" % (_fmt(x), _fmt(r.t_rel) if r.relaxed else "nan", r.relaxed))
    x = np.array([p[0] for p in pts if p[1].relaxed])
    t = np.array([p[1].t_rel for p in pts if p[1].relaxed])
    summ = {"epsilon": epsilon, "n_points": len(pts), "n_relaxed": len(x)}
    for tag, nu in (("free", None), ("fixed_nu", fix_nu)):
        try:
            f = analysis.fit_powerlaw(x, t, fix_nu=nu)
            summ.update({"%s.x_star" % tag: f.x_star, "%s.nu" % tag: f.nu, "%s.L" % tag: f.L,
                         "%s.residual" % tag: f.residual, "%s.ok" % tag: f.ok,
                         "%s.monotone" % tag: f.monotone})
        except ValueError as e:
            summ["%s.error" % tag] = str(e)
    write_summary(out / "fit.txt", summ)
    click.echo((out / "fit.txt").read_text(), nl=False)


@main.command()
@click.argument("runs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--column", required=True)
@click.option("--time-exponent", default=1.0, show_default=True, help="t -> t / m^p")
@click.option("--value-exponent", default=0.0, show_default=True, help="y -> y * m^r")
@click.option("--tol", default=None, type=float, help="exit 1 if the largest-m distance exceeds this")
@click.option("--out", default=None, type=click.Path())
def collapse(runs, column, time_exponent, value_exponent, tol, out):
    """Sup distances between rescaled runs at different widths m."""
    items = []
    for r in runs:
        man = json.loads((Path(r) / "manifest.json").read_text())
        m = man["config"]["network"]["m"]
        tab = read_csv(_main_csv(r))
        items.append((m, tab[_time_col(tab)], tab[column]))
    try:
        res = analysis.collapse_distance(items, time_exponent,
                                         lambda y, m: y * m ** value_exponent)
    except ValueError as e:
        click.echo("collapse: %s" % e, err=True)
        sys.exit(2)
    lines = ["window=%s,%s" % tuple(_fmt(w) for w in res["window"])]
    for (m1, m2), d in res["distances"]:
        lines.append("d_%s_%s=%s" % (m1, m2, _fmt(d)))
    lines.append("decreasing=%s" % res["decreasing"])
    text = "\n".join(lines)
    click.echo(text)
    if out:
        Path(out).write_text(text + "\n")
    if tol is not None and res["distances"][-1][1] > tol:
        sys.exit(1)


if __name__ == "__main__":
    main()
