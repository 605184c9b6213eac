import numpy as np
import pytest

from dmftlab import scaling
from dmftlab.dmft_symm import SymmDMFT
from dmftlab.engine import SolverAbort
from dmftlab.kernels import CovarianceKernel, KernelError, TargetLink, matched_link, pure_noise

H = CovarianceKernel([0, 0.3, 0.5])
H3 = CovarianceKernel([0, 0.9, 0, 1 / 6])


def _d(f, x, eps=1e-5):
    return (f(x + eps) - f(x - eps)) / (2 * eps)


def test_lazy_regime1_closed_forms_solve_odes():
    p = scaling.RegimeParams(0.5, H, pure_noise(1.0), gamma0=1.3)
    k = p.alpha * p.gamma0 ** 2 * H.d1(0.0)
    tp = 0.7
    for t in (0.9, 2.0, 5.0):
        Ro = lambda x: scaling.lazy_pn_regime1(p, x, tp)["R_o"]
        Co = lambda x: scaling.lazy_pn_regime1(p, x, tp)["C_o"]
        Cd = lambda x: scaling.lazy_pn_regime1(p, x, tp)["C_d"]
        cott = scaling.lazy_pn_regime1(p, t)["C_o_tt"]
        assert abs(_d(Ro, t) + k * (1 + Ro(t))) <= 1e-6
        assert abs(_d(Co, t) + k * (1 + Co(t))) <= 1e-6
        assert abs(_d(Cd, t) - k * (cott - Co(t))) <= 1e-6
    r = scaling.lazy_pn_regime1(p, np.linspace(0, 3, 7))
    assert np.allclose(r["C_d"], 0.0)
    assert np.allclose(r["nu"], -p.alpha * p.gamma0 ** 2 * (H.d1(1.0) + H.d1(0.0) * r["C_o_tt"]))


def test_lazy_si_regime1_ode_and_plateau():
    phi = TargetLink([0, 0.4, 0.2], 0.7, 0.36)
    p = scaling.RegimeParams(0.5, H, phi, gamma0=1.0)
    k = p.alpha * H.d1(0.0)
    r = scaling.lazy_si_regime1(p, np.array([1.0, 1e3]))
    v = lambda x: scaling.lazy_si_regime1(p, x)["v"]
    assert abs(_d(v, 1.0) - k * (r["v_inf"] - v(1.0))) <= 1e-6
    assert r["e_tr"][-1] == pytest.approx(r["e_plateau"], abs=1e-10)


def test_mf_regime1_limit():
    p = scaling.RegimeParams(0.3, H3, pure_noise(0.36), a0=1.0)
    r = scaling.mf_pn_regime1(p, np.array([0.0, 200.0]))
    assert r["limit"] == pytest.approx(1 / 3)
    assert r["C_o"][0] == pytest.approx(0.0, abs=1e-14)
    assert r["C_o"][-1] == pytest.approx(1 / 3, abs=1e-10)


# --- regime matching: SymmDMFT rescaled per ansatz approaches each scaling solution

def _decreasing(d):
    return all(b < a for a, b in zip(d, d[1:]))


def test_match_lazy_regime1():
    p = scaling.RegimeParams(0.5, H, pure_noise(1.0), gamma0=1.0)
    d = []
    for m in (16, 64, 256):
        eta = 0.05 / m
        r = SymmDMFT(H, pure_noise(1.0), m=m, eta=eta, n_steps=100, alpha=0.5, gamma0=1.0,
                     freeze_a=True).run()
        th = r.t * m
        T, S = np.meshgrid(th, th, indexing="ij")
        d.append(np.abs(m * (r.C_d - 1) - scaling.lazy_pn_regime1(p, T, S)["C_d"]).max())
    assert _decreasing(d)


def test_match_lazy_regime2():
    p = scaling.RegimeParams(0.5, H, pure_noise(1.0), gamma0=1.0)
    ref = scaling.lazy_pn_regime2_solve(p, eta=0.01, n_steps=60)
    d = []
    for m in (16, 64, 128):
        eta = 0.2 / m
        r = SymmDMFT(H, pure_noise(1.0), m=m, eta=eta, n_steps=int(round(0.6 / eta)), alpha=0.5,
                     gamma0=1.0, freeze_a=True).run()
        sel = r.t >= 0.3
        e = r.observables()["e_tr"]
        d.append(np.abs(np.interp(r.t[sel], ref["t"], ref["e_tr"]) - e[sel]).max())
    assert _decreasing(d)


def test_match_mf_regime1():
    p = scaling.RegimeParams(0.3, H3, pure_noise(0.36), a0=1.0)
    d = []
    for m in (16, 64, 256):
        r = SymmDMFT(H3, pure_noise(0.36), m=m, eta=0.05, n_steps=200, alpha=0.3, a0=1.0).run()
        d.append(np.abs(m * np.diagonal(r.C_o) - scaling.mf_pn_regime1(p, r.t)["C_o"]).max())
    assert _decreasing(d)


def test_match_sqrtm():
    p = scaling.RegimeParams(0.3, H3, pure_noise(0.36), a0=1.0)
    ref = scaling.mf_sqrtm_solve(p, eta=0.02, t_max=2.0)
    d = []
    for m in (16, 64, 256):
        sm = np.sqrt(m)
        r = SymmDMFT(H3, pure_noise(0.36), m=m, eta=0.1, n_steps=int(round(2 * sm / 0.1)),
                     alpha=0.3, a0=1.0).run()
        d.append(np.abs(np.interp(r.t / sm, ref["t"], ref["a"]) - r.a).max())
    assert _decreasing(d)


def test_match_fixed_abar():
    ref = scaling.fixed_abar_solve(H, 1.0, 0.8, eta=0.1, n_steps=50)
    d = []
    for m in (16, 64, 256):
        r = SymmDMFT(H, pure_noise(1.0), m=m, eta=0.1 * m, n_steps=50, abar=0.8, a0=1.0,
                     freeze_a=True).run()
        d.append(np.abs(r.observables()["e_tr"] - ref["e_tr"]).max())
    assert _decreasing(d)


# --- p-spin, sqrt m, mean-field ODE

@pytest.mark.parametrize("k", [2, 3])
def test_pspin_threshold(k):
    ck2 = 1 / 6 if k == 3 else 0.25
    c = np.zeros(k + 1)
    c[k] = ck2
    r = scaling.pspin_solve(CovarianceKernel(c), eta=0.05, t_max=50.0)
    E = scaling.pspin_threshold_energy(ck2, k)
    assert abs(r["E_estimate"] - E) <= 0.03 * abs(E)


def test_pspin_rejects_linear_part():
    with pytest.raises(KernelError):
        scaling.pspin_solve(CovarianceKernel([0, 0.5, 0.5]), t_max=1.0)


def test_a_inf_prediction():
    E = scaling.pspin_threshold_energy(1 / 6, 3)
    assert E == pytest.approx(-2 / 3)
    assert scaling.a_inf_prediction(0.36, 0.3, E) == pytest.approx(0.6 * np.sqrt(0.3) * 2 / 3)


def test_mf_ode_sphere_and_fixed_point():
    phi = matched_link(H3, 0.36)
    r = scaling.mf_ode_solve(phi, H3, 0.3, [1.0, 0.4, 2.0], [0.2, -0.5, 0.0], t_max=5.0, dt=1e-2,
                             record_every=1)
    assert np.abs(r["v"]).max() <= 1 + 1e-9
    # (a, v) = (1, 1) is stationary with e = tau^2 / 2
    da, dv = scaling._mf_rhs(np.ones(1), np.ones(1), 0.3, phi, H3)
    assert abs(da[0]) < 1e-15 and abs(dv[0]) < 1e-15
    assert scaling.mf_energy(np.ones(1), np.ones(1), phi, H3)[0] == pytest.approx(0.18)


def test_mf_ode_homogeneous_matches_heterogeneous_copies():
    phi = matched_link(H3, 0.36)
    one = scaling.mf_ode_solve(phi, H3, 0.3, [1.0], None, t_max=2.0, dt=1e-2)
    many = scaling.mf_ode_solve(phi, H3, 0.3, [1.0] * 4, None, t_max=2.0, dt=1e-2)
    assert np.allclose(many["a"], one["a"], atol=1e-14)


def test_mf_ode_rejects_bad_v0():
    with pytest.raises(ValueError):
        scaling.mf_ode_solve(pure_noise(1.0), H3, 0.3, [1.0], [1.2], t_max=1.0)


def test_asymptotic_constants():
    c = scaling.mf_asymptotic_constants(H3, 0.3)
    assert c["K"] == pytest.approx(0.5625)
    assert c["v1"] == pytest.approx(-1 / (2 * 0.3 * 0.5625))
    assert c["nu1"] == pytest.approx(0.5)


def test_correction_complex_step_vs_finite_m():
    """Two routes to the 1/m derivative: complex step at q = 0 and a secant at large m."""
    phi = matched_link(H3, 0.36)
    kw = dict(eta=0.1, n_steps=50, alpha=0.3, a0=1.0)
    h = 1e-20
    cs = SymmDMFT(H3, phi, m=np.inf, inv_m=1j * h, dtype=complex, **kw).run()
    base = SymmDMFT(H3, phi, m=np.inf, inv_m=0.0, **kw).run()
    q = 1e-5
    fin = SymmDMFT(H3, phi, m=1 / q, inv_m=q, **kw).run()
    sec = (fin.a - base.a) / q
    assert np.abs(cs.a.imag / h - sec).max() <= 1e-3 * max(1.0, np.abs(sec).max())
    assert np.abs(cs.a.real - base.a).max() < 1e-14


def test_fixed_abar_stop():
    r = scaling.fixed_abar_solve(H, 1.0, 0.6, eta=0.1, n_steps=1000, stop_below=1e-6)
    assert r["e_tr"][-1] < 1e-6
    assert len(r["t"]) < 1001
    assert np.all(r["e_tr"][:-1] >= 1e-6)


def test_convergence_flag():
    t = np.linspace(1, 100, 500)
    assert scaling.convergence_flag(1 + 0 * t)
    assert not scaling.convergence_flag(t)
