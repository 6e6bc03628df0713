"""
Acceptance suite.  Each test prints one line per checked property and the session
ends with a summary of all of them.  Tolerances are the ones pinned for each
criterion; where the full-scale run does not fit this machine the refusal is
reported as a failure and a desk-scale measurement is reported alongside.
"""

import math
import time

import numpy as np
import pytest

from sglab.checks import RESONANCE_TOL, ZERO_TOL, basepoint_zero_check, resonance_identity_check
from sglab.gmc import StationarySampler, covariance_check, q_zero_streaming
from sglab.grid import GridSpec, ModelParams
from sglab.harness import (ResourceRefusal, TestFunctionSpec, dipole_without_expectation, fit_scaling, mc_moments,
                           monopole_oracle_N1, plan_moments, random_smooth_theta, resonant_theta)
from sglab.model import check_golden
from sglab.noise import SeedLineage
from sglab.reports import fit_loglog
from sglab.resonant import (ResonantKernel, check_resonant_bound, contraction_exponent, contraction_ratio,
                            solve_resonant)
from sglab.simulator import (ansatz_decompose, gwp_experiment, make_noise, ou_pathwise_oracle, solve_regularized_sg,
                             stationary_check)
from sglab.spectral import besov_norm, duhamel, duhamel_residual, heat_semigroup, scaled_profile
from sglab.grid import SpaceTimeField
from sglab.trees import Xi, dipole

P5 = ModelParams.from_beta2_pi(5.0)


def _orders(errs):
    e = np.asarray(errs, dtype=float)
    return np.log2(e[:-1] / e[1:])


def _first_order(errs, tol=0.25):
    # observed orders of successive halvings average to 1 within tol, none below 1 - 2 tol
    o = _orders(errs)
    return abs(float(np.mean(o)) - 1.0) <= tol and float(np.min(o)) >= 1.0 - 2 * tol, o


def _oracle_mean(theta, params, lams, plan, sampler_grid):
    th = theta(sampler_grid) if callable(theta) else theta
    out = []
    for lam in lams:
        vals = []
        for (k, i, j) in plan.basepoints:
            z = (k * sampler_grid.dt, i * sampler_grid.dx, j * sampler_grid.dx)
            vals.append(monopole_oracle_N1(th, params, TestFunctionSpec(lam, z), sampler_grid))
        out.append(float(np.mean(vals)))
    return np.array(out)


# ---------------------------------------------------------------------------


def test_criterion_1_golden_suite(accept):
    t0 = time.perf_counter()
    res = check_golden(P5.beta_bar)
    dt = time.perf_counter() - t0
    bad = [k for k, v in res.items() if not v]
    ok = accept(1, "recursion reproduces every closed form structurally", not bad and len(res) == 8,
                f"{len(res) - len(bad)}/{len(res)} equal")
    ok &= accept(1, "runtime below 1 s", dt < 1.0, f"{dt:.3f} s")
    assert ok


def test_criterion_2_zeros_and_resonance(accept):
    t0 = time.perf_counter()
    p = P5.with_(eps=2.0 ** -3)
    zeros = basepoint_zero_check(p, seed=2024, n=16, realizations=3, points=4)
    worst = max(v for v, _ in zeros.values())
    ok = accept(2, "basepoint zeros for ++, -- dipoles and 16 tripoles", len(zeros) == 18 and worst < ZERO_TOL,
                f"{len(zeros)} trees, worst relative value {worst:.2e} < {ZERO_TOL:g}")
    err = resonance_identity_check(p, seed=2024)
    ok &= accept(2, "dipole resonance identity, random smooth theta", err < RESONANCE_TOL,
                 f"max relative error {err:.2e} < {RESONANCE_TOL:g}")
    dt = time.perf_counter() - t0
    ok &= accept(2, "runtime below 1 min", dt < 60, f"{dt:.1f} s")
    assert ok


def test_criterion_3_gmc_covariances(accept):
    p = P5.with_(eps=2.0 ** -4)
    s = StationarySampler(64, 2.0 ** -10, p)
    rng = np.random.default_rng(3)
    offs = set()
    while len(offs) < 20:
        o = (int(rng.integers(0, 40)), int(rng.integers(-6, 7)), int(rng.integers(-6, 7)))
        if o != (0, 0, 0):
            offs.add(o)
    offs = sorted(offs)
    t0 = time.perf_counter()
    rep = covariance_check(s, offs, replicas=10_000, seed=33)
    zpm, _ = rep.z_scores()
    ok = accept(3, "E[xi+(0) xi-(z)] = exp(beta^2 Q(z)) within 3 sigma at 20 offsets", bool(np.all(zpm < 3)),
                f"max |z| = {zpm.max():.2f}, 10^4 replicas, {time.perf_counter() - t0:.0f} s")
    ok &= accept(3, "J J^- = 1 to 1e-12", rep.jj_product_error < 1e-12, f"{rep.jj_product_error:.1e}")
    assert ok


def test_criterion_4_renormalization_scaling(accept):
    eps = [2.0 ** -k for k in range(3, 8)]
    logc = [P5.beta2 * q_zero_streaming(int(2 / e), e * e / 4, P5.m2, e) / 2 for e in eps]
    slope = fit_loglog([1 / e for e in eps], np.exp(logc)).slope
    target = P5.beta2 / (4 * math.pi)
    assert accept(4, "slope of log C against log(1/eps)", abs(slope - target) <= 0.15 * target,
                  f"{slope:.4f} vs {target:.4f} +- 15%")


def test_criterion_5_monopole_scaling(accept):
    target = -P5.beta2 / (4 * math.pi)
    # full scale: eps = 2^-7, lambda in 2^-1..2^-4, 10^4 replicas
    full = P5.with_(eps=2.0 ** -7)
    try:
        mc_moments(Xi(1), 0.0, full, [2.0 ** -k for k in range(1, 5)], replicas=10_000, seed=1)
        refused = ""
    except ResourceRefusal as exc:
        refused = str(exc)
    ok = accept(5, "full-scale run (eps = 2^-7, 10^4 replicas)", not refused, refused or "completed")

    # desk scale: eps = 2^-5, lambda in 2^-3..1, three thetas on common draws
    p = P5.with_(eps=2.0 ** -5)
    lams = [0.125, 0.25, 0.5, 1.0]
    fam = {"zero": 0.0, "const17": 17.0, "resonant64": resonant_theta(64.0, p)}
    t0 = time.perf_counter()
    out = mc_moments(Xi(1), fam, p, lams, replicas=400, seed=5)
    el = time.perf_counter() - t0
    plan = plan_moments(p, lams)
    grid = StationarySampler(plan.n, plan.dt, p, frames=plan.frames).grid
    viol = sum(r.envelope_violations for recs in out.values() for r in recs)
    total = 400 * len(lams) * len(plan.basepoints) * len(fam)
    ok &= accept(5, "modulus envelope holds for every sample", viol == 0, f"{viol} violations in {total}")
    for name, recs in out.items():
        fit = fit_scaling(recs)
        orc = _oracle_mean(fam[name], p, lams, plan, grid)
        ofit = fit_loglog(lams, np.sqrt(orc))
        ok &= accept(5, f"desk MC exponent matches exact second-moment exponent, theta={name}",
                     abs(fit.slope - ofit.slope) <= 3 * fit.slope_stderr + 0.02,
                     f"MC {fit.slope:.3f} +- {fit.slope_stderr:.3f}, exact {ofit.slope:.3f}")
        ok &= accept(5, f"desk exponent equals -beta^2/4pi +- 0.15, theta={name}",
                     abs(fit.slope - target) <= 0.15, f"{fit.slope:.3f} vs {target:.3f}, {el:.0f} s")
    assert ok


def test_criterion_6_dipole_scaling(accept):
    p = P5.with_(eps=2.0 ** -5)
    lams = [0.125, 0.25, 0.5, 1.0]
    target = 2 - P5.beta2 / (2 * math.pi)
    t0 = time.perf_counter()
    recs = mc_moments(dipole(1, -1), 0.0, p, lams, replicas=100, seed=6)
    ctrl = mc_moments(dipole_without_expectation(1, -1), 0.0, p, lams, replicas=100, seed=6)
    el = time.perf_counter() - t0
    f = fit_scaling(recs)
    g = fit_scaling(ctrl)
    ok = accept(6, "recentered +- dipole exponent equals 2 - beta^2/2pi +- 0.2", abs(f.slope - target) <= 0.2,
                f"{f.slope:.3f} +- {f.slope_stderr:.3f} vs {target:.3f}, eps = 2^-5, 100 replicas, {el:.0f} s")
    ok &= accept(6, "control without the expectation misses by at least 0.3", abs(g.slope - target) >= 0.3,
                 f"{g.slope:.3f}, miss {abs(g.slope - target):.3f}")
    assert ok


def test_criterion_7_n1_oracle(accept):
    p = P5.with_(eps=2.0 ** -4)
    lams = [0.25, 0.5]
    fam = {"zero": 0.0, "smooth": random_smooth_theta(7, amplitude=2.0)}
    out = mc_moments(Xi(1), fam, p, lams, replicas=400, seed=7)
    plan = plan_moments(p, lams)
    grid = StationarySampler(plan.n, plan.dt, p, frames=plan.frames).grid
    ok = True
    for name, recs in out.items():
        orc = _oracle_mean(fam[name], p, lams, plan, grid)
        for r, o in zip(recs, orc):
            z = abs(r.moment - o) / r.stderr
            ok &= accept(7, f"MC second moment matches the exact formula, theta={name}, lambda={r.lam:g}", z < 3,
                         f"MC {r.moment:.5g} +- {r.stderr:.2g}, exact {o:.5g}, |z| = {z:.2f}")
    assert ok


def test_criterion_8_resonant_solver(accept):
    p = P5.with_(eps=2.0 ** -5)
    kern = ResonantKernel.build(64, 2.0 ** -12, p)
    target = 2.0 ** -contraction_exponent(p)
    ok = True
    for amp in (1.0, 64.0):
        u0 = scaled_profile("rough", 64, amp, p.eta, 0)
        rs = [contraction_ratio(u0, kern, T) for T in (1 / 16, 1 / 32, 1 / 64)]
        ok &= accept(8, f"Picard iterates contract geometrically, ||u0|| = {amp:g}", max(rs) < 1,
                     "ratios " + ", ".join(f"{r:.2e}" for r in rs))
        for T, a, b in zip((1 / 16, 1 / 32), rs[:-1], rs[1:]):
            ok &= accept(8, f"halving T = {T:g} scales the ratio by 2^-exponent +- 20%, ||u0|| = {amp:g}",
                         abs(b / a - target) <= 0.2 * target, f"{b / a:.3f} vs {target:.3f}")

    q = P5.with_(eps=2.0 ** -4)
    kq = ResonantKernel.build(32, 2.0 ** -10, q)
    runs = [solve_resonant(scaled_profile("smooth", 32, a, q.eta, 0), kq, 0.125) for a in (0.25, 1, 4, 16, 64)]
    rep = check_resonant_bound(runs)
    ok &= accept(8, "u0 sweep slope is sublinear (<= 1 - kappa/2)", bool(rep.passed),
                 f"{rep.fit.slope:.3f} <= {rep.notes['sublinear_limit']:.4f}")
    assert ok


@pytest.mark.parametrize("alpha", [-0.7, -0.2, 0.4, 1.1])
def test_criterion_9_heat_contraction(alpha, accept):
    rng = np.random.default_rng(9)
    worst, equal = 0.0, 0.0
    for t in (0.01, 0.1, 0.5):
        f = rng.standard_normal((64, 64)) + rng.normal()
        decay = math.exp(-P5.m2 * t)
        worst = max(worst, besov_norm(heat_semigroup(f, t, P5.m2), alpha) / besov_norm(f, alpha) / decay)
        # a dominant mean puts the sup on the k = 0 block, where the factor is attained exactly
        g = f + 1e4
        r = besov_norm(heat_semigroup(g, t, P5.m2), alpha) / besov_norm(g, alpha)
        equal = max(equal, abs(r / decay - 1))
    ok = accept(9, f"heat flow contracts by exp(-m^2 t), alpha = {alpha:g}", worst <= 1 + 1e-12,
                f"max ratio / exp(-m^2 t) = {worst:.15f}")
    ok &= accept(9, f"factor exp(-m^2 t) attained to 1e-12 relative, alpha = {alpha:g}", equal <= 1e-12,
                 f"{equal:.1e}")
    assert ok


def test_criterion_9_duhamel_order(accept):
    res = []
    for dt in (2.0 ** -8, 2.0 ** -9, 2.0 ** -10, 2.0 ** -11):
        g = GridSpec(32, dt, steps=int(round(0.25 / dt)))
        F = SpaceTimeField.from_function(g, lambda t, x, y: np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
                                         * np.cos(9 * t) + np.cos(4 * np.pi * x) * t)
        res.append(duhamel_residual(duhamel(F, P5.m2), F, P5.m2))
    ok, o = _first_order(res)
    assert accept(9, "Duhamel residual is first order under step halving", ok,
                  "orders " + ", ".join(f"{x:.3f}" for x in o))


def test_criterion_10_ou_oracle(accept):
    p = ModelParams.from_beta2_pi(0.0, eps=2.0 ** -4)
    u0 = scaled_profile("smooth", 32, 1.0, p.eta, 0)
    errs = []
    for dt in (2.0 ** -10, 2.0 ** -11, 2.0 ** -12):
        noise = make_noise(32, dt, 0.25, p, SeedLineage(10))
        run = solve_regularized_sg(u0, noise, p, 0.25)
        errs.append(float(np.max(np.abs(run.u.values - ou_pathwise_oracle(run)))))
    ok, o = _first_order(errs)
    ok = accept(10, "beta = 0 solver matches the exact per-mode OU solution at O(dt)", ok,
                "errors " + ", ".join(f"{e:.3g}" for e in errs) + "; orders " + ", ".join(f"{x:.2f}" for x in o))
    st = stationary_check(p, n=32, T=4.0, replicas=200, seed=10)
    ok &= accept(10, "beta = 0 stationary L2 moment matches the exact scheme variance", abs(st["z"]) < 3,
                 f"{st['empirical']:.4f} +- {st['stderr']:.4f} vs {st['oracle']:.4f}")
    assert ok


def test_criterion_10_ansatz_residual(accept):
    p = ModelParams.from_beta2_pi(4.5, eps=2.0 ** -4)
    u0 = scaled_profile("smooth", 32, 1.0, p.eta, 0)
    T = 1 / 16
    res = []
    for dt in (2.0 ** -13, 2.0 ** -14, 2.0 ** -15, 2.0 ** -16):
        noise = make_noise(32, dt, T, p, SeedLineage(11))
        run = solve_regularized_sg(u0, noise, p, T)
        th = solve_resonant(run.u0.values, ResonantKernel.build(32, dt, p), T, tol=1e-10)
        res.append(ansatz_decompose(run, th).residual_rms)
    ok, o = _first_order(res)
    assert accept(10, "w-equation residual converges at first order (n = 32, beta^2 = 4.5 pi)", ok,
                  "rms " + ", ".join(f"{r:.3f}" for r in res) + "; orders " + ", ".join(f"{x:.2f}" for x in o))


def test_criterion_10_gwp(accept):
    p = ModelParams.from_beta2_pi(4.5, eps=2.0 ** -5)
    u = scaled_profile("smooth", 64, 1.0, p.eta, 0)
    t0 = time.perf_counter()
    rep = gwp_experiment({"u0": u, "10u0": 10 * u}, p, 4.0, replicas=200, p=2, seed=12, n=64, record=0.25)
    el = time.perf_counter() - t0
    ok = accept(10, "no blow-up over 200 replicas to T = 4", rep.total_blowups == 0,
                f"{rep.total_blowups} blow-ups, {el:.0f} s")
    t, d, se = rep.merge[-1]
    ok &= accept(10, "u0 and 10 u0 moment curves merge within 2 joint standard errors", rep.merged_at(4.0),
                 f"T = {t:g}: difference {d:.4f}, joint se {se:.4f}")
    assert ok
