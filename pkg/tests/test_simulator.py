import math

import numpy as np
import pytest

from conftest import smooth_field
from sglab.grid import ModelParams
from sglab.noise import NoiseRealization, SeedLineage
from sglab.resonant import ResonantKernel, solve_resonant
from sglab.simulator import (BLOWUP_THRESHOLD, ansatz_decompose, epsilon_convergence, gwp_experiment, make_noise,
                             ou_pathwise_oracle, ou_variance_oracle, solve_regularized_sg, stationary_check)

EPS = 2.0 ** -2


@pytest.fixture(scope="module")
def p5():
    return ModelParams.from_beta2_pi(5.0, eps=EPS)


@pytest.fixture(scope="module")
def p0():
    return ModelParams.from_beta2_pi(0.0, eps=EPS)


def _run(params, n=16, dt=2.0 ** -8, T=0.125, seed=0, u0=None, **kw):
    noise = make_noise(n, dt, T, params, SeedLineage(seed))
    u0 = np.zeros((n, n)) if u0 is None else u0
    return solve_regularized_sg(u0, noise, params, T, **kw)


def test_zero_noise_zero_data_stays_zero(p0):
    noise = make_noise(16, 2.0 ** -8, 0.125, p0, SeedLineage(0))
    noise.zeta_eps = noise.zeta.like(np.zeros_like(noise.zeta.values))
    run = solve_regularized_sg(np.zeros((16, 16)), noise, p0, 0.125)
    assert np.all(run.u.values == 0)


def test_output_is_real_and_finite(p5):
    run = _run(p5, u0=smooth_field(16))
    assert np.isrealobj(run.u.values) and np.all(np.isfinite(run.u.values))
    assert not run.blew_up and run.c_renorm > 1


def test_ou_pathwise_first_order(p0):
    errs = []
    for dt in (2.0 ** -8, 2.0 ** -9, 2.0 ** -10):
        run = _run(p0, dt=dt, T=0.25, seed=3, u0=smooth_field(16))
        errs.append(float(np.max(np.abs(run.u.values - ou_pathwise_oracle(run)))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 0.7), errs


def test_blowup_is_reported_not_raised(p5):
    run = _run(p5, u0=np.full((16, 16), 2 * BLOWUP_THRESHOLD), mollify_u0=False)
    assert run.blew_up and run.blowup_time == pytest.approx(2.0 ** -8)


def test_bad_arguments(p5):
    noise = make_noise(16, 2.0 ** -8, 0.125, p5, SeedLineage(0))
    with pytest.raises(ValueError, match="multiple"):
        solve_regularized_sg(np.zeros((16, 16)), noise, p5, 0.1)
    with pytest.raises(ValueError, match="shape"):
        solve_regularized_sg(np.zeros((8, 8)), noise, p5, 0.125)
    with pytest.raises(ValueError, match="scheme"):
        solve_regularized_sg(np.zeros((16, 16)), noise, p5, 0.125, scheme="rk4")


def test_ansatz_recombines_exactly(p5):
    run = _run(p5, T=2.0 ** -5, u0=smooth_field(16, 4))
    kern = ResonantKernel.build(16, 2.0 ** -8, p5)
    res = solve_resonant(run.u0.values, kern, 2.0 ** -5, tol=1e-10)
    dec = ansatz_decompose(run, res)
    assert np.allclose(dec.recombine(), run.u.values, atol=1e-12)
    assert np.max(np.abs(dec.w[0])) < 1e-12
    assert np.isfinite(dec.residual_rms)
    with pytest.raises(ValueError, match="initial datum"):
        ansatz_decompose(run, res.theta.values + 1.0)
    with pytest.raises(ValueError, match="shape"):
        ansatz_decompose(run, res.theta.values[:-1])


def test_variance_oracle_small_dt_limit(p0):
    v = ou_variance_oracle(16, 2.0 ** -8, p0)
    v_short = ou_variance_oracle(16, 2.0 ** -8, p0, steps=16)
    assert 0 < v_short < v


def test_stationary_check_matches_oracle(p0):
    out = stationary_check(p0, n=16, dt=2.0 ** -8, T=1.0, replicas=100, seed=2)
    assert abs(out["z"]) < 4


def test_same_eps_distance_is_zero(p5):
    rep = epsilon_convergence(smooth_field(16), p5, [EPS, EPS], 2.0 ** -5, n=16, dt=2.0 ** -8)
    assert rep.rows[0]["distance"] == 0.0


def test_gwp_small_run(p5):
    u = smooth_field(16, 5)
    rep = gwp_experiment({"small": u, "large": 20 * u}, p5, 0.25, replicas=100, n=16, dt=2.0 ** -8,
                         record=0.125)
    assert rep.total_blowups == 0
    t, m, se = rep.curve("small")
    assert len(t) == 3 and np.all(m > 0)
    with pytest.raises(ValueError, match="factor"):
        gwp_experiment({"a": u, "b": 2 * u}, p5, 0.25, replicas=100, n=16)


def test_batch_independent_of_noise_block_size(p5, monkeypatch):
    from sglab import simulator
    lins = [SeedLineage(9).child(r) for r in range(3)]
    u0s = np.stack([smooth_field(16, 6), np.zeros((16, 16))])
    a = simulator.simulate_batch(u0s, p5, 16, 2.0 ** -8, 0.125, lins, 8)
    monkeypatch.setattr(simulator, "NOISE_BLOCK_BYTES", 3 * 16 * 9 * 16 * 5.5)
    b = simulator.simulate_batch(u0s, p5, 16, 2.0 ** -8, 0.125, lins, 8)
    assert np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])
