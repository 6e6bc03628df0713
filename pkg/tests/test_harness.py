import math

import numpy as np
import pytest

from sglab.grid import GridSpec, ModelParams
from sglab.harness import (ResourceRefusal, TestFunctionSpec, dipole_without_expectation, fit_scaling, mc_moments,
                           monopole_oracle_N1, pair, plan_moments, random_smooth_theta, theta_source)
from sglab import harness
from sglab.reports import MomentRecord
from sglab.trees import Xi


@pytest.fixture(scope="module")
def params():
    return ModelParams.from_beta2_pi(5.0, eps=2.0 ** -3)


def test_test_function_mass_is_scale_invariant():
    g = GridSpec(64, 2.0 ** -12, steps=512)
    masses = []
    for lam in (0.25, 0.5, 1.0):
        spec = TestFunctionSpec(lam, (256 * g.dt, 0.5, 0.5))
        masses.append(pair(np.ones((g.frames, 64, 64)), g, spec).real)
    assert np.allclose(masses, TestFunctionSpec(1.0).mass(), rtol=2e-3)


def test_unresolved_lambda_and_window_errors():
    g = GridSpec(16, 2.0 ** -8, steps=64)
    with pytest.raises(ValueError, match="not resolved"):
        harness.test_function_on_grid(g, TestFunctionSpec(0.1, (0.125, 0.5, 0.5)))
    with pytest.raises(ValueError, match="leaves the time window"):
        harness.test_function_on_grid(g, TestFunctionSpec(1.0, (0.01, 0.5, 0.5)))
    with pytest.raises(ValueError):
        TestFunctionSpec(2.0)


def test_eps_must_resolve_smallest_lambda(params):
    with pytest.raises(ValueError, match="too large"):
        mc_moments(Xi(1), 0.0, params, [0.25, 0.5], replicas=100)
    with pytest.raises(ValueError, match="100 replicas"):
        mc_moments(Xi(1), 0.0, params, [0.5, 1.0], replicas=10)


def test_guard_refuses_large_plans():
    p = ModelParams.from_beta2_pi(5.0, eps=2.0 ** -7)
    plan = plan_moments(p, [0.125, 1.0])
    assert plan.points > 3e7
    with pytest.raises(ResourceRefusal, match="refusing"):
        mc_moments(Xi(1), 0.0, p, [0.125, 1.0], replicas=100)


def test_monopole_mc_agrees_with_oracle(params):
    lams = [0.5, 1.0]
    recs = mc_moments(Xi(1), {"zero": 0.0, "const": 5.0}, params, lams, replicas=200, seed=11, n_basepoints=2)
    plan = plan_moments(params, lams, n_basepoints=2)
    g = GridSpec(plan.n, plan.dt, 0.0, plan.frames - 1)
    for r in recs["zero"]:
        k, i, j = plan.basepoints[0]
        spec = TestFunctionSpec(r.lam, (k * g.dt, i * g.dx, j * g.dx))
        orc = monopole_oracle_N1(0.0, params, spec, g)
        assert abs(r.moment - orc) < 4 * r.stderr + 1e-3 * orc
        assert r.envelope_violations == 0
    # a constant theta is a pure phase: the moments are identical draw by draw
    for a, b in zip(recs["zero"], recs["const"]):
        assert a.moment == pytest.approx(b.moment, rel=1e-10)


def test_fit_scaling_exact_power():
    recs = [MomentRecord("x", "z", l, 1, 100, (3 * l ** -0.7) ** 2, 1e-6) for l in (0.125, 0.25, 0.5, 1.0)]
    fit = fit_scaling(recs)
    assert fit.slope == pytest.approx(-0.7, abs=1e-10)
    with pytest.raises(ValueError):
        fit_scaling(recs[:3])


def test_theta_sources(params):
    g = GridSpec(8, 2.0 ** -6, steps=7)
    th = random_smooth_theta(1, amplitude=2.0)(g)
    assert th.shape == (8, 8, 8) and np.max(np.abs(th)) == pytest.approx(2.0)
    assert theta_source("const:1.5", params)[0] == "const1.5"
    assert theta_source("zero", params) == ("zero", 0.0)
    with pytest.raises(ValueError):
        theta_source("wavy", params)


def test_negative_control_expression_differs():
    e = dipole_without_expectation()
    assert "E" not in str(e) or len(e.terms) == 2
