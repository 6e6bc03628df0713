import math

import numpy as np
import pytest

from conftest import smooth_field
from sglab.gmc import StationarySampler
from sglab.grid import ModelParams, SpaceTimeField, GridSpec
from sglab.noise import SeedLineage
from sglab.resonant import (ResonantKernel, check_resonant_bound, contraction_exponent, contraction_ratio,
                            resonant_operator, resonant_operator_direct, solve_resonant)
from sglab.spectral import besov_norm


@pytest.fixture(scope="module")
def params():
    return ModelParams.from_beta2_pi(5.0, eps=2.0 ** -3)


def test_operator_matches_direct_quadrature(rng):
    kern = ResonantKernel.build(8, 2.0 ** -6, ModelParams.from_beta2_pi(5.0, eps=0.25))
    th = rng.standard_normal((kern.table.lags + 3, 8, 8))
    for hist in ("constant", "zero", "periodic"):
        a = resonant_operator(th, kern, history=hist)
        b = resonant_operator_direct(th, kern, history=hist)
        assert np.allclose(a, b, rtol=1e-10, atol=1e-12 * np.abs(b).max())


def test_operator_from_bundle_equals_built_kernel():
    params = ModelParams.from_beta2_pi(5.0, eps=0.25)
    s = StationarySampler(8, 2.0 ** -6, params)
    b = s.bundle(SeedLineage(0))
    th = np.random.default_rng(0).standard_normal(b.phi.shape)
    r1 = resonant_operator(th, ResonantKernel.from_bundle(b))
    r2 = resonant_operator(th, ResonantKernel.build(8, 2.0 ** -6, params))
    assert np.allclose(r1, r2, rtol=1e-12)


def test_constant_theta_is_resonance_free():
    kern = ResonantKernel.build(8, 2.0 ** -6, ModelParams.from_beta2_pi(5.0, eps=0.25))
    th = np.full((20, 8, 8), 0.7)
    assert np.max(np.abs(resonant_operator(th, kern))) < 1e-12
    th_f = SpaceTimeField(GridSpec(8, 2.0 ** -6, steps=19), th)
    assert isinstance(resonant_operator(th_f, kern), SpaceTimeField)


def test_solver_converges_and_zero_coupling_is_heat(params):
    kern = ResonantKernel.build(16, 2.0 ** -8, params)
    u0 = smooth_field(16, seed=1)
    run = solve_resonant(u0, kern, T=2.0 ** -5, tol=1e-9)
    assert run.converged and run.distances[-1] <= 1e-9
    free = solve_resonant(u0, kern, T=2.0 ** -5, tol=1e-9, coupling=0.0)
    from sglab.spectral import heat_semigroup
    assert np.allclose(free.final.values, heat_semigroup(u0, 2.0 ** -5, params.m2), atol=1e-10)


def test_short_windows_contract_faster(params):
    kern = ResonantKernel.build(16, 2.0 ** -8, params)
    u0 = 4 * smooth_field(16, seed=2)
    r_long = contraction_ratio(u0, kern, 2.0 ** -3)
    r_short = contraction_ratio(u0, kern, 2.0 ** -6)
    assert r_short < r_long < 1


def test_contraction_exponent_positive():
    assert contraction_exponent(ModelParams.from_beta2_pi(5.0)) > 0


def test_bound_sweep_needs_two_decades(params):
    kern = ResonantKernel.build(16, 2.0 ** -8, params)
    runs = [solve_resonant(a * smooth_field(16, 3), kern, T=2.0 ** -5) for a in (1, 2, 3, 4)]
    with pytest.raises(ValueError, match="two decades"):
        check_resonant_bound(runs)
