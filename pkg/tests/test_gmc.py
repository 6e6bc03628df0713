import math

import numpy as np
import pytest

from sglab.gmc import (NumericRefusal, StationarySampler, build_gmc, covariance_check, heat_convolve,
                       modified_noise, q_zero_streaming, renorm_constant)
from sglab.grid import GridSpec, ModelParams
from sglab.noise import DEFAULT_RHO, SeedLineage, mollify, sample_white_noise


@pytest.fixture(scope="module")
def sampler():
    p = ModelParams.from_beta2_pi(5.0, eps=2.0 ** -3)
    return StationarySampler(16, 2.0 ** -8, p)


def test_j_product_is_one(sampler):
    b = sampler.bundle(SeedLineage(0))
    assert np.max(np.abs(b.j_plus * b.j_minus - 1)) < 1e-12


def test_xi_modulus_is_c(sampler):
    b = sampler.bundle(SeedLineage(1))
    assert np.allclose(np.abs(b.xi_plus), b.c_renorm, rtol=1e-12)
    assert np.allclose(b.xi_minus, np.conj(b.xi_plus))


def test_modified_noise_phase(sampler):
    b = sampler.bundle(SeedLineage(2))
    xp, xm = modified_noise(b, np.full(b.phi.shape, 0.3))
    assert np.allclose(xp, np.exp(1j * b.params.beta * 0.3) * b.xi_plus)
    with pytest.raises(ValueError):
        modified_noise(b, np.zeros(b.phi.shape, dtype=complex))


def test_streaming_q_matches_table(sampler):
    p = sampler.params
    q0 = q_zero_streaming(16, 2.0 ** -8, p.m2, p.eps)
    assert q0 == pytest.approx(sampler.q[0, 0, 0], rel=1e-10)


def test_q_grows_like_log_inverse_eps():
    # Q(0) increases by roughly log(2) / 2pi per halving of eps
    qs = [q_zero_streaming(int(2 / e), e * e / 4, 1.0, e) for e in (2.0 ** -2, 2.0 ** -3, 2.0 ** -4)]
    d = np.diff(qs)
    assert np.all(d > 0.05) and np.all(d < 0.15)


def test_renorm_overflow_refused():
    with pytest.raises(NumericRefusal):
        renorm_constant(5 * math.pi, 100.0)


def test_periodic_history_matches_sampler_law():
    p = ModelParams.from_beta2_pi(5.0, eps=2.0 ** -3)
    g = GridSpec(16, 2.0 ** -8, steps=127)
    z = mollify(sample_white_noise(g, SeedLineage(3)).zeta, DEFAULT_RHO, p.eps)
    b = build_gmc(z, p)
    assert b.phi.shape == (128, 16, 16) and np.isrealobj(b.phi)
    assert b.r_smooth is not None
    # the remainder is smoother than Phi
    assert np.std(np.diff(b.r_smooth, axis=1)) < np.std(np.diff(b.phi, axis=1))


def test_heat_convolve_constant_source():
    g = GridSpec(8, 2.0 ** -8, steps=2047)
    f = np.ones((g.frames, 8, 8))
    out = heat_convolve(f, g, 1.0, history="periodic")
    dec = math.exp(-g.dt)
    # fixed point of Y = dec (Y + dt) in every frame
    assert np.allclose(out, dec * g.dt / (1 - dec), rtol=1e-9)


def test_small_covariance_check(sampler):
    offs = [(0, 0, 0), (0, 1, 0), (1, 0, 0), (2, 1, 1)]
    rep = covariance_check(sampler, offs, replicas=100, seed=5)
    zpm, zpp = rep.z_scores()
    assert rep.jj_product_error < 1e-12
    assert np.all(zpm < 5) and np.all(zpp < 5)
