import math

import numpy as np
import pytest

from sglab.grid import GridSpec, ModelParams, SpaceTimeField


def test_derived_exponents_at_5pi():
    p = ModelParams.from_beta2_pi(5.0)
    assert p.kappa == pytest.approx(1e-3 * math.pi, rel=1e-12)
    assert p.beta_bar == pytest.approx(1.25 + 1e-3 * math.pi, rel=1e-12)
    assert p.eta == pytest.approx(-0.18671460183660255, abs=1e-12)
    assert p.beta_bar / 2 - 1 < p.eta < 0


def test_scope_and_eta_interval():
    with pytest.raises(ValueError, match="unsupported regime"):
        ModelParams.from_beta2_pi(6.0)
    with pytest.raises(ValueError, match="admissible interval"):
        ModelParams.from_beta2_pi(5.0, eta=-0.5)
    with pytest.raises(ValueError):
        ModelParams.from_beta2_pi(5.0, m2=0.0)


def test_with_rederives_eta():
    p = ModelParams.from_beta2_pi(5.0)
    q = p.with_(beta2=3 * math.pi)
    assert q.eta == pytest.approx((q.beta_bar / 2 - 1) / 2)


def test_grid_validation_and_rates():
    with pytest.raises(ValueError):
        GridSpec(12, 0.1)
    with pytest.raises(ValueError):
        GridSpec(16, -1.0)
    g = GridSpec(16, 0.01, steps=4)
    assert g.frames == 5 and g.T == pytest.approx(0.04)
    lam = g.heat_rate(1.0)
    assert lam[0, 0] == 1.0
    assert lam[1, 0] == pytest.approx(1 + 2 * math.pi ** 2)


def test_field_shape_checked():
    g = GridSpec(8, 0.1, steps=2)
    with pytest.raises(ValueError):
        SpaceTimeField(g, np.zeros((2, 8, 8)))
    f = SpaceTimeField.zeros(g)
    assert f.is_real() and f.frame(1).time == pytest.approx(0.1)
