import numpy as np
import pytest

from sglab.checks import RESONANCE_TOL, ZERO_TOL, basepoint_zero_check, resonance_identity_check
from sglab.grid import ModelParams
from sglab.model import F_map, check_golden, premodel
from sglab.trees import Xi, dipole


@pytest.fixture(scope="module")
def params():
    return ModelParams.from_beta2_pi(5.0, eps=2.0 ** -3)


@pytest.mark.parametrize("b2pi", [5.0, 5.8])
def test_golden_forms(b2pi):
    res = check_golden(ModelParams.from_beta2_pi(b2pi).beta_bar)
    assert res and all(res.values()), res


def test_premodel_of_noise_is_noise_atom():
    assert "Xi" in str(premodel(Xi(1))) or str(premodel(Xi(1)))


def test_F_of_single_noise_has_no_counterterm(params):
    f = F_map(Xi(1), params.beta_bar)
    assert len(list(f)) == 1


def test_basepoint_zeros(params):
    out = basepoint_zero_check(params, seed=3, realizations=2, points=3)
    assert len(out) == 18
    for name, (v, tol) in out.items():
        assert tol == ZERO_TOL
        assert v <= tol, name


def test_resonance_identity(params):
    assert resonance_identity_check(params, seed=4) <= RESONANCE_TOL
