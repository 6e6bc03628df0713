import math

import pytest

from sglab.grid import ModelParams
from sglab.trees import (candidate_trees, dipole, enumerate_Tminus, homogeneity, homogeneity_symbolic,
                         ltripole, parse_tree, to_text, vtripole)


@pytest.mark.parametrize("b2pi,count", [(5.0, 10), (5.8, 26), (3.0, 2)])
def test_counts(b2pi, count):
    assert len(enumerate_Tminus(ModelParams.from_beta2_pi(b2pi))) == count


def test_monotone_in_beta():
    prev = 0
    for b in (1.0, 3.0, 4.2, 5.0, 5.5, 5.8, 5.99):
        k = len(enumerate_Tminus(ModelParams.from_beta2_pi(b)))
        assert k >= prev
        prev = k


def test_scope():
    with pytest.raises(ValueError, match="unsupported regime"):
        ModelParams.from_beta2_pi(6.0)


def test_homogeneities_negative_and_consistent():
    p = ModelParams.from_beta2_pi(5.0)
    for t in enumerate_Tminus(p):
        h = homogeneity(t, p.beta_bar)
        a, b = homogeneity_symbolic(t)
        assert h < 0
        assert h == pytest.approx(a - b * p.beta_bar, abs=1e-12)


def test_dipole_homogeneity():
    bb = ModelParams.from_beta2_pi(5.0).beta_bar
    assert homogeneity(dipole(1, -1), bb) == pytest.approx(2 - 2 * bb, abs=1e-12)


def test_text_round_trip():
    for t in candidate_trees():
        assert parse_tree(to_text(t)).same_as(t)


def test_canonical_and_mirror():
    a = vtripole(-1, 1, -1)
    b = vtripole(-1, -1, 1)
    assert a.same_as(b)
    assert ltripole(1, -1, 1).mirror().same_as(ltripole(-1, 1, -1))
    assert dipole(1, -1).signs() != dipole(-1, 1).signs()
