import math

import numpy as np
import pytest

from conftest import smooth_field
from sglab.grid import GridSpec, SpaceTimeField
from sglab.spectral import (besov_norm, dyadic_levels, duhamel, duhamel_residual, heat_semigroup, lp_project, named_profile,
                            scaled_profile)


def test_projections_partition_unity(rng):
    f = rng.standard_normal((32, 32))
    total = sum(lp_project(f, N) for N in dyadic_levels(32))
    assert np.allclose(total, f, atol=1e-12)


@pytest.mark.parametrize("alpha", [-0.5, -0.2, 0.3, 0.8])
def test_heat_contraction(alpha, rng):
    m2, t = 1.0, 0.05
    f = rng.standard_normal((32, 32)) + 3.0
    r = besov_norm(heat_semigroup(f, t, m2), alpha) / besov_norm(f, alpha)
    assert r <= math.exp(-m2 * t) * (1 + 1e-12)
    c = np.full((32, 32), 2.0)
    rc = besov_norm(heat_semigroup(c, t, m2), alpha) / besov_norm(c, alpha)
    assert rc == pytest.approx(math.exp(-m2 * t), rel=1e-12)


def test_duhamel_first_order():
    res = []
    for dt in (2.0 ** -8, 2.0 ** -9, 2.0 ** -10):
        g = GridSpec(16, dt, steps=int(round(0.125 / dt)))
        F = SpaceTimeField.from_function(g, lambda t, x, y: np.sin(2 * np.pi * x) * np.cos(9 * t))
        res.append(duhamel_residual(duhamel(F, 1.0), F, 1.0))
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(orders > 0.9)


def test_profiles():
    assert besov_norm(scaled_profile("smooth", 32, 4.0, -0.2), -0.2) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        named_profile("zigzag", 8)
    assert smooth_field(16).shape == (16, 16)
