"""Numeric identity suites run by ``model-check`` and the tests."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .gmc import StationarySampler
from .harness import random_smooth_theta
from .model import ModelBinding, build_model, dipole_resonance_check
from .noise import SeedLineage
from .trees import candidate_trees, dipole, to_text

ZERO_TOL = 1e-10
RESONANCE_TOL = 1e-8


def _small_sampler(params, n: int = 16):
    # the coarsest eps a 16-point grid resolves, with dt = eps^2 / 4
    eps = max(params.eps, 2.0 / n)
    p = params.with_(eps=eps, eta=None)
    return StationarySampler(n, eps ** 2 / 4, p), p


def zero_trees() -> list:
    """The ++ and -- dipoles and the sixteen tripoles."""
    trees = [dipole(1, 1), dipole(-1, -1)]
    trees += [t for t in candidate_trees() if t.shape() in ("vtripole", "ltripole")]
    return trees


def basepoint_zero_check(params, seed: Optional[int] = 0, n: int = 16, realizations: int = 3,
                         points: int = 4) -> dict:
    """
    tree -> (max over realizations and basepoints of |Pi_x* tau (x*)| / scale, tolerance),
    scale = sup |Pi_x* tau| over the box.
    """
    sampler, p = _small_sampler(params, n)
    rng = np.random.default_rng(seed)
    root = SeedLineage(seed or 0)
    out = {}
    exprs = {to_text(t): build_model(t, p.beta_bar) for t in zero_trees()}
    worst = {k: 0.0 for k in exprs}
    M = sampler.grid.frames
    for r in range(realizations):
        b = sampler.bundle(root.child(r))
        for _ in range(points):
            z = (int(rng.integers(M // 4, 3 * M // 4)), int(rng.integers(n)), int(rng.integers(n)))
            shared: dict = {}
            for name, e in exprs.items():
                f = ModelBinding(b, None, z, shared=shared).field(e)
                scale = max(float(np.max(np.abs(f))), 1e-300)
                worst[name] = max(worst[name], abs(complex(f[z])) / scale)
    for name, v in worst.items():
        out[name] = (v, ZERO_TOL)
    return out


def resonance_identity_check(params, seed: Optional[int] = 0, n: int = 16, points: int = 6) -> float:
    """Largest relative error of the dipole resonance identity for a random smooth theta."""
    sampler, p = _small_sampler(params, n)
    b = sampler.bundle(SeedLineage(seed or 0))
    th = random_smooth_theta(seed or 0, amplitude=2.0)(sampler.grid)
    rng = np.random.default_rng(seed)
    M = sampler.grid.frames
    pts = [(int(rng.integers(M // 4, 3 * M // 4)), int(rng.integers(n)), int(rng.integers(n)))
           for _ in range(points)]
    return dipole_resonance_check(th, b, pts).max_rel_error
