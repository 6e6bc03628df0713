"""
Spectral tools on the unit torus: sharp Littlewood-Paley blocks, the weighted
Hoelder-Besov norm sup_N N^alpha |P_N f|_inf, the damped heat semigroup, the
Duhamel integral and the S / N norms used by the resonant fixed point.

All routines accept raw numpy arrays or the wrapper types from ``grid`` and
return the same kind of object they were given.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .grid import FieldSnapshot, GridSpec, SpaceTimeField


def _arr(f):
    if isinstance(f, (FieldSnapshot, SpaceTimeField)):
        return f.values
    return np.asarray(f)


def _rewrap(like, values):
    if isinstance(like, FieldSnapshot):
        return FieldSnapshot(values, like.time)
    if isinstance(like, SpaceTimeField):
        return SpaceTimeField(like.grid, values)
    return values


def fft2(a):
    return sfft.fft2(a, axes=(-2, -1))


def ifft2(a, real: bool = False):
    out = sfft.ifft2(a, axes=(-2, -1))
    return out.real if real else out


def dyadic_levels(n: int) -> list[int]:
    """N = 1, 2, 4, ..., n/2."""
    out, N = [], 1
    while N <= n // 2:
        out.append(N)
        N *= 2
    return out


@lru_cache(maxsize=32)
def _band_masks(n: int) -> dict:
    k = np.fft.fftfreq(n, d=1.0 / n)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    kk = np.sqrt(k1 ** 2 + k2 ** 2)
    levels = dyadic_levels(n)
    top = levels[-1]
    masks = {}
    for N in levels:
        if N == 1:
            m = kk < 1
        elif N == top:
            # the last block absorbs every remaining resolvable frequency (corners, Nyquist)
            m = kk >= N / 2
        else:
            m = (kk >= N / 2) & (kk < N)
        m.setflags(write=False)
        masks[N] = m
    return masks


def _check_level(n: int, N) -> int:
    if not isinstance(N, (int, np.integer)) or N < 1 or (N & (N - 1)) != 0:
        raise ValueError(f"N must be a dyadic integer 1, 2, 4, ..., got {N!r}")
    if N > n // 2:
        raise ValueError(f"N = {N} exceeds the Nyquist block n/2 = {n // 2}")
    return int(N)


def lp_project(f, N: int):
    """Sharp annulus projection onto frequencies N/2 <= |k| < N (N = 1 keeps only k = 0)."""
    a = _arr(f)
    n = a.shape[-1]
    N = _check_level(n, N)
    out = ifft2(fft2(a) * _band_masks(n)[N], real=not np.iscomplexobj(a))
    return _rewrap(f, out)


def besov_norm(f, alpha: float) -> float:
    """sup_N N^alpha ||P_N f||_inf; for space-time input the sup is also taken over frames."""
    return float(np.max(besov_norm_frames(_arr(f), alpha)))


def besov_norm_frames(a: np.ndarray, alpha: float) -> np.ndarray:
    """Per-frame Besov norm of an (..., n, n) array."""
    a = np.asarray(a)
    n = a.shape[-1]
    fh = fft2(a)
    best = np.zeros(a.shape[:-2])
    for N, m in _band_masks(n).items():
        blk = ifft2(fh * m)
        s = np.max(np.abs(blk), axis=(-2, -1)) * float(N) ** alpha
        best = np.maximum(best, s)
    return best


def heat_multiplier(n: int, t: float, m2: float) -> np.ndarray:
    k = np.fft.fftfreq(n, d=1.0 / n)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    return np.exp(-t * (m2 + 2.0 * math.pi ** 2 * (k1 ** 2 + k2 ** 2)))


def heat_semigroup(f, t: float, m2: float):
    """e^{t(-m^2 + Delta/2)} f via the Fourier multiplier exp(-t(m^2 + |2 pi k|^2/2))."""
    if t < 0:
        raise ValueError(f"heat semigroup needs t >= 0, got {t}")
    a = _arr(f)
    if t == 0:
        return _rewrap(f, a.copy())
    out = ifft2(fft2(a) * heat_multiplier(a.shape[-1], t, m2), real=not np.iscomplexobj(a))
    return _rewrap(f, out)


def free_evolution(u0, grid: GridSpec, m2: float) -> SpaceTimeField:
    """Frames e^{(t_k - t0) L} u0 for k = 0..steps."""
    a = _arr(u0)
    lam = grid.heat_rate(m2)
    fh = fft2(a)
    tk = (np.arange(grid.frames) * grid.dt)[:, None, None]
    out = ifft2(fh[None] * np.exp(-tk * lam[None]), real=not np.iscomplexobj(a))
    return SpaceTimeField(grid, out)


def duhamel(F: SpaceTimeField, m2: float) -> SpaceTimeField:
    """
    Duh[F](t) = int_{t0}^t e^{(t-s)(-m^2+Delta/2)} F(s) ds.

    Exponential Euler per Fourier mode: on [t_k, t_k+dt] the forcing is frozen
    at F(t_k) and integrated exactly against the semigroup (first order in dt).
    """
    g = F.grid
    a = F.values
    lam = g.heat_rate(m2)
    decay = np.exp(-lam * g.dt)
    phi1 = -np.expm1(-lam * g.dt) / lam
    Fh = fft2(a)
    out = np.zeros_like(Fh)
    for k in range(g.steps):
        out[k + 1] = decay * out[k] + phi1 * Fh[k]
    return SpaceTimeField(g, ifft2(out, real=not np.iscomplexobj(a)))


def parabolic_operator(u: SpaceTimeField, m2: float) -> np.ndarray:
    """
    Discrete (d_t - Delta/2 + m^2) u at the half steps t_{k+1/2}: forward
    difference in time, spatial part averaged over the two end frames.
    Returns an array with ``steps`` frames.
    """
    lam = u.grid.heat_rate(m2)
    uh = fft2(u.values)
    d = (uh[1:] - uh[:-1]) / u.grid.dt + lam * 0.5 * (uh[1:] + uh[:-1])
    return ifft2(d, real=not np.iscomplexobj(u.values))


def half_step_average(F: SpaceTimeField) -> np.ndarray:
    return 0.5 * (F.values[1:] + F.values[:-1])


def duhamel_residual(D: SpaceTimeField, F: SpaceTimeField, m2: float) -> float:
    """sup-norm of (d_t - Delta/2 + m^2) Duh[F] - F at half steps."""
    r = parabolic_operator(D, m2) - half_step_average(F)
    return float(np.max(np.abs(r)))


# ---------------------------------------------------------------------------
# S and N norms
# ---------------------------------------------------------------------------

_PAIR_SEED = 20240601


def _torus_dist(dx1, dx2):
    dx1 = np.abs(dx1) % 1.0
    dx2 = np.abs(dx2) % 1.0
    dx1 = np.minimum(dx1, 1.0 - dx1)
    dx2 = np.minimum(dx2, 1.0 - dx2)
    return np.sqrt(dx1 ** 2 + dx2 ** 2)


def _check_window(field: SpaceTimeField, eta: float):
    if not eta < 0:
        raise ValueError(f"the weighted norms are defined for eta < 0, got {eta}")
    if field.grid.steps < 1:
        raise ValueError("window needs at least one step after its start")


def lipschitz_part(theta: SpaceTimeField, eta: float, n_random: int = 4096) -> float:
    """
    Sampled sup of s^{(1-eta)/2} |theta(z) - theta(z')| / ||z - z'||_s with s the
    earlier of the two (window-relative) times, s > 0.  Uses every nearest-neighbour
    pair (both space directions and the time direction) plus ``n_random`` random pairs
    drawn from a fixed stream so that the norm is a deterministic function.
    """
    g = theta.grid
    v = theta.values
    dt, dx = g.dt, g.dx
    w = (np.arange(g.frames) * dt) ** ((1 - eta) / 2)
    best = 0.0
    if g.frames > 1:
        vv = v[1:]
        ww = w[1:, None, None]
        for ax in (1, 2):
            d = np.abs(np.roll(vv, -1, axis=ax) - vv)
            best = max(best, float(np.max(ww * d)) / dx)
        d = np.abs(v[2:] - v[1:-1]) if g.frames > 2 else np.zeros((0,))
        if d.size:
            best = max(best, float(np.max(w[1:-1, None, None] * d)) / math.sqrt(dt))
    if n_random > 0 and g.frames > 1:
        rng = np.random.Generator(np.random.Philox(_PAIR_SEED))
        k1 = rng.integers(1, g.frames, size=n_random)
        k2 = rng.integers(1, g.frames, size=n_random)
        i1, j1, i2, j2 = (rng.integers(0, g.n, size=n_random) for _ in range(4))
        dist = np.sqrt(np.abs(k1 - k2) * dt) + _torus_dist((i1 - i2) * dx, (j1 - j2) * dx)
        ok = dist > 0
        diff = np.abs(v[k1, i1, j1] - v[k2, i2, j2])
        s = np.minimum(k1, k2) * dt
        q = s[ok] ** ((1 - eta) / 2) * diff[ok] / dist[ok]
        if q.size:
            best = max(best, float(np.max(q)))
    return best


def s_norm(theta: SpaceTimeField, eta: float, n_random: int = 4096) -> float:
    """sup_t ||theta(t)||_{C^eta} plus the weighted parabolic Lipschitz seminorm."""
    _check_window(theta, eta)
    return float(np.max(besov_norm_frames(theta.values, eta))) + lipschitz_part(theta, eta, n_random)


def n_norm(F: SpaceTimeField, eta: float) -> float:
    """sup over t > 0 (window-relative) and x of t^{(1-eta)/2} |F(t, x)|."""
    _check_window(F, eta)
    g = F.grid
    t = np.arange(1, g.frames) * g.dt
    m = np.max(np.abs(F.values[1:]), axis=(1, 2))
    return float(np.max(t ** ((1 - eta) / 2) * m))


def named_profile(name: str, n: int, seed: int = 0) -> np.ndarray:
    """
    Initial-data shapes used by the drivers: "smooth" (two low modes), "rough"
    (iid Gaussian grid values) and "bump" (a periodic Gaussian).
    """
    x = np.arange(n) / n
    if name == "smooth":
        return np.sin(2 * math.pi * x)[:, None] + 0.5 * np.cos(2 * math.pi * x)[None, :]
    if name == "rough":
        return np.random.default_rng(seed).standard_normal((n, n))
    if name == "bump":
        d = np.minimum(np.abs(x - 0.5), 1 - np.abs(x - 0.5))
        return np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / (2 * 0.1 ** 2))
    raise ValueError(f"unknown profile {name!r}; expected smooth, rough or bump")


def scaled_profile(name: str, n: int, norm: float, eta: float, seed: int = 0) -> np.ndarray:
    """``named_profile`` rescaled to the given C^eta norm."""
    u = named_profile(name, n, seed)
    return u * (norm / besov_norm(u, eta))
