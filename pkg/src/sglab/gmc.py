"""
Linear object Phi_eps = K * zeta_eps, its covariance Q_eps, the renormalization
constant C = exp(beta^2 Q_eps(0) / 2) and the renormalized exponentials
xi_pm = C exp(+- i beta Phi_eps).

Discretely Phi(t_i) = sum_{d, y} a[d, x - y] zeta[i - d, y] where the lag kernel
a = dt dx^2 (K conv rho_eps) combines the causal K table with the mollifier's
look-ahead.  Its autocorrelation times the cell variance 1/(dt dx^2) is the exact
covariance Q_eps of the discrete field; it is computed once on a time-periodic
box at least twice the lag support long (so no wrap-around aliasing) and cached.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .grid import GridSpec, ModelParams, SpaceTimeField
from .kernels import KernelTable, causal_convolve, kernel_lags
from .noise import (DEFAULT_RHO, MollifierSpec, NoiseRealization, SeedLineage, mollifier_hat,
                    mollifier_lookahead, mollify, sample_white_noise)

OVERFLOW_EXPONENT = 700.0
CACHE_ENV = "SGLAB_CACHE_DIR"


class NumericRefusal(RuntimeError):
    """A computation refused because its result would not be representable or resolvable."""


# ---------------------------------------------------------------------------
# lag kernel of Phi and its covariance
# ---------------------------------------------------------------------------


@dataclass
class PhiKernel:
    """Spatial transforms of a[d] for d = d_min..d_max (d_min <= 0 from the look-ahead)."""

    grid: GridSpec
    d_min: int
    hat: np.ndarray  # (d_max - d_min + 1, n, n), plain spatial FFT of a[d]

    @property
    def d_max(self) -> int:
        return self.d_min + self.hat.shape[0] - 1

    @property
    def span(self) -> int:
        return self.hat.shape[0]


def phi_kernel(grid: GridSpec, m2: float, eps: float, rho: MollifierSpec = DEFAULT_RHO,
               ktab: Optional[KernelTable] = None, moment_corrected: bool = False) -> PhiKernel:
    ktab = ktab or KernelTable.build(grid, m2, "K", moment_corrected=moment_corrected)
    rhat = mollifier_hat(grid, rho, eps)  # includes dt dx^2
    Lr = rhat.shape[0]
    J = ktab.lags
    d_min = -(Lr - 1)
    out = np.zeros((J - d_min + 1, grid.n, grid.n), dtype=complex)
    # Phi(t_i) = sum_j dt K_j * zeta_eps(t_{i-j}),  zeta_eps(t_m) = sum_l rho_l * zeta[m + l]
    for j in range(1, J + 1):
        for l in range(Lr):
            out[j - l - d_min] += grid.dt * ktab.hat[j] * rhat[l]
    return PhiKernel(grid, d_min, out)


def covariance_box_length(pk: PhiKernel) -> int:
    return int(sfft.next_fast_len(2 * pk.span + 2))


def _box_transform(pk: PhiKernel, L: int) -> np.ndarray:
    """fftn over (time, space) of the lag kernel a placed periodically on a box of L frames."""
    box = np.zeros((L, pk.grid.n, pk.grid.n), dtype=complex)
    for i in range(pk.span):
        box[(pk.d_min + i) % L] += pk.hat[i]
    return sfft.fft(box, axis=0)


def q_covariance(pk: PhiKernel, L: Optional[int] = None) -> np.ndarray:
    """
    Q[e, x] = Cov(Phi(0, 0), Phi(e dt, x)) for time lags e = 0..L-1 (periodic box) in
    offset layout.  For |e| below L - span the periodic value equals the exact one.
    """
    g = pk.grid
    L = L or covariance_box_length(pk)
    A = _box_transform(pk, L)
    # Q = sigma^2 sum_u a[u] a[u + v] with sigma^2 = 1/(dt dx^2)
    P = np.abs(A) ** 2
    q = sfft.ifft(P, axis=0)
    q = sfft.ifft2(q, axes=(1, 2)).real
    return q / (g.dt * g.dx ** 2)


def q_zero(pk: PhiKernel) -> float:
    """Q(0) = sigma^2 sum |a|^2 via Parseval, no box needed."""
    g = pk.grid
    return float(np.sum(np.abs(pk.hat) ** 2) / g.n ** 2 / (g.dt * g.dx ** 2))


def q_zero_streaming(n: int, dt: float, m2: float, eps: float, rho: MollifierSpec = DEFAULT_RHO) -> float:
    """
    Q_eps(0) without holding the full K table: lags are generated one at a time.
    Used for small eps where the table would not fit in memory.
    """
    grid = GridSpec(n, dt, 0.0, 1)
    rhat = mollifier_hat(grid, rho, eps)
    Lr = rhat.shape[0]
    J = kernel_lags(dt)
    from .kernels import cutoff_chi
    X1, X2 = grid.torus_offsets()
    lam = grid.heat_rate(m2)
    # a[d] = sum_{j - l = d} dt K_j rho_l; d is complete once j passes d + Lr - 1
    acc = 0.0
    pending: dict = {}
    for j in range(1, J + 1):
        t = j * dt
        g = sfft.ifft2(np.exp(-t * lam)).real * n ** 2
        kh = sfft.fft2(cutoff_chi(t, X1, X2) * g) * grid.dx ** 2
        for l in range(Lr):
            d = j - l
            pending[d] = pending.get(d, 0) + dt * kh * rhat[l]
        for d in [d for d in pending if d <= j - (Lr - 1)]:
            acc += float(np.sum(np.abs(pending.pop(d)) ** 2))
    for d in list(pending):
        acc += float(np.sum(np.abs(pending.pop(d)) ** 2))
    return acc / n ** 2 / (dt * grid.dx ** 2)


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------


def _cache_key(grid: GridSpec, m2: float, eps: float, rho: MollifierSpec, moment_corrected: bool) -> str:
    d = dict(n=grid.n, dt=repr(grid.dt), m2=repr(m2), eps=repr(eps), rho=rho.content_hash(),
             mc=moment_corrected, v=1)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:20]


_MEM_CACHE: dict = {}


def write_flat(path: Path, arr: np.ndarray, header: dict) -> None:
    """Flat little-endian binary array plus a text sidecar describing it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    a = np.ascontiguousarray(arr)
    tmp = path.with_suffix(path.suffix + ".tmp")
    a.astype(a.dtype.newbyteorder("<")).tofile(tmp)
    os.replace(tmp, path)
    meta = dict(header)
    meta.update(dtype=a.dtype.str.replace(">", "<"), shape=list(a.shape))
    side = path.with_suffix(path.suffix + ".txt")
    side.write_text("\n".join(f"{k} = {json.dumps(v)}" for k, v in meta.items()) + "\n")


def read_flat(path: Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    side = path.with_suffix(path.suffix + ".txt")
    meta = {}
    for line in side.read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            meta[k] = json.loads(v)
    a = np.fromfile(path, dtype=np.dtype(meta["dtype"])).reshape(meta["shape"])
    return a, meta


def cached_q(grid: GridSpec, m2: float, eps: float, rho: MollifierSpec = DEFAULT_RHO,
             moment_corrected: bool = False, ktab: Optional[KernelTable] = None,
             cache_dir: Optional[str] = None) -> tuple[np.ndarray, PhiKernel]:
    key = _cache_key(grid, m2, eps, rho, moment_corrected)
    if key in _MEM_CACHE:
        return _MEM_CACHE[key]
    pk = phi_kernel(grid, m2, eps, rho, ktab=ktab, moment_corrected=moment_corrected)
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    q = None
    if cache_dir:
        p = Path(cache_dir) / f"q_{key}.bin"
        if p.exists():
            q, _ = read_flat(p)
    if q is None:
        q = q_covariance(pk)
        if cache_dir:
            write_flat(Path(cache_dir) / f"q_{key}.bin", q,
                       dict(n=grid.n, dt=grid.dt, m2=m2, eps=eps, rho=rho.content_hash(),
                            moment_corrected=moment_corrected))
    _MEM_CACHE[key] = (q, pk)
    return q, pk


# ---------------------------------------------------------------------------
# bundle
# ---------------------------------------------------------------------------


@dataclass
class GmcBundle:
    grid: GridSpec
    params: ModelParams
    phi: np.ndarray
    r_smooth: Optional[np.ndarray]
    c_renorm: float
    xi_plus: np.ndarray
    xi_minus: np.ndarray
    q_cov: np.ndarray  # Q[e, x] for lags e >= 0 (even in e and x)
    ktab: KernelTable
    rho: MollifierSpec = DEFAULT_RHO

    @property
    def j_plus(self) -> np.ndarray:
        return np.exp(-self.params.beta2 * self.q_cov)

    @property
    def j_minus(self) -> np.ndarray:
        return np.exp(self.params.beta2 * self.q_cov)

    def kj_table(self, sign: int = -1) -> KernelTable:
        """K * J^- (sign=-1) or K * J (sign=+1) on the K lags."""
        J = self.ktab.lags
        q = self.q_cov[: J + 1]
        if q.shape[0] < J + 1:
            raise ValueError("covariance table shorter than the kernel support")
        w = np.exp(-sign * self.params.beta2 * q)
        return self.ktab.times_field(w, "KJ-" if sign < 0 else "KJ+")


def renorm_constant(beta2: float, q0: float) -> float:
    e = beta2 * q0 / 2
    if beta2 * q0 > OVERFLOW_EXPONENT:
        raise NumericRefusal(
            f"beta^2 Q_eps(0) = {beta2 * q0:.4g} exceeds {OVERFLOW_EXPONENT}; eps too small for float range"
        )
    return math.exp(e)


def heat_convolve(f: np.ndarray, grid: GridSpec, m2: float, history: str = "zero") -> np.ndarray:
    """
    (G * f)(t_i) = dt sum_{j >= 1} G_n(j dt) * f(t_{i-j}) by the exact per-mode recursion
    Y_{i+1} = e^{-lam dt} (Y_i + dt f_i); ``history`` is "zero" or "periodic".
    """
    lam = grid.heat_rate(m2)
    dec = np.exp(-lam * grid.dt)
    fh = sfft.fft2(f, axes=(1, 2))
    M = f.shape[0]
    Y = np.zeros_like(fh)
    y = np.zeros(fh.shape[1:], dtype=complex)
    if history == "periodic":
        # steady state of the periodic recursion: run once, then correct the start value
        for i in range(M):
            y = dec * (y + grid.dt * fh[i])
        y = y / (1.0 - dec ** M)
    elif history != "zero":
        raise ValueError(f"unknown history mode {history!r}")
    for i in range(M):
        Y[i] = y
        y = dec * (y + grid.dt * fh[i])
    out = sfft.ifft2(Y, axes=(1, 2))
    return out.real if not np.iscomplexobj(f) else out


def build_gmc(zeta_eps: SpaceTimeField, params: ModelParams, rho: MollifierSpec = DEFAULT_RHO,
              history: str = "periodic", with_remainder: bool = True, moment_corrected: bool = False,
              ktab: Optional[KernelTable] = None) -> GmcBundle:
    """
    Phi = K * zeta_eps (causal lag sum), R = (G - K) * zeta_eps, C, xi_pm and Q.
    ``history`` = "periodic" treats the window as one period of a stationary field
    (exact stationary law when the window is at least twice the lag support);
    "zero" sets zeta_eps to zero before the window.
    """
    grid = zeta_eps.grid
    ktab = ktab or KernelTable.build(grid, params.m2, "K", moment_corrected=moment_corrected)
    q, _ = cached_q(grid, params.m2, params.eps, rho, moment_corrected=moment_corrected, ktab=ktab)
    c = renorm_constant(params.beta2, float(q[0, 0, 0]))
    phi = causal_convolve(ktab, zeta_eps.values, history=history)
    r = None
    if with_remainder:
        r = heat_convolve(zeta_eps.values, grid, params.m2, history=history) - phi
    e = np.exp(1j * params.beta * phi)
    return GmcBundle(grid, params, phi, r, c, c * e, c * np.conj(e), q, ktab, rho)


# ---------------------------------------------------------------------------
# stationary sampling on a periodic box
# ---------------------------------------------------------------------------


class StationarySampler:
    """
    Exact samples of the stationary discrete Phi_eps on a time-periodic box.

    The box has L frames with L >= 2 * (lag support) so the periodic field has the
    same finite-dimensional law as the stationary one on every sub-window of length
    L - (lag support).  One draw costs one noise array and one (inverse) FFT pair.
    """

    def __init__(self, n: int, dt: float, params: ModelParams, rho: MollifierSpec = DEFAULT_RHO,
                 frames: Optional[int] = None, moment_corrected: bool = False):
        self.params = params
        self.rho = rho
        g0 = GridSpec(n, dt, 0.0, 1)
        ktab = KernelTable.build(g0, params.m2, "K", moment_corrected=moment_corrected)
        self.ktab = ktab
        self.q, self.pk = cached_q(g0, params.m2, params.eps, rho, moment_corrected, ktab=ktab)
        L = max(frames or 0, covariance_box_length(self.pk))
        L = int(sfft.next_fast_len(L))
        self.L = L
        self.grid = GridSpec(n, dt, 0.0, L - 1)
        self.A = _box_transform(self.pk, L)  # time-FFT of spatially transformed lag kernel
        # the lag kernel is real, so the half spectrum along the last axis suffices
        self.A_r = np.ascontiguousarray(self.A[..., : n // 2 + 1])
        self.c = renorm_constant(params.beta2, float(self.q[0, 0, 0]))

    def q_table(self) -> np.ndarray:
        return self.q

    def phi(self, lineage: SeedLineage) -> np.ndarray:
        z = sample_white_noise(self.grid, lineage).zeta.values
        zh = sfft.rfftn(z)
        zh *= self.A_r
        return sfft.irfftn(zh, s=z.shape)

    def bundle(self, lineage: SeedLineage) -> GmcBundle:
        phi = self.phi(lineage)
        e = np.exp(1j * self.params.beta * phi)
        return GmcBundle(self.grid, self.params, phi, None, self.c, self.c * e, self.c * np.conj(e),
                         self.q, self.ktab, self.rho)


def modified_noise(bundle: GmcBundle, theta) -> tuple[np.ndarray, np.ndarray]:
    """xi_pm^theta = exp(+- i beta theta) xi_pm."""
    th = theta.values if isinstance(theta, SpaceTimeField) else np.asarray(theta)
    if np.iscomplexobj(th):
        raise ValueError("theta must be real-valued")
    ph = np.exp(1j * bundle.params.beta * th)
    return ph * bundle.xi_plus, np.conj(ph) * bundle.xi_minus


# ---------------------------------------------------------------------------
# covariance check
# ---------------------------------------------------------------------------


@dataclass
class CovarianceReport:
    offsets: list
    emp_pm: np.ndarray
    se_pm: np.ndarray
    emp_pp: np.ndarray
    se_pp: np.ndarray
    exact_pm: np.ndarray
    exact_pp: np.ndarray
    replicas: int
    jj_product_error: float

    def z_scores(self) -> tuple[np.ndarray, np.ndarray]:
        # at z = 0 the + - product is deterministic (|xi|^2 = C^2): floor the error by rounding
        fpm = np.maximum(self.se_pm, 1e-10 * np.abs(self.exact_pm))
        fpp = np.maximum(self.se_pp, 1e-10 * np.abs(self.exact_pp))
        zpm = np.abs(self.emp_pm - self.exact_pm) / fpm
        zpp = np.abs(self.emp_pp - self.exact_pp) / fpp
        return zpm, zpp


def covariance_check(sampler: StationarySampler, offsets: Sequence[tuple[int, int, int]], replicas: int,
                     seed: int) -> CovarianceReport:
    """
    Empirical E[xi_+(0) xi_-(z)] and E[xi_+(0) xi_+(z)] for lattice offsets z = (e, i, j)
    against e^{+beta^2 Q(z)} and e^{-beta^2 Q(z)}.  Each replica contributes the average
    over all base points of its periodic box (the box law is shift invariant).
    """
    if replicas < 100:
        raise ValueError("covariance_check needs at least 100 replicas")
    b2 = sampler.params.beta2
    beta = sampler.params.beta
    q = sampler.q
    c2 = sampler.c ** 2
    K = len(offsets)
    spm = np.zeros((replicas, K))
    spp = np.zeros((replicas, K))
    base = SeedLineage(seed)
    idx = tuple(np.array(o) for o in zip(*offsets))
    for r in range(replicas):
        phi = sampler.phi(base.child(r))
        # box averages of Re e(u) conj(e(u+v)) and Re e(u) e(u+v) for all lags v at once,
        # from the autocorrelations of cos(beta phi) and sin(beta phi)
        ch = sfft.rfftn(np.cos(beta * phi))
        sh = sfft.rfftn(np.sin(beta * phi))
        pc = np.abs(ch) ** 2
        ps = np.abs(sh) ** 2
        N = phi.size
        corr_pm = sfft.irfftn(pc + ps, s=phi.shape) / N
        corr_pp = sfft.irfftn(pc - ps, s=phi.shape) / N
        spm[r] = c2 * corr_pm[idx]
        spp[r] = c2 * corr_pp[idx]
    L = q.shape[0]
    exact_q = np.array([q[o[0] % L, o[1] % q.shape[1], o[2] % q.shape[2]] for o in offsets])
    jp = np.exp(-b2 * exact_q)
    jm = np.exp(b2 * exact_q)
    err = float(np.max(np.abs(np.exp(-b2 * q) * np.exp(b2 * q) - 1.0)))
    return CovarianceReport(
        list(offsets), spm.mean(axis=0), spm.std(axis=0, ddof=1) / math.sqrt(replicas),
        spp.mean(axis=0), spp.std(axis=0, ddof=1) / math.sqrt(replicas), jm, jp, replicas, err)
