"""
Monte-Carlo moments of model objects tested against rescaled bumps, scaling fits,
theta-uniformity sweeps and the quadrature oracle for the N = 1 moment formula.

The test function is psi(s, y) = b(s / a) b(|y| / r) with b(u) = exp(1 - 1/(1 - u^2)),
so ||psi||_inf = 1, and a = 1/16, r = 1/2 (support in the parabolic unit ball since
sqrt(a) + r < 1).  Its rescaling is psi_z^lam(t, x) = lam^{-4} psi((t - t_z)/lam^2, (x - x_z)/lam).
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.fft as sfft

from . import expr as E
from .gmc import NumericRefusal, StationarySampler, cached_q
from .grid import GridSpec, ModelParams, SpaceTimeField
from .kernels import KernelTable
from .model import ModelBinding, build_model
from .noise import DEFAULT_RHO, MollifierSpec, SeedLineage
from .reports import ExperimentReport, MomentRecord, ScalingFit, fit_loglog
from .trees import DecoratedTree, parse_tree, to_text

DEFAULT_POINT_BUDGET = 3.0e7  # space-time grid points per replica array (about 0.5 GB complex)


class ResourceRefusal(NumericRefusal):
    """The requested experiment does not fit the memory / time budget of this machine."""


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - u[m] ** 2))
    return out


@dataclass(frozen=True)
class TestFunctionSpec:
    lam: float
    z: tuple = (0.0, 0.0, 0.0)  # (t, x1, x2)
    t_half: float = 1.0 / 16
    x_radius: float = 0.5
    norm_exponent: float = -4.0

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if math.sqrt(self.t_half) + self.x_radius > 1 + 1e-12:
            raise ValueError("test function support must lie in the parabolic unit ball")

    def base(self, s, y1, y2):
        return _bump(np.asarray(s) / self.t_half) * _bump(np.sqrt(np.asarray(y1) ** 2 + np.asarray(y2) ** 2) / self.x_radius)

    def at(self, t, x1, x2):
        """psi_z^lam at (t, x) with x a torus point (minimum image around z)."""
        lam = self.lam
        d1 = np.asarray(x1) - self.z[1]
        d2 = np.asarray(x2) - self.z[2]
        d1 = d1 - np.round(d1)
        d2 = d2 - np.round(d2)
        return lam ** self.norm_exponent * self.base((np.asarray(t) - self.z[0]) / lam ** 2, d1 / lam, d2 / lam)

    def time_reach(self) -> float:
        return self.t_half * self.lam ** 2

    def with_z(self, z) -> "TestFunctionSpec":
        return TestFunctionSpec(self.lam, tuple(float(v) for v in z), self.t_half, self.x_radius, self.norm_exponent)

    def mass(self) -> float:
        """Continuum integral of psi^lam (lam-independent for the default normalization)."""
        from scipy import integrate
        bt = integrate.quad(lambda s: _bump(s / self.t_half), -self.t_half, self.t_half)[0]
        bx = integrate.quad(lambda r: 2 * math.pi * r * _bump(r / self.x_radius), 0, self.x_radius)[0]
        return bt * bx * self.lam ** (self.norm_exponent + 4)


def min_resolved_lambda(grid: GridSpec) -> float:
    return 4.0 * max(grid.dx, math.sqrt(grid.dt))


def test_function_on_grid(grid: GridSpec, spec: TestFunctionSpec):
    """(k_lo, values) with values[k - k_lo] = psi_z^lam on frame k for the frames meeting the support."""
    if spec.lam < min_resolved_lambda(grid) - 1e-15:
        raise ValueError(f"lambda = {spec.lam:.6g} is not resolved; minimum lambda is "
                         f"{min_resolved_lambda(grid):.6g} (= 4 max(dx, sqrt(dt)))")
    t = grid.times()
    reach = spec.time_reach()
    ks = np.nonzero(np.abs(t - spec.z[0]) < reach)[0]
    if len(ks) == 0:
        raise ValueError("test function support misses every frame")
    if spec.z[0] - reach < t[0] - 1e-12 or spec.z[0] + reach > t[-1] + 1e-12:
        raise ValueError("test function support leaves the time window")
    x = grid.coords()
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    vals = spec.at(t[ks][:, None, None], X1[None], X2[None])
    return int(ks[0]), vals


def pair(values, grid: GridSpec, spec: TestFunctionSpec, psi=None) -> complex:
    """Riemann (= trapezoidal, psi vanishes to all orders at its boundary) sum of f psi dt dx^2."""
    a = values.values if isinstance(values, SpaceTimeField) else np.asarray(values)
    k0, w = psi if psi is not None else test_function_on_grid(grid, spec)
    return complex(np.sum(a[k0: k0 + w.shape[0]] * w) * grid.dt * grid.dx ** 2)


# ---------------------------------------------------------------------------
# the N = 1 oracle
# ---------------------------------------------------------------------------


def _theta_array(theta, grid: GridSpec) -> np.ndarray:
    shape = (grid.frames, grid.n, grid.n)
    if theta is None:
        return np.zeros(shape)
    if isinstance(theta, (int, float)):
        return np.full(shape, float(theta))
    if isinstance(theta, SpaceTimeField):
        theta = theta.values
    if callable(theta):
        out = np.asarray(theta(grid), dtype=float)
    else:
        out = np.asarray(theta, dtype=float)
    if out.shape != shape:
        raise ValueError(f"theta has shape {out.shape}, expected {shape}")
    return out


def monopole_oracle_N1(theta, params: ModelParams, spec: TestFunctionSpec, grid: GridSpec,
                       q: Optional[np.ndarray] = None, rho: MollifierSpec = DEFAULT_RHO,
                       drop_phases: bool = False) -> float:
    """
    E|<e^{i beta theta} xi_+, phi>|^2 = sum_{z, y} g(z) conj(g(y)) J^-(z - y) (dt dx^2)^2,
    g = phi e^{i beta theta}, J^- = exp(beta^2 Q) with the exact discrete covariance Q.
    ``drop_phases`` replaces g by |phi| (the theta-free upper envelope).
    """
    if q is None:
        g0 = GridSpec(grid.n, grid.dt, 0.0, 1)
        q, _ = cached_q(g0, params.m2, params.eps, rho)
    k0, phi = test_function_on_grid(grid, spec)
    W = phi.shape[0]
    if drop_phases:
        g = np.abs(phi).astype(complex)
    else:
        th = _theta_array(theta, grid)[k0: k0 + W]
        g = phi * np.exp(1j * params.beta * th)
    L = q.shape[0]
    n = grid.n
    lags = np.arange(-(W - 1), W)
    Jm = np.ones((len(lags), n, n))
    span_ok = np.abs(lags) < L // 2
    for idx, e in enumerate(lags):
        if span_ok[idx]:
            Jm[idx] = np.exp(params.beta2 * q[abs(e)] if e >= 0 else params.beta2 * q[abs(e)][(-np.arange(n)) % n][:, (-np.arange(n)) % n])
    # S = sum_z g(z) sum_y conj(g(y)) J(z - y): correlate conj(g) with J along time, circularly in space
    Lt = sfft.next_fast_len(3 * W)
    Jh = sfft.fftn(np.roll(np.pad(Jm, ((0, Lt - len(lags)), (0, 0), (0, 0))), -(W - 1), axis=0), axes=(0, 1, 2))
    gh = sfft.fftn(np.conj(g), s=(Lt, n, n), axes=(0, 1, 2))
    conv = sfft.ifftn(Jh * gh, axes=(0, 1, 2))[:W]
    val = np.sum(g * conv) * (grid.dt * grid.dx ** 2) ** 2
    return float(val.real)


# ---------------------------------------------------------------------------
# Monte-Carlo moments
# ---------------------------------------------------------------------------


def _object_expr(obj, params: ModelParams):
    if isinstance(obj, E.Expr):
        return obj, "expr"
    if isinstance(obj, str):
        obj = parse_tree(obj)
    if isinstance(obj, DecoratedTree):
        return build_model(obj, params.beta_bar), to_text(obj)
    raise TypeError("object must be a tree, tree text or an expression")


def dipole_without_expectation(s1: int = 1, s2: int = -1) -> E.Expr:
    """Negative control: the recentered dipole with the E-subtraction left out."""
    a, b = E.xi(s1), E.xi(s2)
    Kb = E.conv(b)
    return a * Kb - a * E.ev(Kb)


def _needs_history(e: E.Expr) -> bool:
    return any(isinstance(a, (E.Conv, E.Expect)) or (isinstance(a, E.Ev) and isinstance(a.atom, E.Conv))
               for a in e.atoms())


@dataclass
class MomentPlan:
    n: int
    dt: float
    frames: int
    basepoints: list  # grid indices (k, i, j)
    points: int
    est_seconds_per_replica: float


def plan_moments(params: ModelParams, lambdas: Sequence[float], n: Optional[int] = None, dt: Optional[float] = None,
                 with_kernels: bool = False, n_basepoints: int = 4, rho: MollifierSpec = DEFAULT_RHO,
                 spec_template: Optional[TestFunctionSpec] = None) -> MomentPlan:
    eps = params.eps
    n = n or int(2 ** math.ceil(math.log2(2.0 / eps)))
    dt = dt or 2.0 ** math.floor(math.log2(eps ** 2 / 4))
    tmpl = spec_template or TestFunctionSpec(max(lambdas))
    reach = tmpl.t_half * max(lambdas) ** 2
    from .kernels import kernel_lags
    from .noise import mollifier_lookahead
    span = kernel_lags(dt) + mollifier_lookahead(rho, eps, dt) + 1
    r = int(math.ceil(reach / dt)) + 1
    hist = kernel_lags(dt) + 1 if with_kernels else 0
    window = 2 * r + 1
    frames = window + span + hist + 2
    L = max(frames, 2 * span + 2)
    k_c = hist + r + 1
    rng = [(0, 0), (n // 2, n // 4), (n // 4, 3 * n // 4), (3 * n // 4, n // 2)]
    bps = [(k_c, i, j) for (i, j) in rng[:n_basepoints]]
    points = L * n * n
    est = points * 2.5e-7 * (3 if with_kernels else 1)
    return MomentPlan(n, dt, L, bps, points, est)


def _guard(plan: MomentPlan, replicas: int, budget_points: float, budget_seconds: Optional[float]):
    if plan.points > budget_points:
        raise ResourceRefusal(
            f"refusing: one replica needs {plan.points:.3g} space-time points (n={plan.n}, dt={plan.dt:.3g}, "
            f"{plan.frames} frames, about {plan.points * 16 * 4 / 1e9:.1f} GB working memory); "
            f"budget is {budget_points:.3g} points")
    if budget_seconds is not None and plan.est_seconds_per_replica * replicas > budget_seconds:
        raise ResourceRefusal(
            f"refusing: estimated {plan.est_seconds_per_replica * replicas:.3g} s for {replicas} replicas exceeds "
            f"the time budget of {budget_seconds:.3g} s")


def mc_moments(obj, theta, params: ModelParams, lambdas: Sequence[float], p: int = 1, replicas: int = 1000,
               seed: int = 0, n: Optional[int] = None, dt: Optional[float] = None, n_basepoints: int = 4,
               theta_id: str = "", rho: MollifierSpec = DEFAULT_RHO, budget_points: float = DEFAULT_POINT_BUDGET,
               budget_seconds: Optional[float] = None, return_samples: bool = False):
    """
    Empirical E|<Pi_z tau, psi_z^lam>|^{2p} for each lam, averaged over ``n_basepoints``
    interior basepoints z, with replica standard errors.  One stationary field draw per
    replica serves every lam and basepoint (common random numbers).

    ``theta`` may be a dict name -> theta; all thetas then share the same draws and the
    result is a dict name -> records.
    """
    lambdas = sorted(float(l) for l in lambdas)
    if replicas < 100:
        raise ValueError("at least 100 replicas are required")
    if params.eps > lambdas[0] / 4 + 1e-15:
        raise ValueError(f"eps = {params.eps:.4g} is too large for lambda_min = {lambdas[0]:.4g}; "
                         f"need eps <= lambda_min / 4 = {lambdas[0] / 4:.4g}")
    many = isinstance(theta, dict)
    family = theta if many else {theta_id: theta}
    e, tree_id = _object_expr(obj, params)
    plan = plan_moments(params, lambdas, n, dt, _needs_history(e), n_basepoints, rho)
    _guard(plan, replicas * len(family), budget_points, budget_seconds)
    sampler = StationarySampler(plan.n, plan.dt, params, rho, frames=plan.frames)
    grid = sampler.grid
    ths = {name: _theta_array(th, grid) for name, th in family.items()}
    specs = {lam: [] for lam in lambdas}
    for bp in plan.basepoints:
        z = (bp[0] * grid.dt, bp[1] * grid.dx, bp[2] * grid.dx)
        for lam in lambdas:
            specs[lam].append((bp, test_function_on_grid(grid, TestFunctionSpec(lam, z))))
    is_mono = len(e.terms) == 1 and len(e.terms[0][0]) == 1 and isinstance(e.terms[0][0][0][0], E.Xi)
    root = SeedLineage(seed)
    vals = {name: np.zeros((replicas, len(lambdas))) for name in ths}
    viol = {name: np.zeros(len(lambdas), dtype=int) for name in ths}
    for r in range(replicas):
        bundle = sampler.bundle(root.child(r))
        xi_abs = np.abs(bundle.xi_plus) if is_mono else None
        for name, th in ths.items():
            shared: dict = {}
            fields = {bp: ModelBinding(bundle, th, bp, history="periodic", shared=shared).field(e)
                      for bp in plan.basepoints}
            for li, lam in enumerate(lambdas):
                acc = 0.0
                for bp, psi in specs[lam]:
                    v = pair(fields[bp], grid, None, psi)
                    acc += abs(v) ** (2 * p)
                    if is_mono:
                        env = pair(xi_abs, grid, None, (psi[0], np.abs(psi[1]))).real
                        if abs(v) > env * (1 + 1e-12):
                            viol[name][li] += 1
                vals[name][r, li] = acc / len(specs[lam])
    out = {}
    for name in ths:
        recs = []
        for li, lam in enumerate(lambdas):
            col = vals[name][:, li]
            recs.append(MomentRecord(tree_id, name, lam, p, replicas, float(np.mean(col)),
                                     float(np.std(col, ddof=1) / math.sqrt(replicas)), params.eps, seed,
                                     int(viol[name][li]) if is_mono else -1))
        out[name] = (recs, vals[name]) if return_samples else recs
    return out if many else out[theta_id]


def fit_scaling(records: Sequence[MomentRecord], target: Optional[float] = None,
                tolerance: Optional[float] = None) -> ScalingFit:
    """Weighted log-log slope of moment^{1/(2p)} against lambda."""
    good = []
    for r in records:
        if not r.moment > 0:
            warnings.warn(f"non-positive moment at lambda={r.lam}; point excluded")
            continue
        good.append(r)
    if len(good) < 4:
        raise ValueError("a scaling fit needs at least four lambda points")
    p = good[0].p
    lam = [r.lam for r in good]
    y = [r.moment ** (1.0 / (2 * p)) for r in good]
    w = []
    for r in good:
        rel = r.stderr / r.moment / (2 * p) if r.stderr > 0 else 0.0
        w.append(1.0 / max(rel ** 2, 1e-12))
    fit = fit_loglog(lam, y, w)
    fit.lambdas = tuple(lam)
    fit.target = target
    fit.tolerance = tolerance
    return fit


def theta_uniformity_sweep(obj, theta_family: dict, params: ModelParams, lambdas: Sequence[float], p: int = 1,
                           replicas: int = 1000, seed: int = 0, target: Optional[float] = None,
                           tolerance: Optional[float] = None, **kw) -> ExperimentReport:
    """Scaling fits for each theta, their largest pairwise discrepancy and the envelope check."""
    rows, fits = [], {}
    allrecs = mc_moments(obj, dict(theta_family), params, lambdas, p, replicas, seed, **kw)
    for name, recs in allrecs.items():
        rows.extend(recs)
        fits[name] = fit_scaling(recs, target, tolerance)
    names = list(fits)
    disc, joint = 0.0, 0.0
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = fits[names[i]], fits[names[j]]
            d = abs(a.slope - b.slope)
            if d > disc:
                disc, joint = d, math.hypot(a.slope_stderr, b.slope_stderr)
    viol = sum(max(r.envelope_violations, 0) for r in rows)
    passed = None
    if target is not None and tolerance is not None:
        passed = all(f.within(target, tolerance) for f in fits.values()) and viol == 0
    return ExperimentReport("theta-uniformity", rows, None, target, tolerance, passed,
                            notes=dict(fits={k: (v.slope, v.slope_stderr) for k, v in fits.items()},
                                       max_discrepancy=disc, joint_stderr=joint, envelope_violations=viol))


def resonant_theta(u0_norm: float, params: ModelParams, seed: int = 0, profile: str = "smooth") -> Callable:
    """
    A theta source for ``mc_moments``: the resonant solution started from a u0 with
    ||u0||_{C^eta} = u0_norm, computed on whatever grid the sampler uses.
    """
    from .resonant import ResonantKernel, solve_resonant
    from .spectral import scaled_profile

    def make(grid: GridSpec) -> np.ndarray:
        u = scaled_profile(profile, grid.n, u0_norm, params.eta, seed)
        kern = ResonantKernel.build(grid.n, grid.dt, params)
        run = solve_resonant(u, kern, grid.steps * grid.dt, tol=1e-8)
        return run.theta.values

    return make


def random_smooth_theta(seed: int = 0, modes: int = 2, amplitude: float = 1.0) -> Callable:
    """A theta source: a random trigonometric polynomial in (t, x) with |k| <= ``modes``."""
    def make(grid: GridSpec) -> np.ndarray:
        rng = np.random.default_rng(seed)
        t = (np.arange(grid.frames) * grid.dt)[:, None, None]
        x = grid.coords()
        X1, X2 = x[None, :, None], x[None, None, :]
        out = np.zeros((grid.frames, grid.n, grid.n))
        for k1 in range(-modes, modes + 1):
            for k2 in range(-modes, modes + 1):
                a, ph, w = rng.normal(), rng.uniform(0, 2 * math.pi), rng.normal()
                out += a * np.cos(2 * math.pi * (k1 * X1 + k2 * X2) + w * t + ph)
        return amplitude * out / max(float(np.max(np.abs(out))), 1e-300)
    return make


def theta_source(spec: str, params: ModelParams, seed: int = 0):
    """
    Parse a theta selector: "zero", "const:<value>", "smooth" (random smooth),
    "resonant:<u0 norm>".  Returns (theta_id, theta) for ``mc_moments``.
    """
    s = spec.strip()
    if s in ("zero", "0"):
        return "zero", 0.0
    if s.startswith("const:"):
        v = float(s.split(":", 1)[1])
        return f"const{v:g}", v
    if s == "smooth":
        return "smooth", random_smooth_theta(seed)
    if s.startswith("resonant:"):
        v = float(s.split(":", 1)[1])
        return f"resonant{v:g}", resonant_theta(v, params, seed)
    raise ValueError(f"unknown theta source {spec!r}; expected zero, const:<v>, smooth or resonant:<norm>")
