"""
The modified pre-model, the model Pi_{x*} = hat-Pi F_{x*} and numeric evaluation.

Symbolic side: trees are mapped to ``Expr`` objects.  ``premodel`` is the table
for the monopoles, dipoles and tripoles with the mirror rule and admissible
extension (X^k, planted trees).  ``F_map`` implements

    F X^k = (X - x*)^k,   F Xi = Xi,   F(tau sigma) = F(tau) F(sigma),
    F(I_m tau) = I_m F(tau) + sum_{|k|_s < |I_m tau|_s} X^k/k! f(I_{m+k} tau),
    f(I_n tau) = - sum_{|l|_s < |I_n tau|_s} (-x*)^l/l! (D^{n+l} K * Pi tau)(x*),

and ``build_model`` returns hat-Pi(F tau).

Numeric side: ``ModelBinding`` binds the atoms of an expression to grid fields of
one realization (noise fields, FFT convolutions, closed-form expectations).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Optional, Sequence

import numpy as np

from . import expr as E
from .expr import Bp, Conv, Ev, Expect, Expr, Xc, Xi
from .gmc import GmcBundle, modified_noise
from .grid import ModelParams, SpaceTimeField
from .kernels import KernelTable, causal_convolve
from .trees import (I0, NO_DECO, DecoratedTree, dipole, homogeneity, ltripole, s_degree, vtripole)

MAX_DEPTH = 4


class UnsupportedTree(ValueError):
    pass


class BindingError(LookupError):
    pass


# ---------------------------------------------------------------------------
# tree products and linear combinations of trees
# ---------------------------------------------------------------------------

ONE_TREE = DecoratedTree(0)


def tree_mul(a: DecoratedTree, b: DecoratedTree) -> DecoratedTree:
    if a.label and b.label:
        raise UnsupportedTree("product of two noise factors is not in the model space")
    deco = tuple(x + y for x, y in zip(a.deco, b.deco))
    return DecoratedTree(a.label or b.label, deco, a.children + b.children).canonical()


def planted(t: DecoratedTree, m=I0) -> DecoratedTree:
    return DecoratedTree(0, NO_DECO, ((tuple(m), t),))


def poly_tree(k) -> DecoratedTree:
    return DecoratedTree(0, tuple(k))


class TreeSum:
    """Finite sum  sum_i c_i tau_i  with expression coefficients constant in the running point."""

    def __init__(self, items=None):
        acc: dict = {}
        for t, c in (items or []):
            t = t.canonical()
            k = t.key()
            if k in acc:
                acc[k] = (acc[k][0], acc[k][1] + c)
            else:
                acc[k] = (t, E._lift(c))
        self.items = {k: v for k, v in acc.items() if not v[1].is_zero()}

    @staticmethod
    def single(t: DecoratedTree, c=1) -> "TreeSum":
        return TreeSum([(t, E._lift(c))])

    def __iter__(self):
        return iter(self.items.values())

    def __add__(self, other: "TreeSum") -> "TreeSum":
        return TreeSum(list(self) + list(other))

    def __sub__(self, other: "TreeSum") -> "TreeSum":
        return TreeSum(list(self) + [(t, -c) for t, c in other])

    def __mul__(self, other: "TreeSum") -> "TreeSum":
        return TreeSum([(tree_mul(t1, t2), c1 * c2) for t1, c1 in self for t2, c2 in other])

    def scale(self, c) -> "TreeSum":
        return TreeSum([(t, c * d) for t, d in self])

    def __eq__(self, other):
        return isinstance(other, TreeSum) and self.items == other.items

    def __str__(self):
        from .trees import to_text
        return " + ".join(f"[{c}]·{to_text(t)}" for t, c in self) or "0"

    __repr__ = __str__


# ---------------------------------------------------------------------------
# the pre-model
# ---------------------------------------------------------------------------


def _table_entry(shape: str, word: str) -> Expr:
    """Table entries with root sign +; the rest follows by mirroring."""
    p, m = E.xi(1), E.xi(-1)
    Kp, Km = E.conv(p), E.conv(m)
    Epm = E.expect(p * Km)
    Emp = E.expect(m * Kp)
    if shape == "mono":
        return {"p": p}.get(word)
    if shape == "dipole":
        return {"pp": p * Kp, "pm": p * Km - Epm}.get(word)
    if shape == "vtripole":
        word = word[0] + "".join(sorted(word[1:], reverse=True))  # children unordered
        return {"ppp": p * Kp ** 2,
                "pmm": p * Km ** 2 - 2 * Km * Epm,
                "ppm": (p * Km - Epm) * Kp}.get(word)
    if shape == "ltripole":
        return {"ppp": p * E.conv(p * Kp),
                "ppm": p * E.conv(p * Km - Epm),
                "mpp": m * E.conv(p * Kp) - Emp * Kp,
                "pmp": p * E.conv(m * Kp - Emp) - Epm * Kp}.get(word)
    return None


def _flip(word: str) -> str:
    return word.translate(str.maketrans("pm", "mp"))


def _noise_core(tree: DecoratedTree) -> Expr:
    """hat-Pi of an undecorated monopole / dipole / tripole."""
    shape = tree.shape()
    word = tree.signs()
    if shape not in ("mono", "dipole", "vtripole", "ltripole"):
        raise UnsupportedTree(f"tree {tree} is outside the sine-Gordon family")
    e = _table_entry(shape, word)
    if e is not None:
        return e
    e = _table_entry(shape, _flip(word))
    if e is None:
        raise UnsupportedTree(f"no pre-model entry for {tree}")
    return E.mirror(e)


def _poly_expr(k) -> Expr:
    out = E.ONE
    for j, p in enumerate(k):
        out = out * E.X(j) ** p
    return out


def premodel(tree: DecoratedTree) -> Expr:
    """hat-Pi(tree) from the table, the mirror rule and admissibility."""
    if tree.depth() > MAX_DEPTH:
        raise UnsupportedTree(f"tree {tree} exceeds the supported depth")
    poly = _poly_expr(tree.deco)
    if tree.label == 0:
        # X^k times a product of planted trees: hat-Pi is multiplicative there
        out = poly
        for m, c in tree.children:
            out = out * E.conv(premodel(c), m)
        return out
    core = DecoratedTree(tree.label, NO_DECO, tree.children)
    return poly * _noise_core(core)


def premodel_sum(ts: TreeSum) -> Expr:
    out = E.ZERO
    for t, c in ts:
        out = out + c * premodel(t)
    return out


# ---------------------------------------------------------------------------
# the F / f recursion
# ---------------------------------------------------------------------------


def _multi_indices(bound: float):
    """Multi-indices k = (k_t, k_1, k_2) with |k|_s < bound, in a fixed order."""
    out = []
    top = int(math.ceil(bound)) + 1
    for k in product(range(top), repeat=3):
        if s_degree(k) < bound:
            out.append(k)
    return sorted(out, key=lambda k: (s_degree(k), k[::-1]))


def _factorial(k) -> int:
    return math.prod(math.factorial(a) for a in k)


def _planted_homogeneity(t: DecoratedTree, m, beta_bar) -> float:
    return homogeneity(t, beta_bar) + 2 - s_degree(m)


def _split_root(tree: DecoratedTree):
    """tau = X^n * Xi_s * prod I_{m_i}(tau_i): the factors as trees."""
    factors = [poly_tree(tree.deco)] if tree.deco != NO_DECO else []
    if tree.label:
        factors.append(DecoratedTree(tree.label))
    factors.extend(planted(c, m) for m, c in tree.children)
    return factors


class ModelBuilder:
    """Memoized F / f / Pi on trees for one value of beta_bar (symbolic basepoint x*)."""

    def __init__(self, beta_bar: float):
        self.beta_bar = beta_bar
        self._F: dict = {}
        self._Pi: dict = {}

    def F(self, tree: DecoratedTree) -> TreeSum:
        if tree.depth() > MAX_DEPTH:
            raise UnsupportedTree(f"tree {tree} exceeds the supported depth")
        key = tree.key()
        if key in self._F:
            return self._F[key]
        if tree.label == 0 and tree.deco == NO_DECO and len(tree.children) == 1:
            m, c = tree.children[0]
            out = self._F_planted(c, m)
        elif tree.label == 0 and not tree.children:
            out = self._F_poly(tree.deco)
        elif tree.deco == NO_DECO and not tree.children:
            out = TreeSum.single(tree)  # F Xi = Xi
        else:
            out = TreeSum.single(ONE_TREE)
            for f in _split_root(tree):
                out = out * self.F(f)
        self._F[key] = out
        return out

    def _F_poly(self, k) -> TreeSum:
        # (X - x*)^k = prod_j sum_a C(k_j, a) X_j^a (-x*_j)^{k_j - a}
        out = TreeSum.single(ONE_TREE)
        for j, p in enumerate(k):
            fac = []
            for a in range(p + 1):
                d = [0, 0, 0]
                d[j] = a
                c = math.comb(p, a) * (-E.xstar(j)) ** (p - a)
                fac.append((poly_tree(d), c))
            out = out * TreeSum(fac)
        return out

    def _F_planted(self, tau: DecoratedTree, m) -> TreeSum:
        inner = self.F(tau)
        out = TreeSum([(planted(t, m), c) for t, c in inner])
        bound = _planted_homogeneity(tau, m, self.beta_bar)
        for k in _multi_indices(bound):
            n = tuple(a + b for a, b in zip(m, k))
            coeff = self.f(tau, n) * Fraction(1, _factorial(k))
            out = out + TreeSum.single(poly_tree(k), coeff)
        return out

    def f(self, tau: DecoratedTree, n) -> Expr:
        bound = _planted_homogeneity(tau, n, self.beta_bar)
        pi = self.Pi(tau)
        out = E.ZERO
        for l in _multi_indices(bound):
            mono = E.ONE
            for j, p in enumerate(l):
                mono = mono * (-E.xstar(j)) ** p
            d = tuple(a + b for a, b in zip(n, l))
            out = out + Fraction(1, _factorial(l)) * mono * E.ev(E.conv(pi, d))
        return -out

    def Pi(self, tree: DecoratedTree) -> Expr:
        key = tree.key()
        if key not in self._Pi:
            self._Pi[key] = premodel_sum(self.F(tree))
        return self._Pi[key]


def build_model(tree: DecoratedTree, beta_bar: float) -> Expr:
    """Pi_{x*}(tree) as a normal-form expression with a symbolic basepoint."""
    return ModelBuilder(beta_bar).Pi(tree.canonical())


def F_map(tree: DecoratedTree, beta_bar: float) -> TreeSum:
    return ModelBuilder(beta_bar).F(tree.canonical())


# ---------------------------------------------------------------------------
# hand-encoded closed forms (for golden tests)
# ---------------------------------------------------------------------------


def _dx_unit(j) -> tuple:
    d = [0, 0, 0]
    d[j] = 1
    return tuple(d)


def golden_forms() -> dict:
    """
    The closed forms of the recursion for the representative trees, typed in
    directly from their displayed expressions (root sign - for the dipole and
    branched tripole, the +-+ line tripole).
    """
    p, m = E.xi(1), E.xi(-1)
    Kp, Km = E.conv(p), E.conv(m)
    Kp_at = E.ev(Kp)
    Emp = E.expect(m * Kp)
    Epm = E.expect(p * Km)
    Xp, Xm = Xi_t(1), Xi_t(-1)
    dip_mp, dip_pm = dipole(-1, 1), dipole(1, -1)
    IXp, IXm = planted(Xp), planted(Xm)

    F_IXp = TreeSum.single(IXp) - TreeSum.single(ONE_TREE, Kp_at)
    F_dip = TreeSum.single(dip_mp) - TreeSum.single(Xm, Kp_at)
    Pi_dip = m * Kp - m * Kp_at - Emp
    vt = vtripole(-1, 1, 1)
    F_vt = TreeSum.single(vt) - TreeSum.single(dip_mp, 2 * Kp_at) + TreeSum.single(Xm, Kp_at ** 2)
    Pi_vt = m * (Kp - Kp_at) ** 2 - 2 * Emp * (Kp - Kp_at)

    lt = ltripole(1, -1, 1)
    rec_terms = []  # sum_{|k|+|l|<=1} (-x*)^l/l! (D^{k+l}K * Pi dip)(x*) X^k/k!
    units = [(0, 0, 0), _dx_unit(1), _dx_unit(2)]
    for k in units:
        for l in units:
            if s_degree(k) + s_degree(l) > 1:
                continue
            c = E.ONE
            for j, a in enumerate(l):
                c = c * (-E.xstar(j)) ** a
            d = tuple(a + b for a, b in zip(k, l))
            rec_terms.append((poly_tree(k), c * E.ev(E.conv(Pi_dip, d))))
    rec = TreeSum(rec_terms)
    F_Idip = TreeSum.single(planted(dip_mp)) - TreeSum.single(IXm, Kp_at) - rec
    F_lt = TreeSum.single(lt) - TreeSum.single(dip_pm, Kp_at) - rec * TreeSum.single(Xp)
    KPi = E.conv(Pi_dip)
    Pi_lt = p * (KPi - E.ev(KPi)) - Epm * (Kp - Kp_at)
    for j in (1, 2):
        Pi_lt = Pi_lt - (E.X(j) - E.xstar(j)) * p * E.ev(E.conv(Pi_dip, _dx_unit(j)))
    return {
        "F(IXi+)": (IXp, F_IXp),
        "F(dipole -+)": (dip_mp, F_dip),
        "Pi(dipole -+)": (dip_mp, Pi_dip),
        "F(vtripole -++)": (vt, F_vt),
        "Pi(vtripole -++)": (vt, Pi_vt),
        "F(I dipole -+)": (planted(dip_mp), F_Idip),
        "F(ltripole +-+)": (lt, F_lt),
        "Pi(ltripole +-+)": (lt, Pi_lt),
    }


def Xi_t(s: int) -> DecoratedTree:
    return DecoratedTree(s)


def check_golden(beta_bar: float) -> dict:
    """name -> True/False: recursion output equals the closed form structurally."""
    b = ModelBuilder(beta_bar)
    out = {}
    for name, (tree, form) in golden_forms().items():
        got = b.F(tree.canonical()) if name.startswith("F(") else b.Pi(tree.canonical())
        out[name] = got == form
    return out


# ---------------------------------------------------------------------------
# numeric binding
# ---------------------------------------------------------------------------


def _basepoint_free(a) -> bool:
    if isinstance(a, (Ev, Bp, Xc)):
        return False
    if isinstance(a, (Conv, Expect)):
        return all(_basepoint_free(b) for b in a.arg.atoms())
    return True


class ModelBinding:
    """
    Binds expression atoms to one realization: xi_pm^theta from ``bundle`` and
    ``theta``, K from ``bundle.ktab``, expectations through the closed form

        E[xi_a (K * xi_b)](z) = e^{i a beta theta(z)} ((K J^{ab}) * e^{i b beta theta})(z),
        J^{ab} = exp(-a b beta^2 Q),

    and the basepoint chart X_j -> x*_j + (minimum image of x_j - x*_j).
    Convolutions use the given time history (``periodic`` for box samples).
    """

    def __init__(self, bundle: GmcBundle, theta=None, basepoint=(0, 0, 0), history: str = "periodic",
                 shared: Optional[dict] = None):
        self.bundle = bundle
        g = bundle.grid
        self.grid = g
        shape = bundle.xi_plus.shape
        if theta is None:
            th = np.zeros(shape)
        else:
            th = theta.values if isinstance(theta, SpaceTimeField) else np.asarray(theta)
            if th.shape != shape:
                raise ValueError(f"theta has shape {th.shape}, realization has {shape}")
        self.theta = th
        self.basepoint = tuple(int(v) for v in basepoint)
        self.history = history
        self._fields: dict = {}
        # fields that do not depend on the basepoint may be shared between bindings
        # of the same realization and theta
        self._shared = shared if shared is not None else {}
        self._tables = self._shared.setdefault("__tables__", {})
        if "__xi__" not in self._shared:
            self._shared["__xi__"] = dict(zip((1, -1), modified_noise(bundle, th)))
        self.xi = self._shared["__xi__"]

    # -- kernels -------------------------------------------------------------

    def kernel(self, deriv) -> KernelTable:
        deriv = tuple(deriv)
        if deriv[0]:
            raise BindingError("time derivatives of K are not bound (not needed below the second order)")
        if deriv not in self._tables:
            t = self.bundle.ktab
            for _ in range(deriv[1]):
                t = t.derivative(1)
            for _ in range(deriv[2]):
                t = t.derivative(2)
            self._tables[deriv] = t
        return self._tables[deriv]

    def kj(self, sign: int) -> KernelTable:
        key = ("KJ", sign)
        if key not in self._tables:
            self._tables[key] = self.bundle.kj_table(sign)
        return self._tables[key]

    def _conv(self, table: KernelTable, f: np.ndarray) -> np.ndarray:
        return causal_convolve(table, f.astype(complex), history=self.history)

    # -- atoms ---------------------------------------------------------------

    def coordinate(self, j: int) -> np.ndarray:
        g = self.grid
        k0, i0, j0 = self.basepoint
        M = self.bundle.xi_plus.shape[0]
        if j == 0:
            t = np.arange(M) * g.dt
            return np.broadcast_to(t[:, None, None], (M, g.n, g.n))
        idx = np.arange(g.n)
        c = (i0 if j == 1 else j0)
        off = idx - c
        off = off - g.n * np.round(off / g.n)
        x = (c + off) * g.dx
        return np.broadcast_to((x[:, None] if j == 1 else x[None, :])[None], (M, g.n, g.n))

    def basepoint_coord(self, j: int) -> float:
        k0, i0, j0 = self.basepoint
        return (k0 * self.grid.dt, i0 * self.grid.dx, j0 * self.grid.dx)[j]

    def atom_field(self, a) -> np.ndarray:
        if a in self._fields:
            return self._fields[a]
        free = _basepoint_free(a)
        if free and a in self._shared:
            return self._shared[a]
        if isinstance(a, Xi):
            v = self.xi[a.sign]
        elif isinstance(a, Conv):
            v = self._conv(self.kernel(a.deriv), self.field(a.arg))
        elif isinstance(a, Xc):
            v = self.coordinate(a.j)
        elif isinstance(a, Expect):
            v = self._expect(a.arg)
        elif isinstance(a, (Ev, Bp)):
            v = self.scalar(a)
        else:
            raise BindingError(f"unbound atom {a}")
        (self._shared if free else self._fields)[a] = v
        return v

    def scalar(self, a) -> complex:
        if isinstance(a, Bp):
            return self.basepoint_coord(a.j)
        if isinstance(a, Ev):
            if isinstance(a.atom, Bp):
                return self.basepoint_coord(a.atom.j)
            return complex(self.atom_field(a.atom)[self.basepoint])
        raise BindingError(f"{a} is not a basepoint constant")

    def _expect(self, arg: Expr) -> np.ndarray:
        if len(arg.terms) != 1 or arg.terms[0][1] != 1:
            raise BindingError(f"no closed form for E[{arg}]")
        mono = arg.terms[0][0]
        beta = self.bundle.params.beta
        if len(mono) == 1 and isinstance(mono[0][0], Xi) and mono[0][1] == 1:
            return np.exp(1j * mono[0][0].sign * beta * self.theta)
        if len(mono) == 2 and all(p == 1 for _, p in mono):
            (a1, _), (a2, _) = mono
            if isinstance(a1, Xi) and isinstance(a2, Conv) and a2.deriv == (0, 0, 0):
                inner = a2.arg
                if len(inner.terms) == 1 and inner.terms[0][1] == 1 and len(inner.terms[0][0]) == 1:
                    b, pw = inner.terms[0][0][0]
                    if isinstance(b, Xi) and pw == 1:
                        a, s = a1.sign, b.sign
                        phase_b = np.exp(1j * s * beta * self.theta)
                        return np.exp(1j * a * beta * self.theta) * self._conv(self.kj(a * s), phase_b)
        raise BindingError(f"no closed form for E[{arg}]")

    # -- expressions ---------------------------------------------------------

    def field(self, e: Expr) -> np.ndarray:
        shape = self.bundle.xi_plus.shape
        out = None
        for mono, c in e.terms:
            term = complex(c)
            for a, p in mono:
                v = self.atom_field(a)
                term = term * (v ** p if p != 1 else v)
            out = term if out is None else out + term
        if out is None:
            return np.zeros(shape, dtype=complex)
        return np.broadcast_to(out, shape) if np.ndim(out) < len(shape) else out


def evaluate_expression(expr: Expr, bundle: GmcBundle, theta=None, basepoint=(0, 0, 0),
                        target=None, test: Optional[np.ndarray] = None, history: str = "periodic"):
    """
    Value of ``expr`` on one realization: the whole field (default), its value at
    ``target`` = (frame, i, j), or the pairing sum expr * test * dt dx^2.
    """
    b = ModelBinding(bundle, theta, basepoint, history)
    f = b.field(expr)
    if target is not None:
        return complex(f[tuple(target)])
    if test is not None:
        g = bundle.grid
        return complex(np.sum(f * test) * g.dt * g.dx ** 2)
    return f


# ---------------------------------------------------------------------------
# resonance identity
# ---------------------------------------------------------------------------


@dataclass
class ResonanceReport:
    points: list
    lhs: np.ndarray  # Pi(Xi- I Xi+)(z) - Pi(Xi+ I Xi-)(z) at the basepoint z
    rhs: np.ndarray  # -(4i/beta) Res(theta)(z)
    rel_error: np.ndarray = field(default=None)

    def __post_init__(self):
        scale = max(float(np.max(np.abs(self.rhs))), 1e-300)
        self.rel_error = np.abs(self.lhs - self.rhs) / scale

    @property
    def max_rel_error(self) -> float:
        return float(np.max(self.rel_error)) if len(self.rel_error) else 0.0


def dipole_resonance_check(theta, bundle: GmcBundle, points: Sequence[tuple], history: str = "periodic",
                           beta_bar: Optional[float] = None) -> ResonanceReport:
    """Compare the two sides of the dipole resonance identity at each basepoint."""
    from .resonant import resonant_operator

    params = bundle.params
    bb = params.beta_bar if beta_bar is None else beta_bar
    builder = ModelBuilder(bb)
    e = builder.Pi(dipole(-1, 1)) - builder.Pi(dipole(1, -1))
    th = theta.values if isinstance(theta, SpaceTimeField) else (
        np.zeros(bundle.xi_plus.shape) if theta is None else np.asarray(theta))
    res = resonant_operator(th, bundle, history=history)
    res = res.values if isinstance(res, SpaceTimeField) else res
    lhs, rhs = [], []
    for z in points:
        lhs.append(evaluate_expression(e, bundle, th, basepoint=z, target=z, history=history))
        rhs.append(-4j / params.beta * res[tuple(z)])
    return ResonanceReport(list(points), np.array(lhs), np.array(rhs))
