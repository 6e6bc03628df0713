"""
A small term algebra for model expressions.

An expression is a finite sum of rational multiples of monomials; a monomial is
a product of atoms with positive integer powers.  Atoms:

    Xi(s)          modified noise xi_s^theta at the running point
    Conv(k, e)     (D^k K * e) at the running point, e an expression
    Ev(a)          atom a evaluated at the basepoint x*
    Expect(e)      E[e] at the running point (expectation over the noise only)
    Xc(j)          running coordinate X_j (j = 0 is time)
    Bp(j)          basepoint coordinate x*_j

Every constructor returns a normal form: products are distributed over sums,
factors sorted, like terms collected and zero terms dropped.  ``conv``, ``ev``
and ``expect`` are linear and pull out the factors that are constant for them,
so two expressions are mathematically equal on this rewrite set iff they are
equal as Python objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

Scalar = Union[int, Fraction]
K0 = (0, 0, 0)


class Atom:
    rank = 0

    def sort_key(self) -> tuple:
        raise NotImplementedError

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    @property
    def random(self) -> bool:
        raise NotImplementedError

    @property
    def at_basepoint(self) -> bool:
        """True if the atom does not depend on the running point."""
        return False


@dataclass(frozen=True, eq=True)
class Xi(Atom):
    sign: int

    def sort_key(self):
        return (0, -self.sign)

    @property
    def random(self):
        return True

    def __str__(self):
        return "ξ" + ("+" if self.sign > 0 else "-")


@dataclass(frozen=True, eq=True)
class Conv(Atom):
    deriv: tuple
    arg: "Expr"

    def sort_key(self):
        return (1, self.deriv, self.arg.sort_key())

    @property
    def random(self):
        return self.arg.random

    def __str__(self):
        d = "" if self.deriv == K0 else f"D{self.deriv}"
        return f"({d}K*{self.arg})"


@dataclass(frozen=True, eq=True)
class Expect(Atom):
    arg: "Expr"

    def sort_key(self):
        return (2, self.arg.sort_key())

    @property
    def random(self):
        return False

    def __str__(self):
        return f"E[{self.arg}]"


@dataclass(frozen=True, eq=True)
class Ev(Atom):
    atom: Atom

    def sort_key(self):
        return (3,) + self.atom.sort_key()

    @property
    def random(self):
        return self.atom.random

    @property
    def at_basepoint(self):
        return True

    def __str__(self):
        return f"{self.atom}(x*)"


@dataclass(frozen=True, eq=True)
class Xc(Atom):
    j: int

    def sort_key(self):
        return (4, self.j)

    @property
    def random(self):
        return False

    def __str__(self):
        return f"X{self.j}"


@dataclass(frozen=True, eq=True)
class Bp(Atom):
    j: int

    def sort_key(self):
        return (5, self.j)

    @property
    def random(self):
        return False

    @property
    def at_basepoint(self):
        return True

    def __str__(self):
        return f"x*{self.j}"


def _mono_key(mono) -> tuple:
    return tuple((a.sort_key(), p) for a, p in mono)


class Expr:
    """Immutable normal-form polynomial in atoms with rational coefficients."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms=None):
        acc: dict = {}
        for mono, c in (terms.items() if isinstance(terms, dict) else (terms or ())):
            acc[mono] = acc.get(mono, 0) + Fraction(c)
        items = [(m, c) for m, c in acc.items() if c != 0]
        items.sort(key=lambda mc: _mono_key(mc[0]))
        self.terms = tuple(items)
        self._hash = hash(self.terms)

    # -- construction -----------------------------------------------------------

    @staticmethod
    def atom(a: Atom, power: int = 1) -> "Expr":
        return Expr({((a, power),): 1})

    @staticmethod
    def const(c: Scalar) -> "Expr":
        return Expr({(): c})

    # -- algebra ----------------------------------------------------------------

    def __add__(self, other):
        other = _lift(other)
        return Expr(list(self.terms) + list(other.terms))

    __radd__ = __add__

    def __neg__(self):
        return Expr([(m, -c) for m, c in self.terms])

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        other = _lift(other)
        out = []
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                out.append((_mono_mul(m1, m2), c1 * c2))
        return Expr(out)

    __rmul__ = __mul__

    def __pow__(self, p: int):
        out = ONE
        for _ in range(p):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Expr.const(other)
        return isinstance(other, Expr) and self.terms == other.terms

    def __hash__(self):
        return self._hash

    def sort_key(self):
        return tuple((_mono_key(m), c) for m, c in self.terms)

    # -- inspection -------------------------------------------------------------

    def atoms(self):
        seen = set()
        for m, _ in self.terms:
            for a, _ in m:
                if a not in seen:
                    seen.add(a)
                    yield a

    @property
    def random(self) -> bool:
        return any(a.random for a in self.atoms())

    def is_zero(self) -> bool:
        return not self.terms

    def __repr__(self):
        return f"Expr({self})"

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.terms:
            body = "·".join(str(a) if p == 1 else f"{a}^{p}" for a, p in m)
            if not body:
                parts.append(str(c))
            elif c == 1:
                parts.append(body)
            elif c == -1:
                parts.append("-" + body)
            else:
                parts.append(f"{c}·{body}")
        return " + ".join(parts).replace("+ -", "- ")


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, Atom):
        return Expr.atom(x)
    if isinstance(x, (int, Fraction)):
        return Expr.const(x)
    raise TypeError(f"cannot use {type(x).__name__} in a model expression")


def _mono_mul(m1, m2):
    acc: dict = {}
    for a, p in m1 + m2:
        acc[a] = acc.get(a, 0) + p
    return tuple(sorted(acc.items(), key=lambda ap: ap[0].sort_key()))


ZERO = Expr()
ONE = Expr.const(1)


def _split(mono, keep):
    """Split a monomial into (factors with keep(atom) True, the rest)."""
    a = tuple((x, p) for x, p in mono if keep(x))
    b = tuple((x, p) for x, p in mono if not keep(x))
    return a, b


# ---------------------------------------------------------------------------
# public constructors
# ---------------------------------------------------------------------------


def xi(s: int) -> Expr:
    return Expr.atom(Xi(1 if s > 0 else -1))


def X(j: int) -> Expr:
    return Expr.atom(Xc(j))


def xstar(j: int) -> Expr:
    return Expr.atom(Bp(j))


def conv(e, deriv=K0) -> Expr:
    """(D^deriv K) * e, linear, with basepoint-constant factors pulled out."""
    e = _lift(e)
    deriv = tuple(deriv)
    out = []
    for mono, c in e.terms:
        const, run = _split(mono, lambda a: a.at_basepoint)
        out.append((_mono_mul(const, ((Conv(deriv, Expr({run: 1})), 1),)), c))
    return Expr(out)


def _ev_atom(a: Atom) -> Atom:
    if isinstance(a, Xc):
        return Bp(a.j)
    if a.at_basepoint:
        return a
    return Ev(a)


def ev(e) -> Expr:
    """Evaluate at the basepoint (a ring homomorphism)."""
    e = _lift(e)
    out = []
    for mono, c in e.terms:
        out.append((_mono_mul((), tuple((_ev_atom(a), p) for a, p in mono)), c))
    return Expr(out)


def expect(e) -> Expr:
    """E over the noise, linear; deterministic factors are pulled out."""
    e = _lift(e)
    out = []
    for mono, c in e.terms:
        det, rnd = _split(mono, lambda a: not a.random)
        if rnd:
            out.append((_mono_mul(det, ((Expect(Expr({rnd: 1})), 1),)), c))
        else:
            out.append((det, c))
    return Expr(out)


def mirror(e) -> Expr:
    """Flip every noise sign (complex conjugation on real realizations)."""
    e = _lift(e)
    out = []
    for mono, c in e.terms:
        out.append((_mono_mul((), tuple((_mirror_atom(a), p) for a, p in mono)), c))
    return Expr(out)


def _mirror_atom(a: Atom) -> Atom:
    if isinstance(a, Xi):
        return Xi(-a.sign)
    if isinstance(a, Conv):
        return Conv(a.deriv, mirror(a.arg))
    if isinstance(a, Expect):
        return Expect(mirror(a.arg))
    if isinstance(a, Ev):
        return Ev(_mirror_atom(a.atom))
    return a

