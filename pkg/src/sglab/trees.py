"""
Decorated trees of the sine-Gordon regularity structure.

A tree node carries a label in {+1, 0, -1} (a noise Xi_+ / no noise / Xi_-), a
polynomial decoration n = (n_t, n_1, n_2) and a list of children, each attached
by an integration edge I_m with derivative multi-index m.  Homogeneity:

    |T|_s = 2 |K(T)| - beta_bar |L(T)| + sum_u |n(u)|_s - sum_e |m(e)|_s,

with |(a, b, c)|_s = 2a + b + c.

Textual notation: ``Xi+``, ``Ξ₊``, ``X1Ξ+``, ``Ξ+IΞ-``, ``Ξ+IΞ-IΞ+`` (branched),
``Ξ+I(Ξ-IΞ+)`` (line).  Children are kept in the written order; ``canonical``
sorts them, so that e.g. Ξ+IΞ-IΞ+ and Ξ+IΞ+IΞ- share a canonical form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Optional

from .grid import ModelParams

SIGN_CHAR = {1: "+", -1: "-", 0: "0"}


def s_degree(m) -> int:
    return 2 * m[0] + m[1] + m[2]


@dataclass(frozen=True)
class DecoratedTree:
    label: int
    deco: tuple = (0, 0, 0)
    children: tuple = ()  # tuple of (edge multi-index, DecoratedTree)

    def __post_init__(self):
        if self.label not in (1, 0, -1):
            raise ValueError(f"node label must be +1, 0 or -1, got {self.label}")
        if len(self.deco) != 3 or any(d < 0 for d in self.deco):
            raise ValueError(f"bad polynomial decoration {self.deco}")

    # -- structure -----------------------------------------------------------

    def nodes(self):
        yield self
        for _, c in self.children:
            yield from c.nodes()

    def edges(self):
        for m, c in self.children:
            yield m
            yield from c.edges()

    def n_kernels(self) -> int:
        return sum(1 for _ in self.edges())

    def n_leaves(self) -> int:
        """Number of noise nodes |L(T)|."""
        return sum(1 for u in self.nodes() if u.label != 0)

    def depth(self) -> int:
        return 1 + max((c.depth() for _, c in self.children), default=0)

    def key(self) -> tuple:
        kids = tuple(sorted((m, c.key()) for m, c in self.children))
        return (self.label, self.deco, kids)

    def canonical(self) -> "DecoratedTree":
        kids = tuple(sorted(((m, c.canonical()) for m, c in self.children), key=lambda mc: (mc[0], mc[1].key())))
        return DecoratedTree(self.label, self.deco, kids)

    def same_as(self, other: "DecoratedTree") -> bool:
        return self.key() == other.key()

    def mirror(self) -> "DecoratedTree":
        return DecoratedTree(-self.label, self.deco, tuple((m, c.mirror()) for m, c in self.children))

    def signs(self) -> str:
        """Signs of the noise nodes in written (pre-)order, e.g. 'pmp'."""
        return "".join("p" if u.label > 0 else "m" for u in self.nodes() if u.label != 0)

    def shape(self) -> str:
        """One of 'mono', 'dmono', 'dipole', 'vtripole', 'ltripole' or 'other'."""
        if self.children == ():
            return "mono" if self.deco == (0, 0, 0) else "dmono"
        if any(m != (0, 0, 0) for m in self.edges()) or any(u.deco != (0, 0, 0) for u in self.nodes()):
            return "other"
        if len(self.children) == 1:
            c = self.children[0][1]
            if c.children == ():
                return "dipole"
            if len(c.children) == 1 and c.children[0][1].children == ():
                return "ltripole"
        if len(self.children) == 2 and all(c.children == () for _, c in self.children):
            return "vtripole"
        return "other"

    def __str__(self) -> str:
        return to_text(self)


def homogeneity(tree: DecoratedTree, beta_bar) -> float:
    """2|K(T)| - beta_bar |L(T)| + sum |n|_s - sum |m|_s (exact if beta_bar is a Fraction)."""
    deco = sum(s_degree(u.deco) for u in tree.nodes())
    der = sum(s_degree(m) for m in tree.edges())
    return 2 * tree.n_kernels() - beta_bar * tree.n_leaves() + deco - der


def homogeneity_symbolic(tree: DecoratedTree) -> tuple[int, int]:
    """(a, b) with |T| = a - b * beta_bar."""
    deco = sum(s_degree(u.deco) for u in tree.nodes())
    der = sum(s_degree(m) for m in tree.edges())
    return 2 * tree.n_kernels() + deco - der, tree.n_leaves()


# ---------------------------------------------------------------------------
# constructors and text
# ---------------------------------------------------------------------------

NO_DECO = (0, 0, 0)
I0 = (0, 0, 0)


def Xi(s: int, deco=NO_DECO) -> DecoratedTree:
    return DecoratedTree(s, tuple(deco))


def with_children(root: DecoratedTree, *kids: DecoratedTree) -> DecoratedTree:
    return DecoratedTree(root.label, root.deco, root.children + tuple((I0, k) for k in kids))


def dipole(s1: int, s2: int) -> DecoratedTree:
    return with_children(Xi(s1), Xi(s2))


def vtripole(s1: int, s2: int, s3: int) -> DecoratedTree:
    return with_children(Xi(s1), Xi(s2), Xi(s3))


def ltripole(s1: int, s2: int, s3: int) -> DecoratedTree:
    return with_children(Xi(s1), dipole(s2, s3))


def decorated_monopole(j: int, s: int) -> DecoratedTree:
    d = [0, 0, 0]
    d[j] = 1
    return Xi(s, tuple(d))


def _sign_of(ch: str) -> int:
    return {"p": 1, "+": 1, "m": -1, "-": -1}[ch]


def from_word(shape: str, word: str) -> DecoratedTree:
    s = [_sign_of(c) for c in word]
    if shape == "mono":
        return Xi(*s)
    if shape == "dipole":
        return dipole(*s)
    if shape == "vtripole":
        return vtripole(*s)
    if shape == "ltripole":
        return ltripole(*s)
    raise ValueError(f"unknown shape {shape!r}")


def _deco_text(d) -> str:
    out = ""
    if d[0]:
        out += "X0" if d[0] == 1 else f"X0^{d[0]}"
    for j in (1, 2):
        if d[j]:
            out += f"X{j}" if d[j] == 1 else f"X{j}^{d[j]}"
    return out


def to_text(t: DecoratedTree) -> str:
    core = _deco_text(t.deco) + ("Ξ" + SIGN_CHAR[t.label] if t.label else ("" if t.deco != NO_DECO else "1"))
    for m, c in t.children:
        sub = to_text(c)
        edge = "I" if m == I0 else f"I_{m}"
        core += edge + (f"({sub})" if c.children else sub)
    return core


_NORMALIZE = str.maketrans({"₊": "+", "₋": "-", "−": "-", "ℐ": "I", "𝓘": "I", "Ξ": "Ξ"})


def parse_tree(text: str) -> DecoratedTree:
    """Parse the textual Ξ / I / X notation (also accepts 'Xi' for Ξ and '_' separators)."""
    s = text.strip().translate(_NORMALIZE).replace("Xi", "Ξ").replace("_", "").replace(" ", "")
    pos = 0

    def peek():
        return s[pos] if pos < len(s) else ""

    def take(ch=None):
        nonlocal pos
        c = peek()
        if ch is not None and c != ch:
            raise ValueError(f"expected {ch!r} at position {pos} in {text!r}")
        pos += 1
        return c

    def poly():
        d = [0, 0, 0]
        while peek() == "X":
            take("X")
            j = take()
            if j not in "012":
                raise ValueError(f"bad coordinate index {j!r} in {text!r}")
            p = 1
            if peek() == "^":
                take("^")
                num = ""
                while peek().isdigit():
                    num += take()
                p = int(num)
            d[int(j)] += p
        return tuple(d)

    def atom():
        d = poly()
        if peek() == "Ξ":
            take("Ξ")
            sg = take()
            if sg not in "+-":
                raise ValueError(f"noise needs a sign in {text!r}")
            return DecoratedTree(1 if sg == "+" else -1, d)
        if peek() == "(":
            take("(")
            t = tree()
            take(")")
            if d != NO_DECO:
                t = DecoratedTree(t.label, tuple(a + b for a, b in zip(t.deco, d)), t.children)
            return t
        if d != NO_DECO:
            return DecoratedTree(0, d)
        raise ValueError(f"cannot parse tree {text!r} at position {pos}")

    def tree():
        root = atom()
        kids = []
        while peek() == "I":
            take("I")
            kids.append((I0, atom()))
        return DecoratedTree(root.label, root.deco, root.children + tuple(kids))

    t = tree()
    if pos != len(s):
        raise ValueError(f"trailing characters in tree {text!r}")
    return t


# ---------------------------------------------------------------------------
# enumeration of T^-
# ---------------------------------------------------------------------------

SHAPE_ORDER = {"mono": 0, "dmono": 1, "dipole": 2, "vtripole": 3, "ltripole": 4, "other": 5}


def _sort_key(t: DecoratedTree):
    return (t.n_leaves(), SHAPE_ORDER[t.shape()], t.deco[::-1], t.signs())


def candidate_trees(max_leaves: int = 4, max_deco: int = 2) -> list[DecoratedTree]:
    """
    Trees generated by the sine-Gordon rule (a noise node times integrated subtrees)
    with up to ``max_leaves`` noises and root polynomial decorations of s-degree
    <= max_deco.  Children are enumerated as ordered sign words, matching the
    displayed family with s1, s2, s3 ranging independently over {+, -}.
    """
    out = []
    signs = (1, -1)
    decos = [d for d in product(range(2), range(3), range(3)) if 0 < s_degree(d) <= max_deco]
    for s in signs:
        out.append(Xi(s))
        out.extend(Xi(s, d) for d in decos)
    if max_leaves >= 2:
        for w in product(signs, repeat=2):
            out.append(dipole(*w))
            out.extend(DecoratedTree(w[0], d, dipole(*w).children) for d in decos)
    if max_leaves >= 3:
        for w in product(signs, repeat=3):
            out.append(vtripole(*w))
            out.append(ltripole(*w))
    if max_leaves >= 4:
        for w in product(signs, repeat=4):
            out.append(with_children(Xi(w[0]), Xi(w[1]), Xi(w[2]), Xi(w[3])))
            out.append(with_children(Xi(w[0]), with_children(Xi(w[1]), Xi(w[2]), Xi(w[3]))))
            out.append(with_children(Xi(w[0]), ltripole(w[1], w[2], w[3])))
            out.append(with_children(Xi(w[0]), Xi(w[1]), dipole(w[2], w[3])))
    return out


def enumerate_Tminus(params: ModelParams) -> list[DecoratedTree]:
    """All trees of the family with negative homogeneity, sorted canonically."""
    if params.beta2 >= 6 * math.pi:
        raise ValueError("unsupported regime: beta^2 >= 6 pi")
    bb = params.beta_bar
    out = [t for t in candidate_trees() if homogeneity(t, bb) < 0]
    return sorted(out, key=_sort_key)


def homogeneity_table(params: ModelParams) -> list[tuple[str, float]]:
    return [(to_text(t), homogeneity(t, params.beta_bar)) for t in enumerate_Tminus(params)]
