"""Vector-field calculus: directional derivatives, Lie brackets, iterated
adjoints and enumeration of bracket monomials.

Conventions: for a scalar h and field X, the directional derivative is
Xh = (Dh)X = sum_i X_i dh/dx_i, and the bracket is [X,Y] = XY - YX,
i.e. componentwise (DY)X - (DX)Y.

The order of a bracket word is its leaf count. This is a conservative
upper bound for the span-layer order of the monomial it denotes (a
degenerate monomial can land in a lower layer), so order-bounded checks
performed over these words are at worst stricter than necessary, never
unsound.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .symcalc import (
    Const, Expr, compile_expr, differentiate, evaluate, max_var_index,
    parse, simplify, _add, _mul,
)

__all__ = [
    "ScalarField", "VectorField", "LieWord", "WORD_F", "WORD_G",
    "bracket_word", "lie_words", "enumerate_monomial_products",
    "directional_derivative", "lie_bracket", "iterated_adjoint",
    "power_derivative",
]


@dataclass(frozen=True)
class ScalarField:
    """A scalar expression with its state-space dimension."""

    body: Expr
    dim: int

    def __post_init__(self):
        if max_var_index(self.body) > self.dim:
            raise ValueError(
                f"scalar field uses x{max_var_index(self.body)} "
                f"but has dimension {self.dim}")

    @classmethod
    def from_string(cls, text: str, dim: int) -> "ScalarField":
        return cls(parse(text, dim), dim)

    def evaluate(self, point: Sequence[float]) -> float:
        if len(point) != self.dim:
            raise ValueError(f"point has length {len(point)}, expected {self.dim}")
        return evaluate(self.body, point)

    def compiled(self):
        return compile_expr(self.body)

    def gradient(self) -> tuple[Expr, ...]:
        return tuple(differentiate(self.body, i) for i in range(1, self.dim + 1))


@dataclass(frozen=True)
class VectorField:
    """An n-tuple of component expressions over x1..xn."""

    components: tuple[Expr, ...]
    dim: int

    def __post_init__(self):
        if len(self.components) != self.dim:
            raise ValueError(
                f"{len(self.components)} components for dimension {self.dim}")
        for c in self.components:
            if max_var_index(c) > self.dim:
                raise ValueError(
                    f"component {c} uses x{max_var_index(c)} "
                    f"but field has dimension {self.dim}")

    @classmethod
    def from_strings(cls, texts: Sequence[str], dim: int) -> "VectorField":
        return cls(tuple(parse(t, dim) for t in texts), dim)

    def evaluate(self, point: Sequence[float]) -> np.ndarray:
        if len(point) != self.dim:
            raise ValueError(f"point has length {len(point)}, expected {self.dim}")
        return np.array([evaluate(c, point) for c in self.components])

    def compiled(self):
        fns = [compile_expr(c) for c in self.components]
        return lambda x: np.array([fn(x) for fn in fns])

    def __add__(self, other: "VectorField") -> "VectorField":
        _check_dims(self, other)
        comps = tuple(simplify(_add(a, b))
                      for a, b in zip(self.components, other.components))
        return VectorField(comps, self.dim)

    def scaled(self, c: Union[float, int, Fraction]) -> "VectorField":
        const = Const(Fraction(c)) if isinstance(c, (int, Fraction)) else Const(c)
        comps = tuple(simplify(_mul(const, comp)) for comp in self.components)
        return VectorField(comps, self.dim)


def _check_dims(a, b):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def directional_derivative(X: VectorField, V: ScalarField) -> ScalarField:
    """(DV)X = sum_i X_i dV/dx_i, simplified."""
    _check_dims(X, V)
    body = None
    for i, comp in enumerate(X.components, start=1):
        term = _mul(comp, differentiate(V.body, i))
        body = term if body is None else _add(body, term)
    return ScalarField(simplify(body), V.dim)


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """[X,Y] = (DY)X - (DX)Y, componentwise and simplified."""
    _check_dims(X, Y)
    n = X.dim
    comps = []
    for k in range(n):
        forward = None
        backward = None
        for i in range(1, n + 1):
            f_term = _mul(X.components[i - 1], differentiate(Y.components[k], i))
            b_term = _mul(Y.components[i - 1], differentiate(X.components[k], i))
            forward = f_term if forward is None else _add(forward, f_term)
            backward = b_term if backward is None else _add(backward, b_term)
        comps.append(simplify(forward - backward))
    return VectorField(tuple(comps), n)


def iterated_adjoint(Y: VectorField, X: VectorField, k: int) -> VectorField:
    """k-fold right-bracketing of Y by X: [...[[Y,X],X],...,X]."""
    if k < 1:
        raise ValueError(f"adjoint depth must be >= 1, got {k}")
    _check_dims(Y, X)
    out = lie_bracket(Y, X)
    for _ in range(k - 1):
        out = lie_bracket(out, X)
    return out


def power_derivative(f: VectorField, V: ScalarField, i: int) -> ScalarField:
    """i-fold directional derivative of V along f."""
    if i < 1:
        raise ValueError(f"power must be >= 1, got {i}")
    out = directional_derivative(f, V)
    for _ in range(i - 1):
        out = directional_derivative(f, out)
    return out


# --- bracket words ----------------------------------------------------------

@dataclass(frozen=True)
class LieWord:
    """Binary bracket word over the two generator leaves 'f' and 'g'.

    A leaf is the generator itself; an internal node is the bracket of its
    children. The order is the leaf count.
    """

    leaf: str | None = None
    left: "LieWord | None" = None
    right: "LieWord | None" = None

    def __post_init__(self):
        if self.leaf is not None:
            if self.leaf not in ("f", "g") or self.left or self.right:
                raise ValueError(f"bad leaf word {self.leaf!r}")
        elif self.left is None or self.right is None:
            raise ValueError("bracket word needs two children")

    @property
    def order(self) -> int:
        if self.leaf is not None:
            return 1
        return self.left.order + self.right.order

    def realize(self, f: VectorField, g: VectorField) -> VectorField:
        if self.leaf is not None:
            return f if self.leaf == "f" else g
        return lie_bracket(self.left.realize(f, g), self.right.realize(f, g))

    def label(self) -> str:
        if self.leaf is not None:
            return self.leaf
        return f"[{self.left.label()},{self.right.label()}]"


WORD_F = LieWord(leaf="f")
WORD_G = LieWord(leaf="g")


def bracket_word(left: LieWord, right: LieWord) -> LieWord:
    return LieWord(left=left, right=right)


@lru_cache(maxsize=None)
def lie_words(order: int) -> tuple[LieWord, ...]:
    """All structurally distinct bracket words of the given leaf count.

    Words with two identical children anywhere ([w,w]) are identically the
    zero field and are skipped, so every returned word can be nonzero.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if order == 1:
        return (WORD_F, WORD_G)
    out = []
    for split in range(1, order):
        for a in lie_words(split):
            for b in lie_words(order - split):
                if a == b:
                    continue
                out.append(bracket_word(a, b))
    return tuple(out)


def enumerate_monomial_products(
        total_order: int, n_max: int = 4) -> tuple[tuple[LieWord, ...], ...]:
    """Ordered tuples (D_1, ..., D_k), k >= 1, of bracket words excluding
    the bare 'g' leaf, with total order at most ``total_order``.

    Duplicates are removed only up to leaf-tree isomorphism; words related
    by antisymmetry or Jacobi identities are kept (redundant checks cost
    time, not correctness).
    """
    if total_order < 1:
        raise ValueError(f"total order must be >= 1, got {total_order}")
    if total_order > n_max:
        raise ValueError(
            f"total order {total_order} exceeds configured maximum {n_max}")
    words_by_order = {
        m: tuple(w for w in lie_words(m) if w != WORD_G)
        for m in range(1, total_order + 1)
    }
    results: list[tuple[LieWord, ...]] = []

    def extend(prefix: tuple[LieWord, ...], remaining: int):
        for m in range(1, remaining + 1):
            for w in words_by_order[m]:
                item = prefix + (w,)
                results.append(item)
                extend(item, remaining - m)

    extend((), total_order)
    return tuple(results)
