"""Finite Abelian groups as ordered direct sums of cyclic factors.

Elements are tuples of digits, one per cyclic factor, added componentwise.
The element index is the mixed-radix encoding of the digit tuple with the
first factor most significant; this encoding is fixed because it is part of
the file formats emitted elsewhere in the package.

The module also provides the character table (an unnormalized Fourier
matrix, ``H @ conj(H) == order * I``), the 0/1 recoupling symbols of the
group and the consistency checks on them (pentagon identity, branching
extraction).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import reduce
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import BudgetExceededError, ValidationError

__all__ = [
    "GroupSpec",
    "GroupElement",
    "make_group",
    "parse_group_literal",
    "multiply",
    "inverse",
    "self_inverse_elements",
    "fourier_matrix",
    "f_symbol",
    "f_tensor",
    "pentagon_check",
    "PentagonResult",
    "branching_consistency",
]


@dataclass(frozen=True)
class GroupSpec:
    """A finite Abelian group ``Z_{n_1} + Z_{n_2} + ...``.

    ``factor_orders`` may be any cyclic decomposition (prime-power form is
    not required; only the direct-sum structure is ever used).  The empty
    tuple is the trivial group.
    """

    factor_orders: tuple[int, ...]
    order: int
    exponent: int

    # -- element handling -------------------------------------------------

    def element(self, index: int) -> "GroupElement":
        """Decode a mixed-radix index (first factor most significant)."""
        if not 0 <= index < self.order:
            raise ValidationError(f"element index {index} out of range [0, {self.order})")
        digits = []
        rem = index
        for n in reversed(self.factor_orders):
            digits.append(rem % n)
            rem //= n
        return GroupElement(self, tuple(reversed(digits)))

    def index(self, element: "GroupElement") -> int:
        self._check_member(element)
        idx = 0
        for digit, n in zip(element.digits, self.factor_orders):
            idx = idx * n + digit
        return idx

    def elements(self) -> Iterator["GroupElement"]:
        for i in range(self.order):
            yield self.element(i)

    def identity(self) -> "GroupElement":
        return GroupElement(self, (0,) * len(self.factor_orders))

    def literal(self) -> str:
        if not self.factor_orders:
            return "Z1"
        return "x".join(f"Z{n}" for n in self.factor_orders)

    def _check_member(self, element: "GroupElement") -> None:
        if element.group.factor_orders != self.factor_orders:
            raise ValidationError(
                f"element of {element.group.literal()} used with {self.literal()}"
            )


@dataclass(frozen=True)
class GroupElement:
    """An element of a :class:`GroupSpec`, stored as its digit tuple."""

    group: GroupSpec
    digits: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.digits) != len(self.group.factor_orders):
            raise ValidationError("digit count does not match factor count")
        for d, n in zip(self.digits, self.group.factor_orders):
            if not 0 <= d < n:
                raise ValidationError(f"digit {d} out of range for Z{n}")

    @property
    def index(self) -> int:
        return self.group.index(self)

    def is_identity(self) -> bool:
        return all(d == 0 for d in self.digits)


def make_group(factor_orders: Sequence[int]) -> GroupSpec:
    """Build a group spec, dropping trivial factors equal to 1."""
    for n in factor_orders:
        if not isinstance(n, (int, np.integer)) or n < 1:
            raise ValidationError(f"cyclic factor order must be a positive integer, got {n!r}")
    kept = tuple(int(n) for n in factor_orders if n > 1)
    order = math.prod(kept) if kept else 1
    exponent = reduce(math.lcm, kept, 1)
    return GroupSpec(kept, order, exponent)


_LITERAL_RE = re.compile(r"^z(\d+)$")


def parse_group_literal(text: str) -> GroupSpec:
    """Parse literals like ``"Z2"`` or ``"Z2xZ3xZ4"`` (case-insensitive)."""
    parts = text.strip().lower().split("x")
    orders = []
    for part in parts:
        m = _LITERAL_RE.match(part.strip())
        if m is None:
            raise ValidationError(f"bad group literal {text!r}; expected e.g. 'Z2' or 'Z2xZ3'")
        orders.append(int(m.group(1)))
    return make_group(orders)


def multiply(a: GroupElement, b: GroupElement) -> GroupElement:
    a.group._check_member(b)
    digits = tuple((x + y) % n for x, y, n in zip(a.digits, b.digits, a.group.factor_orders))
    return GroupElement(a.group, digits)


def inverse(a: GroupElement) -> GroupElement:
    digits = tuple((-x) % n for x, n in zip(a.digits, a.group.factor_orders))
    return GroupElement(a.group, digits)


def self_inverse_elements(group: GroupSpec) -> list[GroupElement]:
    """All g with g*g = identity, in index order.

    These form a subgroup isomorphic to Z2^k, so the count is a power of 2.
    """
    out = []
    for g in group.elements():
        if multiply(g, g).is_identity():
            out.append(g)
    return out


# -- characters ---------------------------------------------------------


def _cyclic_fourier(n: int) -> np.ndarray:
    """Character table of Z_n with exact entries for n in {1, 2, 4}."""
    if n == 1:
        return np.ones((1, 1), dtype=complex)
    if n == 2:
        return np.array([[1, 1], [1, -1]], dtype=complex)
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    powers = (j * k) % n
    if n == 4:
        table = np.array([1, 1j, -1, -1j], dtype=complex)
    else:
        angles = 2.0 * np.pi * np.arange(n) / n
        table = np.cos(angles) + 1j * np.sin(angles)
    return table[powers]


def fourier_matrix(group: GroupSpec) -> np.ndarray:
    """Unnormalized character table: ``H[j, k] = prod_i w_i^(j_i * k_i)``.

    Takes a Kronecker-product structure over the cyclic factors, consistent
    with the mixed-radix element encoding.
    """
    mats = [_cyclic_fourier(n) for n in group.factor_orders]
    return reduce(np.kron, mats, np.ones((1, 1), dtype=complex))


# -- recoupling symbols ---------------------------------------------------


def _triad_allowed(a: GroupElement, b: GroupElement, c: GroupElement) -> bool:
    return multiply(multiply(a, b), c).is_identity()


def f_symbol(
    group: GroupSpec,
    i: GroupElement,
    j: GroupElement,
    m: GroupElement,
    k: GroupElement,
    l: GroupElement,
    n: GroupElement,
) -> int:
    """0/1 recoupling symbol of an Abelian group.

    Equals 1 iff all four label triads {i,j,m}, {k,l,m*}, {i,n,l} and
    {j,k,n*} satisfy the branching rule (group product equals identity).
    """
    for e in (i, j, m, k, l, n):
        group._check_member(e)
    ok = (
        _triad_allowed(i, j, m)
        and _triad_allowed(k, l, inverse(m))
        and _triad_allowed(i, n, l)
        and _triad_allowed(j, k, inverse(n))
    )
    return 1 if ok else 0


def f_tensor(group: GroupSpec) -> np.ndarray:
    """The full recoupling tensor ``F[i, j, m, k, l, n]`` as an int8 array."""
    d = group.order
    if d**6 > 2**26:
        raise BudgetExceededError(f"recoupling tensor for order {d} is too large")
    s = _digit_sum_table(group)  # s[a, b] = index of product of elements a, b
    inv = _inverse_table(group)
    idx = np.arange(d)
    t2 = s[idx[:, None], idx[None, :]]  # product of two elements

    def triad(a, b, c):
        # a, b, c broadcastable index arrays; 1 iff product is identity
        return s[t2[a, b], c] == 0

    i = idx[:, None, None, None, None, None]
    j = idx[None, :, None, None, None, None]
    m = idx[None, None, :, None, None, None]
    k = idx[None, None, None, :, None, None]
    l = idx[None, None, None, None, :, None]
    n = idx[None, None, None, None, None, :]
    out = (
        triad(i, j, m)
        & triad(k, l, inv[m])
        & triad(i, n, l)
        & triad(j, k, inv[n])
    )
    return out.astype(np.int8)


def _digit_sum_table(group: GroupSpec) -> np.ndarray:
    d = group.order
    table = np.zeros((d, d), dtype=np.int64)
    for a in range(d):
        ea = group.element(a)
        for b in range(d):
            table[a, b] = multiply(ea, group.element(b)).index
    return table


def _inverse_table(group: GroupSpec) -> np.ndarray:
    return np.array([inverse(g).index for g in group.elements()], dtype=np.int64)


@dataclass(frozen=True)
class PentagonResult:
    ok: bool
    counterexample: Optional[dict]  # labels m,l,q,k,p,j,i,s,r at first failure


def pentagon_check(
    group: GroupSpec,
    f: Optional[np.ndarray] = None,
    max_order: int = 6,
) -> PentagonResult:
    """Exhaustively verify the recoupling consistency identity.

    For every assignment of the nine free labels, the contraction
    ``sum_n F[m,l,q,k,p*,n] F[j,i,p,m,n,s*] F[j,s*,n,l,k,r*]`` must equal
    ``F[j,i,p,q*,k,r*] F[r,i,q*,m,l,s*]``.  ``f`` may override the
    group-derived tensor (used to probe corrupted data).  Enumeration is
    guarded by ``max_order`` since the check is |G|^9 in the group order.
    """
    if group.order > max_order:
        raise BudgetExceededError(
            f"pentagon enumeration for order {group.order} exceeds guard {max_order}"
        )
    F = f_tensor(group) if f is None else np.asarray(f, dtype=np.int8)
    d = group.order
    if F.shape != (d,) * 6:
        raise ValidationError(f"override tensor must have shape {(d,)*6}")
    inv = _inverse_table(group)

    f1 = np.take(F, inv, axis=4)  # F[m,l,q,k,p*,n]
    f2 = np.take(F, inv, axis=5)  # F[j,i,p,m,n,s*]
    f3 = np.take(np.take(F, inv, axis=1), inv, axis=5)  # F[j,s*,n,l,k,r*]
    lhs = np.einsum("mlqkpn,jipmns,jsnlkr->mlqkpjisr", f1, f2, f3, dtype=np.int32)

    f4 = np.take(np.take(F, inv, axis=3), inv, axis=5)  # F[j,i,p,q*,k,r*]
    f5 = np.take(np.take(F, inv, axis=2), inv, axis=5)  # F[r,i,q*,m,l,s*]
    rhs = np.einsum("jipqkr,riqmls->mlqkpjisr", f4, f5, dtype=np.int32)

    bad = np.argwhere(lhs != rhs)
    if bad.size == 0:
        return PentagonResult(True, None)
    first = bad[0]
    names = ("m", "l", "q", "k", "p", "j", "i", "s", "r")
    return PentagonResult(False, {name: int(v) for name, v in zip(names, first)})


def branching_consistency(group: GroupSpec) -> bool:
    """Check that the branching tensor is recovered from the recoupling data.

    With all quantum dimensions equal to 1 this reduces to
    ``T[i,j,k] == F[i,j,k, j*, i*, 0]`` for every label triple.
    """
    e0 = group.identity()
    for i in group.elements():
        for j in group.elements():
            for k in group.elements():
                t = 1 if _triad_allowed(i, j, k) else 0
                f = f_symbol(group, i, j, k, inverse(j), inverse(i), e0)
                if t != f:
                    return False
    return True
