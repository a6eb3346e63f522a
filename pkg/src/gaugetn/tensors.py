"""Symbolic tensor vocabulary and dense tensor arithmetic.

Node kinds are immutable descriptions; they are materialized to explicit
complex arrays only when a dense contraction actually needs the numbers.
Index order on a node is purely structural (port order), never semantic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import BudgetExceededError, ValidationError
from .groups import GroupElement, GroupSpec, fourier_matrix, self_inverse_elements

__all__ = [
    "DenseTensor",
    "Copy",
    "GroupPlus",
    "Fourier",
    "FourierConj",
    "SubCopy",
    "Impurity",
    "BasisKet",
    "UniformKet",
    "Dense",
    "NodeKind",
    "node_arity",
    "conjugate_kind",
    "materialize",
    "contract_pair",
    "equal_up_to_scale",
    "bialgebra_condition_check",
]

# Materializing a single node never needs more entries than this; the
# contraction planners apply their own budgets on top.
_MAX_MATERIALIZE_ENTRIES = 2**26


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """Explicit multi-index array of complex amplitudes.

    A 0-arity tensor is a scalar.  Data is row-major over the index tuple,
    which is what the JSON form ``{"dims": [...], "re": [...], "im": [...]}``
    stores.
    """

    array: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.array, dtype=complex)
        object.__setattr__(self, "array", arr)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.array.shape)

    @property
    def size(self) -> int:
        return int(self.array.size)

    def conj(self) -> "DenseTensor":
        return DenseTensor(np.conj(self.array))

    def to_json_dict(self) -> dict:
        flat = self.array.reshape(-1)
        return {
            "dims": list(self.dims),
            "re": [float(x) for x in flat.real],
            "im": [float(x) for x in flat.imag],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DenseTensor":
        dims = tuple(int(d) for d in data["dims"])
        re = np.array(data["re"], dtype=float)
        im = np.array(data["im"], dtype=float)
        if re.size != math.prod(dims) or im.size != re.size:
            raise ValidationError("dense tensor JSON has inconsistent sizes")
        return cls((re + 1j * im).reshape(dims))


# -- node kinds -----------------------------------------------------------


@dataclass(frozen=True)
class Copy:
    """Generalized Kronecker delta: 1 iff all indices are equal."""

    group: GroupSpec
    arity: int

    def __post_init__(self) -> None:
        if self.arity < 0:
            raise ValidationError("Copy arity must be >= 0")


@dataclass(frozen=True)
class GroupPlus:
    """Vertex constraint tensor: 1 iff the group product of all indices is identity."""

    group: GroupSpec
    arity: int

    def __post_init__(self) -> None:
        if self.arity < 0:
            raise ValidationError("GroupPlus arity must be >= 0")


@dataclass(frozen=True)
class Fourier:
    """Unnormalized character matrix H (arity 2, symmetric)."""

    group: GroupSpec


@dataclass(frozen=True)
class FourierConj:
    """Entrywise conjugate of :class:`Fourier` (arity 2)."""

    group: GroupSpec


@dataclass(frozen=True)
class SubCopy:
    """Copy restricted to self-inverse group elements."""

    group: GroupSpec
    arity: int

    def __post_init__(self) -> None:
        if self.arity < 0:
            raise ValidationError("SubCopy arity must be >= 0")


@dataclass(frozen=True)
class Impurity:
    """Vertex tensor interpolating between closed- and open-string enforcement.

    Defined for two-element groups only, arity 3: entries are cos(theta)^0.5
    on even-parity index triples and sin(theta)^0.5 on odd-parity ones.
    """

    group: GroupSpec
    theta: float

    def __post_init__(self) -> None:
        if self.group.order != 2:
            raise ValidationError("Impurity tensors require a group of order 2")
        if not 0.0 <= self.theta <= math.pi / 2 + 1e-12:
            raise ValidationError("Impurity angle must lie in [0, pi/2]")


@dataclass(frozen=True)
class BasisKet:
    """Standard basis vector |g> (arity 1)."""

    group: GroupSpec
    element: GroupElement


@dataclass(frozen=True)
class UniformKet:
    """All-ones vector (arity 1)."""

    group: GroupSpec


@dataclass(frozen=True, eq=False)
class Dense:
    """Explicit numeric tensor node; all axes must have dimension |G|."""

    group: GroupSpec
    tensor: DenseTensor

    def __post_init__(self) -> None:
        d = self.group.order
        if any(dim != d for dim in self.tensor.dims):
            raise ValidationError("Dense node axes must all have dimension |G|")


NodeKind = Union[
    Copy, GroupPlus, Fourier, FourierConj, SubCopy, Impurity, BasisKet, UniformKet, Dense
]


def node_arity(kind: NodeKind) -> int:
    if isinstance(kind, (Copy, GroupPlus, SubCopy)):
        return kind.arity
    if isinstance(kind, (Fourier, FourierConj)):
        return 2
    if isinstance(kind, Impurity):
        return 3
    if isinstance(kind, (BasisKet, UniformKet)):
        return 1
    if isinstance(kind, Dense):
        return len(kind.tensor.dims)
    raise ValidationError(f"unknown node kind {kind!r}")


def conjugate_kind(kind: NodeKind) -> NodeKind:
    """Entrywise conjugate; a no-op for every real-valued kind."""
    if isinstance(kind, Fourier):
        return FourierConj(kind.group)
    if isinstance(kind, FourierConj):
        return Fourier(kind.group)
    if isinstance(kind, Dense):
        return Dense(kind.group, kind.tensor.conj())
    return kind


def _digit_constraint(group: GroupSpec, arity: int) -> np.ndarray:
    """Boolean grid over [d]^arity where the group product of indices is identity."""
    d = group.order
    cond = np.ones((d,) * arity, dtype=bool)
    stride = d
    for n in group.factor_orders:
        stride //= n
        digits = (np.arange(d) // stride) % n
        total = digits.copy()
        for _ in range(arity - 1):
            total = (np.add.outer(total, digits)) % n
        cond &= total == 0
    return cond


def materialize(kind: NodeKind) -> DenseTensor:
    """Produce the explicit tensor of a node kind, shape [|G|] * arity."""
    group = kind.group
    d = group.order
    arity = node_arity(kind)
    if d**arity > _MAX_MATERIALIZE_ENTRIES:
        raise BudgetExceededError(
            f"materializing a {type(kind).__name__} of arity {arity} over order {d} "
            "exceeds the size guard"
        )
    if isinstance(kind, Copy):
        arr = np.zeros((d,) * arity, dtype=complex)
        if arity == 0:
            arr[()] = d  # closed loop traces to |G|
        else:
            for g in range(d):
                arr[(g,) * arity] = 1.0
        return DenseTensor(arr)
    if isinstance(kind, SubCopy):
        selfinv = [g.index for g in self_inverse_elements(group)]
        arr = np.zeros((d,) * arity, dtype=complex)
        if arity == 0:
            arr[()] = len(selfinv)
        else:
            for g in selfinv:
                arr[(g,) * arity] = 1.0
        return DenseTensor(arr)
    if isinstance(kind, GroupPlus):
        if arity == 0:
            return DenseTensor(np.array(1.0 + 0j))
        cond = _digit_constraint(group, arity)
        return DenseTensor(cond.astype(complex))
    if isinstance(kind, Fourier):
        return DenseTensor(fourier_matrix(group))
    if isinstance(kind, FourierConj):
        return DenseTensor(np.conj(fourier_matrix(group)))
    if isinstance(kind, Impurity):
        idx = np.indices((2, 2, 2)).sum(axis=0) % 2
        # clamp tiny negative rounding at theta = pi/2 before the square root
        even = math.sqrt(max(math.cos(kind.theta), 0.0))
        odd = math.sqrt(max(math.sin(kind.theta), 0.0))
        arr = np.where(idx == 0, even, odd).astype(complex)
        return DenseTensor(arr)
    if isinstance(kind, BasisKet):
        arr = np.zeros((d,), dtype=complex)
        arr[kind.element.index] = 1.0
        return DenseTensor(arr)
    if isinstance(kind, UniformKet):
        return DenseTensor(np.ones((d,), dtype=complex))
    if isinstance(kind, Dense):
        return kind.tensor
    raise ValidationError(f"unknown node kind {kind!r}")


# -- dense arithmetic -----------------------------------------------------


def contract_pair(
    a: DenseTensor, b: DenseTensor, pairs: Sequence[tuple[int, int]]
) -> DenseTensor:
    """Sum over paired indices; remaining indices keep order (a's, then b's)."""
    ia = [p[0] for p in pairs]
    ib = [p[1] for p in pairs]
    if len(set(ia)) != len(ia) or len(set(ib)) != len(ib):
        raise ValidationError("contract_pair indices must be distinct")
    for x, y in pairs:
        if not 0 <= x < len(a.dims) or not 0 <= y < len(b.dims):
            raise ValidationError("contract_pair index out of range")
        if a.dims[x] != b.dims[y]:
            raise ValidationError(
                f"paired dimensions differ: {a.dims[x]} (axis {x}) vs {b.dims[y]} (axis {y})"
            )
    if not pairs:
        return DenseTensor(np.multiply.outer(a.array, b.array))
    return DenseTensor(np.tensordot(a.array, b.array, axes=(ia, ib)))


def equal_up_to_scale(
    a: DenseTensor, b: DenseTensor, tol: float
) -> tuple[bool, complex]:
    """Test a == c*b for some nonzero c, fitted on b's largest-magnitude entry."""
    if a.dims != b.dims:
        raise ValidationError(f"shape mismatch: {a.dims} vs {b.dims}")
    amax = float(np.max(np.abs(a.array))) if a.size else 0.0
    bmax = float(np.max(np.abs(b.array))) if b.size else 0.0
    if bmax == 0.0:
        return (amax == 0.0, 1.0 + 0j)
    if amax == 0.0:
        return (False, 0j)
    flat_b = b.array.reshape(-1)
    pos = int(np.argmax(np.abs(flat_b)))
    c = complex(a.array.reshape(-1)[pos] / flat_b[pos])
    if c == 0:
        return (False, 0j)
    dev = float(np.max(np.abs(a.array - c * b.array)))
    return (dev <= tol * amax, c)


def bialgebra_condition_check(b: DenseTensor, tol: float = 1e-9) -> bool:
    """Check the component condition for a cubic tensor to commute past Copy.

    Requires every component to be 0 or 1 and, with any two indices fixed,
    at most one value of the third index carrying a 1 (checked in all three
    index roles).
    """
    if len(b.dims) != 3 or len(set(b.dims)) != 1:
        raise ValidationError("bialgebra condition check requires a cubic arity-3 tensor")
    arr = b.array
    is_zero = np.abs(arr) <= tol
    is_one = np.abs(arr - 1.0) <= tol
    if not np.all(is_zero | is_one):
        return False
    ones = is_one.astype(np.int64)
    for axis in range(3):
        if np.max(ones.sum(axis=axis)) > 1:
            return False
    return True
