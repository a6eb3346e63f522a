"""Greedy pairwise dense contraction with cost accounting up front.

Inputs are arrays with one hashable label per axis.  Labels appearing twice
are summed over (an internal edge, possibly a self-trace); labels appearing
once survive to the output.  The schedule greedily contracts the connected
pair with the smallest output, with ties broken by item order, so identical
inputs always produce identical schedules.

The multiply-add cost of the whole schedule is computed from shapes alone
and checked against the budget before any numeric work happens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BudgetExceededError

__all__ = ["ContractionResult", "contract_labeled"]


@dataclass
class _Item:
    order: int
    labels: list
    shape: tuple[int, ...]
    array: Optional[np.ndarray]


@dataclass(frozen=True)
class ContractionResult:
    array: np.ndarray
    labels: tuple


def contract_labeled(
    arrays: Sequence[Optional[np.ndarray]],
    labels: Sequence[Sequence],
    shapes: Optional[Sequence[tuple[int, ...]]] = None,
    cost_budget: float = 1e8,
    max_output_entries: int = 2**24,
) -> ContractionResult:
    """Contract labeled arrays; pass ``arrays=[None, ...]`` with ``shapes`` to only plan.

    Raises :class:`BudgetExceededError` if the planned multiply-add count
    exceeds ``cost_budget`` or the output exceeds ``max_output_entries``.
    """
    if shapes is None:
        shapes = [tuple(a.shape) for a in arrays]
    # output guard first: labels that appear exactly once survive
    counts: dict = {}
    for labs in labels:
        for lab in labs:
            counts[lab] = counts.get(lab, 0) + 1
    bad = [lab for lab, c in counts.items() if c > 2]
    if bad:
        raise ValueError(f"labels used more than twice: {bad[:3]}")
    out_size = 1
    for labs, shape in zip(labels, shapes):
        for lab, dim in zip(labs, shape):
            if counts[lab] == 1:
                out_size *= dim
    if out_size > max_output_entries:
        raise BudgetExceededError(
            f"contraction output would hold {out_size} entries "
            f"(guard: {max_output_entries})"
        )

    cost = _run(shapes, labels, None)[0]
    if cost > cost_budget:
        raise BudgetExceededError(
            f"contraction needs ~{cost:.3g} multiply-adds (budget: {cost_budget:.3g})"
        )
    _, result = _run(shapes, labels, arrays)
    assert result is not None
    return result


def _run(shapes, labels, arrays) -> tuple[float, Optional[ContractionResult]]:
    planning = arrays is None or any(a is None for a in arrays)
    items: list[_Item] = []
    for i, (shape, labs) in enumerate(zip(shapes, labels)):
        arr = None if planning else np.asarray(arrays[i], dtype=complex)
        items.append(_Item(i, list(labs), tuple(shape), arr))
    cost = 0.0

    def self_trace(item: _Item) -> float:
        spent = 0.0
        while True:
            dup = _first_duplicate(item.labels)
            if dup is None:
                return spent
            a1, a2 = dup
            dim = item.shape[a1]
            new_shape = tuple(d for k, d in enumerate(item.shape) if k not in (a1, a2))
            spent += math.prod(new_shape) * dim
            if not planning:
                item.array = np.trace(item.array, axis1=a1, axis2=a2)
            item.labels = [l for k, l in enumerate(item.labels) if k not in (a1, a2)]
            item.shape = new_shape

    for item in items:
        cost += self_trace(item)

    live = list(items)
    while len(live) > 1:
        best = None
        for ii in range(len(live)):
            for jj in range(ii + 1, len(live)):
                a, b = live[ii], live[jj]
                shared = set(a.labels) & set(b.labels)
                if not shared:
                    continue
                out = math.prod(a.shape) * math.prod(b.shape)
                for lab in shared:
                    dim = a.shape[a.labels.index(lab)]
                    out //= dim * dim
                key = (out, ii, jj)
                if best is None or key < best:
                    best = key
        if best is None:
            break  # disconnected remainder: outer products below
        _, ii, jj = best
        a, b = live[ii], live[jj]
        shared = sorted(
            (set(a.labels) & set(b.labels)),
            key=lambda lab: a.labels.index(lab),
        )
        axes_a = [a.labels.index(lab) for lab in shared]
        axes_b = [b.labels.index(lab) for lab in shared]
        new_labels = [l for l in a.labels if l not in shared] + [
            l for l in b.labels if l not in shared
        ]
        new_shape = tuple(
            d for k, d in enumerate(a.shape) if k not in axes_a
        ) + tuple(d for k, d in enumerate(b.shape) if k not in axes_b)
        step = math.prod(new_shape) * math.prod(a.shape[k] for k in axes_a)
        cost += step
        merged_arr = None
        if not planning:
            merged_arr = np.tensordot(a.array, b.array, axes=(axes_a, axes_b))
        merged = _Item(a.order, new_labels, new_shape, merged_arr)
        cost += self_trace(merged)
        live = [it for k, it in enumerate(live) if k not in (ii, jj)]
        live.append(merged)
        live.sort(key=lambda it: it.order)

    # disconnected remainder: plain outer products in item order
    while len(live) > 1:
        a, b = live[0], live[1]
        new_shape = a.shape + b.shape
        cost += math.prod(new_shape)
        arr = None
        if not planning:
            arr = np.multiply.outer(a.array, b.array).reshape(new_shape)
        merged = _Item(a.order, a.labels + b.labels, new_shape, arr)
        live = [merged] + live[2:]

    if planning:
        return cost, None
    if not live:
        return cost, ContractionResult(np.array(1.0 + 0j), ())
    final = live[0]
    return cost, ContractionResult(final.array, tuple(final.labels))


def _first_duplicate(labs: list) -> Optional[tuple[int, int]]:
    seen: dict = {}
    for k, lab in enumerate(labs):
        if lab in seen:
            return (seen[lab], k)
        seen[lab] = k
    return None
