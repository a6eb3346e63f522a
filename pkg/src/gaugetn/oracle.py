"""Exponential-cost ground truth for desk-scale verification.

Two independent evaluation routes are provided: per-configuration amplitude
evaluation (a literal product over vertex tensors), and full dense
contraction of a network by pairwise summation with no rewriting at all.
Both are meant to be slow and obviously correct.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import ValidationError
from .groups import GroupElement
from .network import KET, TensorNetwork
from .tensors import Copy, DenseTensor, GroupPlus, Impurity, SubCopy, materialize

__all__ = ["amplitude", "brute_force_contract", "compare_to_pipeline", "VerificationReport"]


def amplitude(
    net: TensorNetwork, config: Mapping[str, Union[GroupElement, int]]
) -> complex:
    """Amplitude of one basis configuration of a lattice-state network.

    The network must have the builder shape: every open leg is a ket leg on
    a three-leg Copy whose other two ports reach vertex tensors.  The Copy
    nodes transmit the configured labels; the result is the product of the
    vertex tensors evaluated at their incident labels.
    """
    group = net.group
    labels: dict[str, int] = {}
    for site, value in config.items():
        if isinstance(value, GroupElement):
            group._check_member(value)
            labels[site] = value.index
        else:
            idx = int(value)
            if not 0 <= idx < group.order:
                raise ValidationError(f"config value {idx} out of range for {group.literal()}")
            labels[site] = idx

    carriers: dict[int, str] = {}
    for (nid, port), leg in net.open_legs().items():
        if leg.layer != KET:
            raise ValidationError("amplitude is defined on single-layer ket networks")
        kind = net.nodes[nid]
        if not isinstance(kind, Copy) or kind.arity != 3:
            raise ValidationError("open legs must sit on three-leg Copy carriers")
        carriers[nid] = leg.site
    if set(labels) != set(carriers.values()):
        raise ValidationError("config must cover exactly the network's site set")

    value = complex(net.scalar)
    for nid in sorted(net.nodes):
        kind = net.nodes[nid]
        if nid in carriers:
            continue
        if not isinstance(kind, (GroupPlus, Impurity, SubCopy)):
            raise ValidationError(
                f"node {nid} ({type(kind).__name__}) is not a vertex tensor; "
                "amplitude needs a builder-shaped network"
            )
        incident = []
        for p in net.ports(nid):
            att = net.attachment(p)
            if att is None or att[0] != "e":
                raise ValidationError("vertex tensors must have all ports wired")
            peer = net.edge_peer(p)
            if peer[0] not in carriers:
                raise ValidationError("vertex tensors must only touch site carriers")
            incident.append(labels[carriers[peer[0]]])
        tensor = materialize(kind).array
        value *= tensor[tuple(incident)]
        if value == 0:
            return 0j
    return value


def brute_force_contract(
    net: TensorNetwork,
    budget: float = 1e8,
    max_output_entries: int = 2**24,
) -> DenseTensor:
    """Contract a network by direct dense summation, no rewrite rules.

    The output tensor runs over the open legs in (site, layer) sorted order
    and includes the network's accumulated scalar.  The multiply-add cost is
    predicted from dimensions alone and checked against ``budget`` before
    any tensor is materialized.
    """
    from .network import dense_evaluate

    return dense_evaluate(net, cost_budget=budget, max_output_entries=max_output_entries)


@dataclass(frozen=True)
class VerificationReport:
    passed: bool
    max_abs_deviation: float
    tolerance: float
    dims: tuple[int, ...]

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}: max |pipeline - oracle| = {self.max_abs_deviation:.3e} "
            f"(tol {self.tolerance:.1e}, output dims {list(self.dims)})"
        )


def compare_to_pipeline(
    net: TensorNetwork,
    tol: float = 1e-10,
    budget: float = 1e8,
) -> VerificationReport:
    """Contract ``net`` by brute force and by the rewrite pipeline; compare exactly."""
    from .rewrite import contract_exactly  # local import to avoid a cycle

    reference = brute_force_contract(net, budget=budget)
    candidate = contract_exactly(net)
    if reference.dims != candidate.dims:
        raise ValidationError(
            f"output shapes differ: oracle {reference.dims} vs pipeline {candidate.dims}"
        )
    dev = float(np.max(np.abs(reference.array - candidate.array))) if reference.size else 0.0
    scale = float(np.max(np.abs(reference.array))) if reference.size else 1.0
    limit = tol * max(scale, 1.0)
    return VerificationReport(dev <= limit, dev, tol, reference.dims)
