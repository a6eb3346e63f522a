"""Diagrammatic rewrite rules and exact contraction.

The rule catalog is fixed.  Every rule is a local, oracle-checkable tensor
identity; applying one multiplies the network scalar by a documented exact
factor (1, |G|, or the self-inverse subgroup size).  ``simplify`` drives
the catalog in phases until no rule fires, leaving a residual network whose
size is bounded by the number of open legs plus impurity/dense insertions;
``contract_exactly`` evaluates that residual densely.

Scheduling is deterministic: worklists pop the smallest node id, matchers
resolve every choice by ascending id, and new nodes take ids from a
monotone counter.  Identical inputs therefore produce identical traces.
"""

from __future__ import annotations

import heapq
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import BudgetExceededError, ValidationError
from .groups import self_inverse_elements
from .network import Leg, Port, TensorNetwork, dense_evaluate
from .tensors import (
    BasisKet,
    Copy,
    DenseTensor,
    Fourier,
    FourierConj,
    GroupPlus,
    SubCopy,
    UniformKet,
    node_arity,
)

__all__ = [
    "RULES",
    "RewriteStep",
    "RewriteTrace",
    "simplify",
    "contract_exactly",
    "apply_rule_at",
    "replay",
]

LAYER_FUSE = "LayerFuse"
COPY_FUSION = "CopyFusion"
PLUS_FUSION = "PlusFusion"
BIALGEBRA = "Bialgebra"
HOPF = "Hopf"
PLUS_TO_FOURIER = "PlusToFourierCopy"
FOURIER_CANCEL = "FourierCancel"
COPY_POINT = "CopyPoint"
UNIT_ELIM = "UnitElim"
SELF_LOOP = "SelfLoopTrace"
SUBCOPY_FORM = "SubCopyForm"
SUBCOPY_FUSION = "SubCopyFusion"

RULES = (
    LAYER_FUSE,
    COPY_FUSION,
    PLUS_FUSION,
    BIALGEBRA,
    HOPF,
    PLUS_TO_FOURIER,
    FOURIER_CANCEL,
    COPY_POINT,
    UNIT_ELIM,
    SELF_LOOP,
    SUBCOPY_FORM,
    SUBCOPY_FUSION,
)


@dataclass(frozen=True)
class RewriteStep:
    rule: str
    nodes: tuple[int, ...]
    scalar: complex
    params: dict = field(default_factory=dict)


@dataclass
class RewriteTrace:
    steps: list[RewriteStep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def to_jsonl(self) -> str:
        lines = []
        for s in self.steps:
            lines.append(
                json.dumps(
                    {
                        "rule": s.rule,
                        "nodes": list(s.nodes),
                        "scalar": [s.scalar.real, s.scalar.imag],
                    },
                    sort_keys=True,
                )
            )
        return "\n".join(lines)


# -- small helpers ----------------------------------------------------------


def _si_count(group) -> int:
    return len(self_inverse_elements(group))


def _canonicalize(net: TensorNetwork, nid: int) -> complex:
    """Collapse arity-0 structural nodes to scalars and arity-1 ones to kets."""
    if nid not in net.nodes:
        return 1.0 + 0j
    kind = net.nodes[nid]
    ar = node_arity(kind)
    group = net.group
    if ar == 0:
        if isinstance(kind, Copy):
            factor = complex(group.order)
        elif isinstance(kind, SubCopy):
            factor = complex(_si_count(group))
        elif isinstance(kind, GroupPlus):
            factor = 1.0 + 0j
        else:
            return 1.0 + 0j
        net.remove_node(nid)
        net.scalar *= factor
        return factor
    if ar == 1:
        if isinstance(kind, Copy):
            net.nodes[nid] = UniformKet(group)
        elif isinstance(kind, GroupPlus):
            net.nodes[nid] = BasisKet(group, group.identity())
    return 1.0 + 0j


def _edge_peer_node(net: TensorNetwork, nid: int, eid: int) -> int:
    p, q = net.edges[eid]
    return q[0] if p[0] == nid else p[0]


def _copy_peers(net: TensorNetwork, nid: int, kinds: tuple) -> list[int]:
    peers = set()
    for eid in net.node_edges(nid):
        b = _edge_peer_node(net, nid, eid)
        if b != nid and isinstance(net.nodes[b], kinds):
            peers.add(b)
    return sorted(peers)


def _retained_ports(net: TensorNetwork, nid: int, dead_edges: set[int]) -> list[Port]:
    out = []
    for p in net.ports(nid):
        att = net.attachment(p)
        if att is None:
            continue
        if att[0] == "e" and att[1] in dead_edges:
            continue
        out.append(p)
    return out


def _merge_nodes(
    net: TensorNetwork, a: int, b: int, shared: list[int], kind_factory: Callable[[int], object]
) -> tuple[int, complex, set[int]]:
    """Replace nodes a, b by one node over their non-shared ports."""
    touched = set(net.neighbors(a)) | set(net.neighbors(b))
    dead = set(shared)
    retained = _retained_ports(net, a, dead) + _retained_ports(net, b, dead)
    for eid in shared:
        net.remove_edge(eid)
    new = net.add_node(kind_factory(len(retained)))
    for i, src in enumerate(retained):
        net.rewire(src, (new, i))
    net.remove_node(a)
    net.remove_node(b)
    factor = _canonicalize(net, new)
    touched.add(new)
    return new, factor, touched


def _shrink_node(net: TensorNetwork, nid: int, dead_edges: set[int], kind_factory) -> tuple[int, complex, set[int]]:
    """Rebuild one node without the ports sitting on ``dead_edges``."""
    touched = set(net.neighbors(nid))
    retained = _retained_ports(net, nid, dead_edges)
    for eid in sorted(dead_edges):
        if eid in net.edges:
            net.remove_edge(eid)
    new = net.add_node(kind_factory(len(retained)))
    for i, src in enumerate(retained):
        net.rewire(src, (new, i))
    net.remove_node(nid)
    factor = _canonicalize(net, new)
    touched.add(new)
    return new, factor, touched


# -- rule: Copy fusion -------------------------------------------------------


def _match_copy_fusion(net, anchor, exactly_one=False, **_):
    kind = net.nodes.get(anchor)
    if not isinstance(kind, Copy):
        return None
    for b in _copy_peers(net, anchor, (Copy,)):
        shared = net.edges_between(anchor, b)
        if exactly_one and len(shared) != 1:
            continue
        return {"a": anchor, "b": b, "shared": shared}
    return None


def _apply_copy_fusion(net, m, rule_name):
    group = net.group
    _, factor, touched = _merge_nodes(
        net, m["a"], m["b"], m["shared"], lambda n: Copy(group, n)
    )
    return RewriteStep(rule_name, (m["a"], m["b"]), factor), touched


# -- rule: Plus fusion (exponent-2 groups only) ------------------------------


def _match_plus_fusion(net, anchor, **_):
    kind = net.nodes.get(anchor)
    if not isinstance(kind, GroupPlus) or net.group.exponent != 2:
        return None
    for b in _copy_peers(net, anchor, (GroupPlus,)):
        shared = net.edges_between(anchor, b)
        if len(shared) == 1:
            return {"a": anchor, "b": b, "shared": shared}
    return None


def _apply_plus_fusion(net, m, rule_name):
    group = net.group
    _, factor, touched = _merge_nodes(
        net, m["a"], m["b"], m["shared"], lambda n: GroupPlus(group, n)
    )
    return RewriteStep(rule_name, (m["a"], m["b"]), factor), touched


# -- rule: Hopf disconnection (exponent-2 groups only) -----------------------


def _match_hopf(net, anchor, **_):
    kind = net.nodes.get(anchor)
    if net.group.exponent != 2:
        return None
    if isinstance(kind, Copy):
        other_kinds = (GroupPlus,)
    elif isinstance(kind, GroupPlus):
        other_kinds = (Copy,)
    else:
        return None
    for b in _copy_peers(net, anchor, other_kinds):
        shared = net.edges_between(anchor, b)
        if len(shared) == 2:
            copy_node = anchor if isinstance(kind, Copy) else b
            plus_node = b if isinstance(kind, Copy) else anchor
            return {"copy": copy_node, "plus": plus_node, "shared": shared}
    return None


def _apply_hopf(net, m, rule_name):
    group = net.group
    c, p, shared = m["copy"], m["plus"], m["shared"]
    touched = set(net.neighbors(c)) | set(net.neighbors(p))
    dead = set(shared)
    ret_c = _retained_ports(net, c, dead)
    ret_p = _retained_ports(net, p, dead)
    for eid in shared:
        net.remove_edge(eid)
    factor = 1.0 + 0j
    new_c = net.add_node(Copy(group, len(ret_c)))
    for i, src in enumerate(ret_c):
        net.rewire(src, (new_c, i))
    new_p = net.add_node(GroupPlus(group, len(ret_p)))
    for i, src in enumerate(ret_p):
        net.rewire(src, (new_p, i))
    net.remove_node(c)
    net.remove_node(p)
    factor *= _canonicalize(net, new_c)
    factor *= _canonicalize(net, new_p)
    touched.update((new_c, new_p))
    return RewriteStep(rule_name, (m["copy"], m["plus"]), factor), touched


# -- rule: bialgebra (node-reducing direction) --------------------------------


def _plus_copy_multiplicity(net, nid) -> Counter:
    mult: Counter = Counter()
    for eid in net.node_edges(nid):
        b = _edge_peer_node(net, nid, eid)
        if b != nid and isinstance(net.nodes[b], Copy):
            mult[b] += 1
    return mult


def _match_bialgebra(net, anchor, **_):
    kind = net.nodes.get(anchor)
    if not isinstance(kind, GroupPlus):
        return None
    mult_p = _plus_copy_multiplicity(net, anchor)
    if not mult_p:
        return None
    candidates = set()
    for c in mult_p:
        for q in _copy_peers(net, c, (GroupPlus,)):
            if q != anchor:
                candidates.add(q)
    for q in sorted(candidates):
        if net.edges_between(anchor, q):
            continue  # a direct edge between the two constraint tensors blocks the pattern
        mult_q = _plus_copy_multiplicity(net, q)
        shared = {c: k for c, k in mult_p.items() if mult_q.get(c) == k}
        if not shared:
            continue
        consumed = sum(shared.values())
        ns_p = node_arity(kind) - consumed
        ns_q = node_arity(net.nodes[q]) - sum(shared[c] for c in shared)
        if ns_p == ns_q == 0:
            return {"p": anchor, "q": q, "shared": shared, "bridged": False}
        if (
            ns_p == ns_q == 1
            and node_arity(kind) >= 3
            and node_arity(net.nodes[q]) >= 3
        ):
            return {"p": anchor, "q": q, "shared": shared, "bridged": True}
    return None


def _nonshared_port(net, nid, shared) -> Optional[Port]:
    for p in net.ports(nid):
        att = net.attachment(p)
        if att is None:
            continue
        if att[0] == "e":
            b = _edge_peer_node(net, nid, att[1])
            if b in shared:
                continue
        return p
    return None


def _apply_bialgebra(net, m, rule_name):
    group = net.group
    p, q, shared, bridged = m["p"], m["q"], m["shared"], m["bridged"]
    touched = set(net.neighbors(p)) | set(net.neighbors(q))
    total = sum(shared.values())
    new_plus = net.add_node(GroupPlus(group, total + (1 if bridged else 0)))
    factor = 1.0 + 0j
    bridge_src = None
    if bridged:
        xp = _nonshared_port(net, p, shared)
        yq = _nonshared_port(net, q, shared)
        hub = net.add_node(Copy(group, 3))
        net.add_edge((new_plus, total), (hub, 0))
        net.rewire(xp, (hub, 1))
        net.rewire(yq, (hub, 2))
        bridge_src = hub
        touched.add(hub)
    cursor = 0
    new_copies = []
    for c in sorted(shared):
        k = shared[c]
        dead = set(net.edges_between(p, c)) | set(net.edges_between(q, c))
        retained = _retained_ports(net, c, dead)
        for eid in sorted(dead):
            net.remove_edge(eid)
        nc = net.add_node(Copy(group, len(retained) + k))
        for i, src in enumerate(retained):
            net.rewire(src, (nc, i))
        for t in range(k):
            net.add_edge((nc, len(retained) + t), (new_plus, cursor))
            cursor += 1
        net.remove_node(c)
        new_copies.append(nc)
        touched.update(net.neighbors(nc))
        touched.add(nc)
    net.remove_node(p)
    net.remove_node(q)
    for nc in new_copies:
        factor *= _canonicalize(net, nc)
    factor *= _canonicalize(net, new_plus)
    touched.add(new_plus)
    if bridge_src is not None:
        factor *= _canonicalize(net, bridge_src)
    params = {"bridged": bridged}
    return RewriteStep(rule_name, (p, q) + tuple(sorted(shared)), factor, params), touched


# -- rule: convert a vertex tensor to Copy with characters on each leg --------


def _match_plus_to_fourier(net, anchor, conj=False, require_partner=False, **_):
    kind = net.nodes.get(anchor)
    if not isinstance(kind, GroupPlus) or node_arity(kind) < 3:
        return None
    if require_partner:
        ok = False
        for eid in net.node_edges(anchor):
            b = _edge_peer_node(net, anchor, eid)
            bk = net.nodes[b]
            if isinstance(bk, (Fourier, FourierConj)):
                ok = True
                break
            if isinstance(bk, GroupPlus) and node_arity(bk) >= 3:
                ok = True  # includes self-edges: the pair cancels into a wire loop
                break
        if not ok:
            return None
    return {"p": anchor, "conj": bool(conj)}


def _apply_plus_to_fourier(net, m, rule_name):
    group = net.group
    p, conj = m["p"], m["conj"]
    touched = set(net.neighbors(p))
    n = node_arity(net.nodes[p])
    c = net.add_node(Copy(group, n))
    h_kind = FourierConj(group) if conj else Fourier(group)
    for i, port in enumerate(net.ports(p)):
        h = net.add_node(h_kind)
        net.rewire(port, (h, 0))
        net.add_edge((h, 1), (c, i))
        touched.add(h)
    net.remove_node(p)
    factor = complex(1.0 / group.order)
    net.scalar *= factor
    touched.add(c)
    return RewriteStep(rule_name, (p,), factor, {"conj": conj}), touched


# -- rule: character-matrix cancellation --------------------------------------


def _match_fourier_cancel(net, anchor, **_):
    kind = net.nodes.get(anchor)
    if not isinstance(kind, (Fourier, FourierConj)):
        return None
    for eid in net.node_edges(anchor):
        b = _edge_peer_node(net, anchor, eid)
        if b == anchor:
            continue
        bk = net.nodes[b]
        if isinstance(bk, (Fourier, FourierConj)):
            mixed = type(bk) is not type(kind)
            return {"f": anchor, "g": b, "mixed": mixed}
    return None


def _apply_fourier_cancel(net, m, rule_name):
    group = net.group
    f, g, mixed = m["f"], m["g"], m["mixed"]
    touched = set(net.neighbors(f)) | set(net.neighbors(g))
    shared = net.edges_between(f, g)
    factor = complex(group.order)
    if len(shared) == 2:
        # both ports mutually joined: a closed two-node loop
        factor = complex(group.order**2) if mixed else complex(group.order * _si_count(group))
        for eid in shared:
            net.remove_edge(eid)
        net.remove_node(f)
        net.remove_node(g)
        net.scalar *= factor
        return RewriteStep(rule_name, (f, g), factor, {"mixed": mixed}), touched

    eid = shared[0]
    p, q = net.edges[eid]
    f_port = p if p[0] == f else q
    g_port = q if p[0] == f else p
    f_other = (f, 1 - f_port[1])
    g_other = (g, 1 - g_port[1])
    att_f = net.attachment(f_other)
    att_g = net.attachment(g_other)
    net.remove_edge(eid)

    def _free_end(port, att):
        # detach and return a descriptor for reconnecting
        if att[0] == "e":
            other = net.edge_peer(port)
            net.remove_edge(att[1])
            return ("e", other)
        del net._attach[port]
        return ("o", att[1])

    end_f = _free_end(f_other, att_f)
    end_g = _free_end(g_other, att_g)
    net.remove_node(f)
    net.remove_node(g)

    if mixed:
        if end_f[0] == "e" and end_g[0] == "e":
            net.add_edge(end_f[1], end_g[1])
        elif end_f[0] == "e":
            net.set_open(end_f[1], end_g[1])
        elif end_g[0] == "e":
            net.set_open(end_g[1], end_f[1])
        else:
            w = net.add_node(Copy(group, 2))
            net.set_open((w, 0), end_f[1])
            net.set_open((w, 1), end_g[1])
            touched.add(w)
    else:
        w = net.add_node(GroupPlus(group, 2))
        for i, end in enumerate((end_f, end_g)):
            if end[0] == "e":
                net.add_edge(end[1], (w, i))
            else:
                net.set_open((w, i), end[1])
        touched.add(w)
    net.scalar *= factor
    return RewriteStep(rule_name, (f, g), factor, {"mixed": mixed}), touched


# -- rules: kets against structural tensors -----------------------------------


def _ket_target(net, anchor):
    kind = net.nodes.get(anchor)
    if not isinstance(kind, (BasisKet, UniformKet)):
        return None
    att = net.attachment((anchor, 0))
    if att is None or att[0] != "e":
        return None
    t = net.edge_peer((anchor, 0))[0]
    if t == anchor:
        return None
    return kind, t, att[1]


def _match_unit_elim(net, anchor, **_):
    hit = _ket_target(net, anchor)
    if hit is None:
        return None
    kind, t, eid = hit
    tk = net.nodes[t]
    if isinstance(kind, BasisKet) and kind.element.is_identity() and isinstance(tk, GroupPlus):
        return {"ket": anchor, "t": t, "eid": eid, "pair": False}
    if isinstance(kind, UniformKet) and isinstance(tk, (Copy, SubCopy)):
        return {"ket": anchor, "t": t, "eid": eid, "pair": False}
    if isinstance(tk, (BasisKet, UniformKet)):
        # two vectors contracted against each other reduce to a scalar
        return {"ket": anchor, "t": t, "eid": eid, "pair": True}
    return None


def _apply_unit_elim(net, m, rule_name):
    group = net.group
    ket, t, eid = m["ket"], m["t"], m["eid"]
    tk = net.nodes[t]
    touched = set(net.neighbors(t))
    if m["pair"]:
        kk = net.nodes[ket]
        if isinstance(kk, UniformKet) and isinstance(tk, UniformKet):
            factor = complex(group.order)
        elif isinstance(kk, UniformKet) or isinstance(tk, UniformKet):
            factor = 1.0 + 0j
        else:
            factor = 1.0 + 0j if kk.element == tk.element else 0j
        net.remove_edge(eid)
        net.remove_node(ket)
        net.remove_node(t)
        net.scalar *= factor
        return RewriteStep(rule_name, (ket, t), factor), touched
    if isinstance(tk, Copy):
        factory = lambda n: Copy(group, n)
    elif isinstance(tk, SubCopy):
        factory = lambda n: SubCopy(group, n)
    else:
        factory = lambda n: GroupPlus(group, n)
    net.remove_edge(eid)
    net.remove_node(ket)
    new, factor, more = _shrink_node(net, t, set(), factory)
    touched |= more
    return RewriteStep(rule_name, (ket, t), factor), touched


def _match_copy_point(net, anchor, **_):
    hit = _ket_target(net, anchor)
    if hit is None:
        return None
    kind, t, eid = hit
    tk = net.nodes[t]
    if isinstance(kind, BasisKet) and isinstance(tk, Copy):
        return {"ket": anchor, "t": t, "eid": eid}
    if isinstance(kind, UniformKet) and isinstance(tk, GroupPlus):
        return {"ket": anchor, "t": t, "eid": eid}
    return None


def _apply_copy_point(net, m, rule_name):
    group = net.group
    ket, t, eid = m["ket"], m["t"], m["eid"]
    cap = net.nodes[ket]
    touched = set(net.neighbors(t))
    net.remove_edge(eid)
    net.remove_node(ket)
    for port in _retained_ports(net, t, set()):
        new = net.add_node(cap)
        net.rewire(port, (new, 0))
        touched.add(new)
    net.remove_node(t)
    return RewriteStep(rule_name, (ket, t), 1.0 + 0j), touched


# -- rule: self-loops and identity wires ---------------------------------------


def _match_self_loop(net, anchor, **_):
    kind = net.nodes.get(anchor)
    if isinstance(kind, (Copy, SubCopy)):
        loops = net.edges_between(anchor, anchor)
        if loops:
            return {"t": anchor, "loop": loops[0]}
        if isinstance(kind, Copy) and kind.arity == 2:
            atts = [net.attachment(p) for p in net.ports(anchor)]
            if any(a[0] == "e" for a in atts):
                return {"t": anchor, "loop": None}
    return None


def _apply_self_loop(net, m, rule_name):
    group = net.group
    t, loop = m["t"], m["loop"]
    kind = net.nodes[t]
    touched = set(net.neighbors(t))
    if loop is not None:
        factory = (lambda n: Copy(group, n)) if isinstance(kind, Copy) else (
            lambda n: SubCopy(group, n)
        )
        new, factor, more = _shrink_node(net, t, {loop}, factory)
        touched |= more
        return RewriteStep(rule_name, (t,), factor), touched
    # identity wire: Copy(2) with at least one edge attachment
    p0, p1 = net.ports(t)
    a0 = net.attachment(p0)
    a1 = net.attachment(p1)
    if a1[0] == "e" and a0[0] != "e":
        p0, p1, a0, a1 = p1, p0, a1, a0
    other = net.edge_peer(p0)
    net.remove_edge(a0[1])
    if a1[0] == "e":
        far = net.edge_peer(p1)
        net.remove_edge(a1[1])
        net.remove_node(t)
        net.add_edge(other, far)
    else:
        del net._attach[p1]
        net.remove_node(t)
        net.set_open(other, a1[1])
    touched.add(other[0])
    return RewriteStep(rule_name, (t,), 1.0 + 0j), touched


# -- rules: self-inverse Copy formation and fusion ------------------------------


def _is_inversion_wire(net, nid) -> bool:
    kind = net.nodes.get(nid)
    return isinstance(kind, GroupPlus) and node_arity(kind) == 2


def _wire_links(net, anchor) -> list[tuple[int, int]]:
    """(wire node, far corner) pairs reachable from ``anchor`` through 2-leg GroupPlus."""
    out = []
    for eid in net.node_edges(anchor):
        w = _edge_peer_node(net, anchor, eid)
        if w == anchor or not _is_inversion_wire(net, w):
            continue
        ports = net.ports(w)
        atts = [net.attachment(p) for p in ports]
        if any(a is None or a[0] != "e" for a in atts):
            continue
        peers = [net.edge_peer(p)[0] for p in ports]
        far = [b for b in peers if b != anchor]
        if len(far) != 1:
            # both wire ends on the anchor: the loop variant, reported as far == anchor
            out.append((w, anchor))
            continue
        b = far[0]
        if isinstance(net.nodes[b], (Copy, SubCopy)):
            out.append((w, b))
    return sorted(out)


def _match_subcopy_fusion(net, anchor, **_):
    kind = net.nodes.get(anchor)
    if not isinstance(kind, (Copy, SubCopy)):
        return None
    # direct fusion: shared plain edge, at least one side restricted
    for b in _copy_peers(net, anchor, (Copy, SubCopy)):
        if isinstance(kind, Copy) and isinstance(net.nodes[b], Copy):
            continue  # plain Copy fusion is CopyFusion's job
        shared = net.edges_between(anchor, b)
        if shared:
            return {"variant": "direct", "a": anchor, "b": b, "shared": shared}
    exp2 = net.group.exponent == 2
    for w, b in _wire_links(net, anchor):
        if b == anchor:
            return {"variant": "loop", "a": anchor, "w": w}
        if isinstance(kind, SubCopy) or isinstance(net.nodes[b], SubCopy) or exp2:
            return {"variant": "wire", "a": anchor, "b": b, "w": w}
    return None


def _apply_subcopy_fusion(net, m, rule_name):
    group = net.group
    if m["variant"] == "direct":
        _, factor, touched = _merge_nodes(
            net, m["a"], m["b"], m["shared"], lambda n: SubCopy(group, n)
        )
        return RewriteStep(rule_name, (m["a"], m["b"]), factor), touched
    if m["variant"] == "loop":
        a, w = m["a"], m["w"]
        touched = set(net.neighbors(a))
        dead = set(net.node_edges(w))
        for eid in sorted(dead):
            net.remove_edge(eid)
        net.remove_node(w)
        new, factor, more = _shrink_node(net, a, set(), lambda n: SubCopy(group, n))
        touched |= more
        return RewriteStep(rule_name, (a, w), factor), touched
    a, b, w = m["a"], m["b"], m["w"]
    touched = set(net.neighbors(a)) | set(net.neighbors(b))
    both_plain = isinstance(net.nodes[a], Copy) and isinstance(net.nodes[b], Copy)
    for eid in sorted(net.node_edges(w)):
        net.remove_edge(eid)
    net.remove_node(w)
    retained = _retained_ports(net, a, set()) + _retained_ports(net, b, set())
    kind_factory = (
        (lambda n: Copy(group, n))
        if (both_plain and net.group.exponent == 2)
        else (lambda n: SubCopy(group, n))
    )
    new = net.add_node(kind_factory(len(retained)))
    for i, src in enumerate(retained):
        net.rewire(src, (new, i))
    net.remove_node(a)
    net.remove_node(b)
    factor = _canonicalize(net, new)
    touched.add(new)
    return RewriteStep(rule_name, (a, b, w), factor), touched


def _match_subcopy_form(net, anchor, **_):
    kind = net.nodes.get(anchor)
    if not isinstance(kind, (Copy, SubCopy)):
        return None
    links = _wire_links(net, anchor)
    by_corner: dict[int, list[int]] = {}
    for w, b in links:
        if b != anchor:
            by_corner.setdefault(b, []).append(w)
    corners = sorted(by_corner)
    for i in range(len(corners)):
        for j in range(i + 1, len(corners)):
            b, c = corners[i], corners[j]
            if len(by_corner[b]) != 1 or len(by_corner[c]) != 1:
                continue
            bc_links = [(w, t) for w, t in _wire_links(net, b) if t == c]
            if len(bc_links) != 1:
                continue
            if (
                net.edges_between(anchor, b)
                or net.edges_between(anchor, c)
                or net.edges_between(b, c)
            ):
                continue  # corners must touch only through their wires
            wires = (by_corner[b][0], by_corner[c][0], bc_links[0][0])
            if len(set(wires)) != 3:
                continue
            return {"corners": tuple(sorted((anchor, b, c))), "wires": wires}
    return None


def _apply_subcopy_form(net, m, rule_name):
    group = net.group
    corners = m["corners"]
    wires = m["wires"]
    touched = set()
    for x in corners:
        touched |= set(net.neighbors(x))
    dead = set()
    for w in wires:
        dead |= set(net.node_edges(w))
    for eid in sorted(dead):
        net.remove_edge(eid)
    for w in wires:
        net.remove_node(w)
    retained = []
    for x in corners:
        retained.extend(_retained_ports(net, x, set()))
    new = net.add_node(SubCopy(group, len(retained)))
    for i, src in enumerate(retained):
        net.rewire(src, (new, i))
    for x in corners:
        net.remove_node(x)
    factor = _canonicalize(net, new)
    touched.add(new)
    return RewriteStep(rule_name, corners, factor), touched


# -- dispatch -----------------------------------------------------------------

_MATCHERS = {
    LAYER_FUSE: lambda net, nid, **kw: _match_copy_fusion(net, nid, exactly_one=True, **kw),
    COPY_FUSION: _match_copy_fusion,
    PLUS_FUSION: _match_plus_fusion,
    BIALGEBRA: _match_bialgebra,
    HOPF: _match_hopf,
    PLUS_TO_FOURIER: _match_plus_to_fourier,
    FOURIER_CANCEL: _match_fourier_cancel,
    COPY_POINT: _match_copy_point,
    UNIT_ELIM: _match_unit_elim,
    SELF_LOOP: _match_self_loop,
    SUBCOPY_FORM: _match_subcopy_form,
    SUBCOPY_FUSION: _match_subcopy_fusion,
}

_APPLIERS = {
    LAYER_FUSE: _apply_copy_fusion,
    COPY_FUSION: _apply_copy_fusion,
    PLUS_FUSION: _apply_plus_fusion,
    BIALGEBRA: _apply_bialgebra,
    HOPF: _apply_hopf,
    PLUS_TO_FOURIER: _apply_plus_to_fourier,
    FOURIER_CANCEL: _apply_fourier_cancel,
    COPY_POINT: _apply_copy_point,
    UNIT_ELIM: _apply_unit_elim,
    SELF_LOOP: _apply_self_loop,
    SUBCOPY_FORM: _apply_subcopy_form,
    SUBCOPY_FUSION: _apply_subcopy_fusion,
}


def _attempt(net: TensorNetwork, rule: str, anchor: int, params: dict):
    if rule not in _MATCHERS:
        raise ValidationError(f"unknown rewrite rule {rule!r}")
    if anchor not in net.nodes:
        return None
    m = _MATCHERS[rule](net, anchor, **params)
    if m is None:
        return None
    return _APPLIERS[rule](net, m, rule)


def apply_rule_at(net: TensorNetwork, rule: str, anchor: int, **params) -> Optional[TensorNetwork]:
    """Apply one rule anchored at a node; returns the new network or None."""
    work = net.copy()
    res = _attempt(work, rule, anchor, params)
    if res is None:
        return None
    return work


# -- the phased engine ----------------------------------------------------------

_PHASE_FLATTEN = (COPY_FUSION, SELF_LOOP)
_PHASE_ALGEBRA = (
    BIALGEBRA,
    PLUS_FUSION,
    HOPF,
    COPY_FUSION,
    UNIT_ELIM,
    COPY_POINT,
    SELF_LOOP,
)
_PHASE_FOURIER = (
    FOURIER_CANCEL,
    COPY_FUSION,
    SUBCOPY_FUSION,
    SUBCOPY_FORM,
    UNIT_ELIM,
    COPY_POINT,
    SELF_LOOP,
    PLUS_TO_FOURIER,
)


def _plus_coloring(net: TensorNetwork) -> dict[int, bool]:
    """2-color the big constraint tensors over their direct adjacency.

    Bipartite components alternate plain/conjugated characters so every
    direct edge cancels; components with an odd cycle fall back to plain
    characters everywhere, leaving inversion wires for the self-inverse
    machinery.
    """
    members = sorted(
        nid
        for nid, k in net.nodes.items()
        if isinstance(k, GroupPlus) and node_arity(k) >= 3
    )
    member_set = set(members)
    adj: dict[int, set[int]] = {nid: set() for nid in members}
    for nid in members:
        for eid in net.node_edges(nid):
            b = _edge_peer_node(net, nid, eid)
            if b != nid and b in member_set:
                adj[nid].add(b)
    coloring: dict[int, bool] = {}
    for start in members:
        if start in coloring:
            continue
        component = [start]
        local = {start: False}
        queue = [start]
        ok = True
        while queue:
            v = queue.pop(0)
            for b in sorted(adj[v]):
                if b not in local:
                    local[b] = not local[v]
                    component.append(b)
                    queue.append(b)
                elif local[b] == local[v]:
                    ok = False
        for v in component:
            coloring[v] = local[v] if ok else False
    return coloring


def _run_phase(net: TensorNetwork, rules: tuple, trace: RewriteTrace, coloring) -> int:
    heap = sorted(net.nodes)
    heapq.heapify(heap)
    fired = 0
    guard = 200 * (len(net.nodes) + len(net.edges) + 16)
    while heap:
        nid = heapq.heappop(heap)
        if nid not in net.nodes:
            continue
        res = None
        for rule in rules:
            params = {}
            if rule == PLUS_TO_FOURIER:
                if coloring is None or nid not in coloring:
                    continue
                params = {"conj": coloring[nid], "require_partner": True}
            res = _attempt(net, rule, nid, params)
            if res is not None:
                break
        if res is None:
            continue
        step, touched = res
        trace.steps.append(step)
        fired += 1
        if fired > guard:
            raise AssertionError("rewrite engine failed to terminate (phase guard hit)")
        for x in touched:
            if x in net.nodes:
                heapq.heappush(heap, x)
        if nid in net.nodes:
            heapq.heappush(heap, nid)
    return fired


def simplify(net: TensorNetwork) -> tuple[TensorNetwork, RewriteTrace]:
    """Run the phased rewrite strategy to a fixpoint.

    Phases: (1) fuse Copy junctions, (2) bialgebra flattening plus the
    exponent-2 shortcuts, (3) character conversion, cancellation and the
    self-inverse Copy machinery, cycling until no rule fires anywhere.
    """
    work = net.copy()
    work.labels = {}
    trace = RewriteTrace()
    for _ in range(200):
        fired = _run_phase(work, _PHASE_FLATTEN, trace, None)
        fired += _run_phase(work, _PHASE_ALGEBRA, trace, None)
        coloring = _plus_coloring(work)
        fired += _run_phase(work, _PHASE_FOURIER, trace, coloring)
        if fired == 0:
            break
    else:
        raise AssertionError("rewrite engine failed to reach a fixpoint")
    return work, trace


def contract_exactly(
    net: TensorNetwork,
    cost_budget: float = 1e8,
    max_output_entries: int = 2**24,
) -> DenseTensor:
    """Simplify, then densely evaluate the residual network.

    The output runs over open legs in (site, layer) sorted order, with the
    accumulated scalar folded in; identical inputs give identical bytes.
    """
    d = net.group.order
    n_legs = len(net.open_legs())
    if d**n_legs > max_output_entries:
        raise BudgetExceededError(
            f"output over {n_legs} legs of dimension {d} exceeds the size guard"
        )
    residual, _ = simplify(net)
    return dense_evaluate(residual, cost_budget=cost_budget, max_output_entries=max_output_entries)


def replay(net: TensorNetwork, trace: RewriteTrace) -> TensorNetwork:
    """Re-apply a recorded trace step by step; used to audit determinism."""
    work = net.copy()
    work.labels = {}
    for step in trace.steps:
        res = _attempt(work, step.rule, step.nodes[0], dict(step.params))
        if res is None:
            raise ValidationError(f"trace step {step} does not re-apply")
        applied, _ = res
        if applied.nodes != step.nodes or abs(applied.scalar - step.scalar) > 1e-12:
            raise ValidationError(f"trace step {step} replayed as {applied}")
    return work
