"""Tensor-network data model and lattice state builders.

A network is a typed multigraph: nodes carry a :mod:`gaugetn.tensors` kind
and an ordered list of ports, edges join two ports, and any port not on an
edge carries an open-leg label (a physical site id plus a ket/bra layer
tag).  A running complex scalar multiplies the whole network.

Builders produce the closed-string superposition state of a gauge group on
a periodic lattice: one vertex-constraint tensor per gauge vertex and one
three-leg Copy per gauge edge, whose third leg is the physical (ket) leg.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import UnsupportedBoundaryError, ValidationError
from .groups import GroupElement, GroupSpec, make_group, parse_group_literal
from .tensors import (
    BasisKet,
    Copy,
    Dense,
    DenseTensor,
    Fourier,
    FourierConj,
    GroupPlus,
    Impurity,
    NodeKind,
    SubCopy,
    UniformKet,
    conjugate_kind,
    node_arity,
)

__all__ = [
    "Leg",
    "Port",
    "TensorNetwork",
    "LatticeSpec",
    "GaugeGraph",
    "ImpuritySpec",
    "lattice_graph",
    "build_lattice_state",
    "build_ghz",
    "insert_impurity",
    "build_sandwich",
    "hexagonal_string_path",
]

Port = tuple[int, int]

KET = "ket"
BRA = "bra"


@dataclass(frozen=True)
class Leg:
    """Open-leg label: physical site id plus layer tag."""

    site: str
    layer: str = KET

    def __post_init__(self) -> None:
        if self.layer not in (KET, BRA):
            raise ValidationError(f"layer must be 'ket' or 'bra', got {self.layer!r}")

    def sort_key(self) -> tuple[str, int]:
        return (self.site, 0 if self.layer == KET else 1)


class TensorNetwork:
    """Mutable multigraph of symbolic tensors with ordered ports.

    Builders and rewrite passes treat networks as values: public operations
    return new instances (via :meth:`copy`) and never share mutable state,
    so instances may be handed between threads freely once constructed.
    """

    def __init__(self, group: GroupSpec):
        self.group = group
        self.nodes: dict[int, NodeKind] = {}
        self.edges: dict[int, tuple[Port, Port]] = {}
        self.scalar: complex = 1.0 + 0j
        self.labels: dict[str, int] = {}  # builder metadata: vertex id -> node id
        self._attach: dict[Port, tuple] = {}  # port -> ("e", eid) | ("o", Leg)
        self._next_node = 0
        self._next_edge = 0

    # -- construction ------------------------------------------------------

    def add_node(self, kind: NodeKind) -> int:
        if kind.group.factor_orders != self.group.factor_orders:
            raise ValidationError("node group does not match network group")
        nid = self._next_node
        self._next_node += 1
        self.nodes[nid] = kind
        return nid

    def arity(self, nid: int) -> int:
        return node_arity(self.nodes[nid])

    def ports(self, nid: int) -> list[Port]:
        return [(nid, i) for i in range(self.arity(nid))]

    def add_edge(self, p: Port, q: Port) -> int:
        for r in (p, q):
            self._check_port(r)
            if r in self._attach:
                raise ValidationError(f"port {r} already attached")
        if p == q:
            raise ValidationError("an edge needs two distinct ports")
        eid = self._next_edge
        self._next_edge += 1
        self.edges[eid] = (p, q)
        self._attach[p] = ("e", eid)
        self._attach[q] = ("e", eid)
        return eid

    def set_open(self, p: Port, leg: Leg) -> None:
        self._check_port(p)
        if p in self._attach:
            raise ValidationError(f"port {p} already attached")
        self._attach[p] = ("o", leg)

    def _check_port(self, p: Port) -> None:
        nid, i = p
        if nid not in self.nodes:
            raise ValidationError(f"unknown node {nid}")
        if not 0 <= i < self.arity(nid):
            raise ValidationError(f"port index {i} out of range for node {nid}")

    # -- queries -----------------------------------------------------------

    def attachment(self, p: Port) -> Optional[tuple]:
        return self._attach.get(p)

    def edge_peer(self, p: Port) -> Port:
        kind, eid = self._attach[p]
        if kind != "e":
            raise ValidationError(f"port {p} is not on an edge")
        a, b = self.edges[eid]
        return b if a == p else a

    def open_legs(self) -> dict[Port, Leg]:
        return {p: a[1] for p, a in self._attach.items() if a[0] == "o"}

    def sites(self) -> list[str]:
        return sorted({leg.site for leg in self.open_legs().values()})

    def edges_between(self, a: int, b: int) -> list[int]:
        out = set()
        for eid in self.node_edges(a):
            p, q = self.edges[eid]
            if {p[0], q[0]} == ({a} if a == b else {a, b}):
                out.add(eid)
        return sorted(out)

    def node_edges(self, nid: int) -> list[int]:
        out = []
        for i in range(self.arity(nid)):
            att = self._attach.get((nid, i))
            if att is not None and att[0] == "e":
                out.append(att[1])
        return out

    def neighbors(self, nid: int) -> list[int]:
        seen = set()
        for eid in self.node_edges(nid):
            p, q = self.edges[eid]
            for r in (p, q):
                if r[0] != nid:
                    seen.add(r[0])
        return sorted(seen)

    # -- mutation helpers (used by the rewrite engine) ----------------------

    def remove_edge(self, eid: int) -> None:
        p, q = self.edges.pop(eid)
        del self._attach[p]
        del self._attach[q]

    def remove_node(self, nid: int) -> None:
        for p in self.ports(nid):
            if p in self._attach:
                raise ValidationError(f"cannot remove node {nid}: port {p} still attached")
        del self.nodes[nid]

    def rewire(self, old: Port, new: Port) -> None:
        """Move whatever was attached at ``old`` onto the unattached port ``new``."""
        att = self._attach.pop(old)
        if new in self._attach:
            raise ValidationError(f"target port {new} already attached")
        if att[0] == "e":
            eid = att[1]
            a, b = self.edges[eid]
            self.edges[eid] = (new, b) if a == old else (a, new)
        self._attach[new] = att

    def replace_node(self, nid: int, kind: NodeKind, port_sources: Sequence[Optional[Port]]) -> None:
        """Swap a node's kind, wiring each new port from an old port.

        ``port_sources[i]`` names the old port whose attachment moves to new
        port ``i``; ``None`` leaves the new port unattached (the caller must
        wire it).  Old ports not listed must already be detached.
        """
        if node_arity(kind) != len(port_sources):
            raise ValidationError("port_sources length must equal the new arity")
        moves = []
        for i, src in enumerate(port_sources):
            if src is None:
                continue
            if src not in self._attach:
                raise ValidationError(f"source port {src} is not attached")
            moves.append((src, i))
        saved = {src: self._attach.pop(src) for src, _ in moves}
        leftovers = [p for p in self.ports(nid) if p in self._attach]
        if leftovers:
            for src in saved:  # restore before failing
                self._attach[src] = saved[src]
            raise ValidationError(f"node {nid} has unaccounted attached ports {leftovers}")
        self.nodes[nid] = kind
        for src, i in moves:
            att = saved[src]
            new = (nid, i)
            if att[0] == "e":
                eid = att[1]
                a, b = self.edges[eid]
                self.edges[eid] = (new, b) if a == src else (a, new)
            self._attach[new] = att

    # -- value semantics -----------------------------------------------------

    def copy(self) -> "TensorNetwork":
        out = TensorNetwork(self.group)
        out.nodes = dict(self.nodes)
        out.edges = dict(self.edges)
        out.scalar = self.scalar
        out.labels = dict(self.labels)
        out._attach = dict(self._attach)
        out._next_node = self._next_node
        out._next_edge = self._next_edge
        return out

    def validate(self) -> None:
        """Check that every port is used by exactly one edge or open leg."""
        seen = set()
        for eid, (p, q) in self.edges.items():
            for r in (p, q):
                self._check_port(r)
                if self._attach.get(r) != ("e", eid):
                    raise ValidationError(f"edge {eid} endpoint {r} not indexed")
                seen.add(r)
        for p, att in self._attach.items():
            self._check_port(p)
            if att[0] == "o":
                seen.add(p)
        for nid in self.nodes:
            for p in self.ports(nid):
                if p not in seen:
                    raise ValidationError(f"port {p} is neither on an edge nor open")
        if len(seen) != sum(self.arity(n) for n in self.nodes):
            raise ValidationError("port bookkeeping out of sync")

    # -- serialization -------------------------------------------------------

    def to_json_dict(self) -> dict:
        nodes = []
        for nid in sorted(self.nodes):
            kind = self.nodes[nid]
            name, params = _kind_to_json(kind)
            nodes.append({"id": nid, "kind": name, "params": params, "arity": node_arity(kind)})
        edges = [
            [p[0], p[1], q[0], q[1]]
            for _, (p, q) in sorted(self.edges.items())
        ]
        open_legs = [
            {"node": p[0], "port": p[1], "site": leg.site, "layer": leg.layer}
            for p, leg in sorted(self.open_legs().items())
        ]
        return {
            "group": self.group.literal(),
            "nodes": nodes,
            "edges": edges,
            "open": open_legs,
            "scalar": [self.scalar.real, self.scalar.imag],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TensorNetwork":
        group = parse_group_literal(data["group"])
        net = cls(group)
        remap: dict[int, int] = {}
        for entry in data["nodes"]:
            kind = _kind_from_json(group, entry["kind"], entry.get("params") or {})
            remap[entry["id"]] = net.add_node(kind)
        for na, pa, nb, pb in data["edges"]:
            net.add_edge((remap[na], pa), (remap[nb], pb))
        for entry in data["open"]:
            net.set_open((remap[entry["node"]], entry["port"]), Leg(entry["site"], entry["layer"]))
        re_, im_ = data.get("scalar", [1.0, 0.0])
        net.scalar = complex(re_, im_)
        net.validate()
        return net

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def _kind_to_json(kind: NodeKind) -> tuple[str, dict]:
    if isinstance(kind, Copy):
        return "copy", {"arity": kind.arity}
    if isinstance(kind, GroupPlus):
        return "plus", {"arity": kind.arity}
    if isinstance(kind, SubCopy):
        return "subcopy", {"arity": kind.arity}
    if isinstance(kind, Fourier):
        return "fourier", {}
    if isinstance(kind, FourierConj):
        return "fourier_conj", {}
    if isinstance(kind, Impurity):
        return "impurity", {"theta": kind.theta}
    if isinstance(kind, BasisKet):
        return "basis_ket", {"element": list(kind.element.digits)}
    if isinstance(kind, UniformKet):
        return "uniform_ket", {}
    if isinstance(kind, Dense):
        return "dense", kind.tensor.to_json_dict()
    raise ValidationError(f"unknown node kind {kind!r}")


def _kind_from_json(group: GroupSpec, name: str, params: dict) -> NodeKind:
    if name == "copy":
        return Copy(group, int(params["arity"]))
    if name == "plus":
        return GroupPlus(group, int(params["arity"]))
    if name == "subcopy":
        return SubCopy(group, int(params["arity"]))
    if name == "fourier":
        return Fourier(group)
    if name == "fourier_conj":
        return FourierConj(group)
    if name == "impurity":
        return Impurity(group, float(params["theta"]))
    if name == "basis_ket":
        return BasisKet(group, GroupElement(group, tuple(int(d) for d in params["element"])))
    if name == "uniform_ket":
        return UniformKet(group)
    if name == "dense":
        return Dense(group, DenseTensor.from_json_dict(params))
    raise ValidationError(f"unknown node kind name {name!r}")


# -- gauge lattices ---------------------------------------------------------


@dataclass(frozen=True)
class GaugeGraph:
    """A gauge lattice: spins live on the edges, constraints on the vertices."""

    vertices: tuple[str, ...]
    edges: tuple[tuple[str, str, str], ...]  # (site id, vertex u, vertex w)
    coloring: Optional[dict[str, int]]  # 2-coloring of vertices, None if non-bipartite
    plaquettes: tuple[tuple[str, ...], ...] = ()

    def vertex_sites(self, vertex: str) -> list[str]:
        return sorted(s for s, u, w in self.edges if u == vertex or w == vertex)

    def degree(self, vertex: str) -> int:
        return sum((u == vertex) + (w == vertex) for _, u, w in self.edges)

    def site_endpoints(self, site: str) -> tuple[str, str]:
        for s, u, w in self.edges:
            if s == site:
                return (u, w)
        raise ValidationError(f"unknown site {site!r}")


@dataclass(frozen=True)
class LatticeSpec:
    """Named periodic lattice (or an explicit custom gauge graph)."""

    kind: str
    cells: tuple[int, int] = (1, 1)
    periodic: bool = True
    custom_vertices: tuple[str, ...] = ()
    custom_edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("hexagonal", "square", "kagome", "triangular", "custom"):
            raise ValidationError(f"unknown lattice kind {self.kind!r}")
        if self.kind != "custom":
            l1, l2 = self.cells
            if l1 < 1 or l2 < 1:
                raise ValidationError("cell counts must be >= 1")
            if not self.periodic:
                raise UnsupportedBoundaryError(
                    f"{self.kind} lattices are only built with periodic boundaries"
                )


def _two_coloring(vertices: Sequence[str], edges: Sequence[tuple[str, str, str]]):
    """BFS 2-coloring; returns None when an odd cycle exists."""
    adj: dict[str, set[str]] = {v: set() for v in vertices}
    for _, u, w in edges:
        if u == w:
            return None  # self-loop is an odd cycle
        adj[u].add(w)
        adj[w].add(u)
    color: dict[str, int] = {}
    for start in sorted(vertices):
        if start in color:
            continue
        color[start] = 0
        queue = [start]
        while queue:
            v = queue.pop(0)
            for n in sorted(adj[v]):
                if n not in color:
                    color[n] = 1 - color[v]
                    queue.append(n)
                elif color[n] == color[v]:
                    return None
    return color


def _hexagonal_graph(l1: int, l2: int) -> GaugeGraph:
    verts = []
    for x in range(l1):
        for y in range(l2):
            verts.append(_hex_vertex(x, y, 0))
            verts.append(_hex_vertex(x, y, 1))
    edges = []
    for x in range(l1):
        for y in range(l2):
            u = _hex_vertex(x, y, 0)
            edges.append((_hex_site(x, y, 0), u, _hex_vertex(x, y, 1)))
            edges.append((_hex_site(x, y, 1), u, _hex_vertex((x - 1) % l1, y, 1)))
            edges.append((_hex_site(x, y, 2), u, _hex_vertex(x, (y - 1) % l2, 1)))
    plaquettes = []
    for x in range(l1):
        for y in range(l2):
            xp, ym = (x + 1) % l1, (y - 1) % l2
            plaquettes.append(
                (
                    _hex_site(x, y, 0),
                    _hex_site(xp, y, 1),
                    _hex_site(xp, y, 2),
                    _hex_site(xp, ym, 0),
                    _hex_site(xp, ym, 1),
                    _hex_site(x, y, 2),
                )
            )
    coloring = {v: (0 if v.endswith(".u") else 1) for v in verts}
    return GaugeGraph(tuple(sorted(verts)), tuple(sorted(edges)), coloring, tuple(plaquettes))


def _hex_vertex(x: int, y: int, s: int) -> str:
    return f"v{x:02d}.{y:02d}.{'u' if s == 0 else 'w'}"


def _hex_site(x: int, y: int, t: int) -> str:
    return f"s{x:02d}.{y:02d}.{t}"


def _square_graph(l1: int, l2: int) -> GaugeGraph:
    def vert(x, y):
        return f"v{x % l1:02d}.{y % l2:02d}"

    verts = [vert(x, y) for x in range(l1) for y in range(l2)]
    edges = []
    for x in range(l1):
        for y in range(l2):
            edges.append((f"s{x:02d}.{y:02d}.a", vert(x, y), vert(x + 1, y)))
            edges.append((f"s{x:02d}.{y:02d}.b", vert(x, y), vert(x, y + 1)))
    coloring = _two_coloring(verts, edges)
    return GaugeGraph(tuple(sorted(verts)), tuple(sorted(edges)), coloring)


def _kagome_graph(l1: int, l2: int) -> GaugeGraph:
    # Medial lattice of the hexagonal one: kagome vertices are hexagonal
    # edges, kagome edges are corners (pairs of hexagonal edges at a
    # hexagonal vertex), giving two corner-sharing triangles per cell.
    def kvert(x, y, t):
        return f"v{x % l1:02d}.{y % l2:02d}.{t}"

    verts = [kvert(x, y, t) for x in range(l1) for y in range(l2) for t in range(3)]
    edges = []
    for x in range(l1):
        for y in range(l2):
            # corners at the "u" hexagonal vertex of cell (x, y)
            up = [kvert(x, y, 0), kvert(x, y, 1), kvert(x, y, 2)]
            # corners at the "w" hexagonal vertex: incident hexagonal edges are
            # type 0 of (x, y), type 1 of (x+1, y), type 2 of (x, y+1)
            dn = [kvert(x, y, 0), kvert(x + 1, y, 1), kvert(x, y + 1, 2)]
            for tag, tri in (("u", up), ("w", dn)):
                pairs = [(0, 1), (0, 2), (1, 2)]
                for pi, (a, b) in enumerate(pairs):
                    edges.append((f"s{x:02d}.{y:02d}.{tag}{pi}", tri[a], tri[b]))
    coloring = _two_coloring(verts, edges)
    return GaugeGraph(tuple(sorted(verts)), tuple(sorted(edges)), coloring)


def _triangular_graph(l1: int, l2: int) -> GaugeGraph:
    def vert(x, y):
        return f"v{x % l1:02d}.{y % l2:02d}"

    verts = [vert(x, y) for x in range(l1) for y in range(l2)]
    edges = []
    for x in range(l1):
        for y in range(l2):
            edges.append((f"s{x:02d}.{y:02d}.a", vert(x, y), vert(x + 1, y)))
            edges.append((f"s{x:02d}.{y:02d}.b", vert(x, y), vert(x, y + 1)))
            edges.append((f"s{x:02d}.{y:02d}.c", vert(x, y), vert(x + 1, y + 1)))
    coloring = _two_coloring(verts, edges)
    return GaugeGraph(tuple(sorted(verts)), tuple(sorted(edges)), coloring)


def lattice_graph(spec: LatticeSpec) -> GaugeGraph:
    if spec.kind == "hexagonal":
        return _hexagonal_graph(*spec.cells)
    if spec.kind == "square":
        return _square_graph(*spec.cells)
    if spec.kind == "kagome":
        return _kagome_graph(*spec.cells)
    if spec.kind == "triangular":
        return _triangular_graph(*spec.cells)
    # custom
    if not spec.custom_vertices or not spec.custom_edges:
        raise ValidationError("custom lattices need explicit vertices and edges")
    verts = tuple(sorted(spec.custom_vertices))
    edges = []
    for i, (u, w) in enumerate(spec.custom_edges):
        if u not in verts or w not in verts:
            raise ValidationError(f"edge ({u}, {w}) references unknown vertices")
        edges.append((f"s{i:03d}", u, w))
    _require_connected(verts, edges)
    coloring = _two_coloring(verts, edges)
    return GaugeGraph(verts, tuple(sorted(edges)), coloring)


def _require_connected(verts: Sequence[str], edges: Sequence[tuple[str, str, str]]) -> None:
    if not verts:
        raise ValidationError("custom lattice has no vertices")
    adj: dict[str, set[str]] = {v: set() for v in verts}
    for _, u, w in edges:
        adj[u].add(w)
        adj[w].add(u)
    seen = {verts[0]}
    stack = [verts[0]]
    while stack:
        v = stack.pop()
        for n in adj[v]:
            if n not in seen:
                seen.add(n)
                stack.append(n)
    if len(seen) != len(verts):
        raise ValidationError("custom gauge lattice must be connected")


# -- state builders ----------------------------------------------------------


def build_lattice_state(lattice: LatticeSpec, group: GroupSpec) -> TensorNetwork:
    """Closed-string superposition state on a gauge lattice.

    One GroupPlus(deg v) node per gauge vertex, one Copy(3) node per gauge
    edge with two ports wired to the endpoint vertex tensors and one open
    ket leg carrying the edge's site id.
    """
    graph = lattice_graph(lattice)
    net = TensorNetwork(group)
    vertex_node: dict[str, int] = {}
    port_cursor: dict[str, int] = {}
    for v in graph.vertices:
        nid = net.add_node(GroupPlus(group, graph.degree(v)))
        vertex_node[v] = nid
        port_cursor[v] = 0
        net.labels[f"vertex:{v}"] = nid

    def next_port(v: str) -> Port:
        p = (vertex_node[v], port_cursor[v])
        port_cursor[v] += 1
        return p

    for site, u, w in graph.edges:
        cid = net.add_node(Copy(group, 3))
        net.labels[f"site:{site}"] = cid
        net.add_edge((cid, 0), next_port(u))
        net.add_edge((cid, 1), next_port(w))
        net.set_open((cid, 2), Leg(site, KET))
    net.validate()
    return net


def build_ghz(n: int, group: GroupSpec) -> TensorNetwork:
    """The n-party generalized GHZ state: a single Copy node, all legs physical."""
    if n < 2:
        raise ValidationError("GHZ needs at least 2 parties")
    net = TensorNetwork(group)
    nid = net.add_node(Copy(group, n))
    for i in range(n):
        net.set_open((nid, i), Leg(str(i), KET))
    net.validate()
    return net


@dataclass(frozen=True)
class ImpuritySpec:
    """Replace the constraint tensor at ``vertex`` with an angle-theta impurity."""

    vertex: str
    theta: float


def insert_impurity(net: TensorNetwork, spec: ImpuritySpec) -> TensorNetwork:
    """Return a copy of ``net`` with one vertex tensor swapped for an impurity."""
    if net.group.order != 2:
        raise ValidationError("impurities are defined for groups of order 2 only")
    key = f"vertex:{spec.vertex}"
    if key not in net.labels:
        raise ValidationError(f"unknown gauge vertex {spec.vertex!r}")
    nid = net.labels[key]
    kind = net.nodes[nid]
    if not isinstance(kind, (GroupPlus, Impurity)):
        raise ValidationError(f"vertex {spec.vertex!r} does not hold a constraint tensor")
    if node_arity(kind) != 3:
        raise ValidationError("impurity insertion currently requires a degree-3 vertex")
    out = net.copy()
    out.nodes[nid] = Impurity(net.group, spec.theta)
    return out


def build_sandwich(
    ket: TensorNetwork,
    keep_sites: Iterable[str],
    bra: Optional[TensorNetwork] = None,
) -> TensorNetwork:
    """Join a state with the conjugate of ``bra`` (default: itself).

    Every node of the bra layer is entrywise conjugated.  Sites not listed
    in ``keep_sites`` have their ket and bra legs joined by an edge; kept
    sites keep two open legs labeled (site, ket) and (site, bra).
    """
    bra_src = ket if bra is None else bra
    keep = set(keep_sites)
    ket_legs = _site_ports(ket)
    bra_legs = _site_ports(bra_src)
    if set(ket_legs) != set(bra_legs):
        raise ValidationError("bra and ket layers must share the same site set")
    unknown = keep - set(ket_legs)
    if unknown:
        raise ValidationError(f"unknown site ids in keep set: {sorted(unknown)}")

    out = TensorNetwork(ket.group)
    ket_map: dict[int, int] = {}
    for nid in sorted(ket.nodes):
        ket_map[nid] = out.add_node(ket.nodes[nid])
    bra_map: dict[int, int] = {}
    for nid in sorted(bra_src.nodes):
        bra_map[nid] = out.add_node(conjugate_kind(bra_src.nodes[nid]))

    for _, (p, q) in sorted(ket.edges.items()):
        out.add_edge((ket_map[p[0]], p[1]), (ket_map[q[0]], q[1]))
    for _, (p, q) in sorted(bra_src.edges.items()):
        out.add_edge((bra_map[p[0]], p[1]), (bra_map[q[0]], q[1]))

    for site in sorted(ket_legs):
        kp = ket_legs[site]
        bp = bra_legs[site]
        kport = (ket_map[kp[0]], kp[1])
        bport = (bra_map[bp[0]], bp[1])
        if site in keep:
            out.set_open(kport, Leg(site, KET))
            out.set_open(bport, Leg(site, BRA))
        else:
            out.add_edge(kport, bport)
    out.scalar = ket.scalar * np.conj(bra_src.scalar)
    out.validate()
    return out


def _site_ports(net: TensorNetwork) -> dict[str, Port]:
    ports: dict[str, Port] = {}
    for p, leg in net.open_legs().items():
        if leg.layer != KET:
            raise ValidationError("sandwich input must be a pure ket-layer network")
        if leg.site in ports:
            raise ValidationError(f"duplicate site id {leg.site!r}")
        ports[leg.site] = p
    return ports


def dense_evaluate(
    net: TensorNetwork,
    cost_budget: float = 1e8,
    max_output_entries: int = 2**24,
) -> DenseTensor:
    """Materialize every node and contract the network densely.

    The output tensor runs over the open legs in (site, layer) sorted order
    and includes the accumulated scalar.  Cost is planned from dimensions
    alone and checked against the budget before any numeric work starts.
    """
    from ._contract import contract_labeled
    from .tensors import materialize

    arrays = []
    labels = []
    for nid in sorted(net.nodes):
        arrays.append(materialize(net.nodes[nid]).array)
        labs = []
        for p in net.ports(nid):
            att = net.attachment(p)
            if att is None:
                raise ValidationError(f"port {p} is unattached")
            labs.append(("e", att[1]) if att[0] == "e" else att[1])
        labels.append(labs)
    result = contract_labeled(
        arrays, labels, cost_budget=cost_budget, max_output_entries=max_output_entries
    )
    order = sorted(range(len(result.labels)), key=lambda k: result.labels[k].sort_key())
    arr = np.transpose(result.array, order) if result.labels else result.array
    return DenseTensor(arr * net.scalar)


def hexagonal_string_path(spec: LatticeSpec, n: int) -> tuple[list[str], list[str]]:
    """A straight path of ``n`` sites on a hexagonal lattice.

    Returns (vertices, sites): n+1 distinct gauge vertices along the walk and
    the n sites between consecutive ones.
    """
    if spec.kind != "hexagonal":
        raise ValidationError("string paths are defined on the hexagonal lattice")
    l1, l2 = spec.cells
    need = (n + 2) // 2
    if need > l1:
        raise ValidationError(f"a {n}-site string needs at least {need} cells along axis 1")
    vertices = []
    sites = []
    for i in range(n + 1):
        x = i // 2
        vertices.append(_hex_vertex(x, 0, i % 2))
    for i in range(n):
        if i % 2 == 0:
            sites.append(_hex_site(i // 2, 0, 0))  # u(x) - w(x)
        else:
            sites.append(_hex_site(i // 2 + 1, 0, 1))  # u(x+1) - w(x)
    return vertices, sites
