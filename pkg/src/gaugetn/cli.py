"""Command-line interface: build networks, compute observables, verify.

Outputs are deterministic: JSON is emitted with sorted keys and CSV rows in
a fixed order, so identical configurations produce byte-identical files.
Exit codes: 0 success, 2 validation error, 3 verification mismatch,
4 budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

import numpy as np

from .errors import BudgetExceededError, ValidationError
from .groups import parse_group_literal
from .network import (
    ImpuritySpec,
    LatticeSpec,
    TensorNetwork,
    build_lattice_state,
    build_sandwich,
    insert_impurity,
    lattice_graph,
)
from .observables import (
    Region,
    canonical_vertex_regions,
    connected_correlator,
    impurity_stop_curve,
    reduced_density_matrix,
    string_entropy_scan,
    topological_entropy_report,
    von_neumann_entropy,
)
from .oracle import compare_to_pipeline
from .rewrite import contract_exactly, simplify

_LATTICE_ALIASES = {
    "hex": "hexagonal",
    "hexagonal": "hexagonal",
    "square": "square",
    "kagome": "kagome",
    "tri": "triangular",
    "triangular": "triangular",
}

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_MISMATCH = 3
EXIT_BUDGET = 4


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_cells(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValidationError(f"cells must look like '3x3', got {text!r}")
    return (int(parts[0]), int(parts[1]))


def _lattice_spec(args) -> LatticeSpec:
    kind = _LATTICE_ALIASES.get(args.lattice.lower())
    if kind is None:
        raise ValidationError(f"unknown lattice {args.lattice!r}")
    return LatticeSpec(kind, _parse_cells(args.cells))


def _build_state(args) -> TensorNetwork:
    spec = _lattice_spec(args)
    group = parse_group_literal(args.group)
    state = build_lattice_state(spec, group)
    for item in args.impurity or []:
        vertex, _, theta = item.partition(":")
        if not theta:
            raise ValidationError(f"impurity must look like VERTEX:THETA, got {item!r}")
        state = insert_impurity(state, ImpuritySpec(vertex, float(theta)))
    return state


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _entropy_out(value: float, bits: bool) -> float:
    return value / math.log(2.0) if bits else value


def _maybe_trace(args, sandwich) -> None:
    if getattr(args, "trace", None):
        _, trace = simplify(sandwich)
        _write_text(args.trace, trace.to_jsonl())


# -- subcommands -----------------------------------------------------------


def _cmd_build(args) -> int:
    state = _build_state(args)
    _write_text(args.output, json.dumps(state.to_json_dict(), sort_keys=True))
    return EXIT_OK


def _cmd_rho(args) -> int:
    state = _build_state(args)
    sites = [s for s in args.sites.split(",") if s]
    sandwich = build_sandwich(state, sites)
    _maybe_trace(args, sandwich)
    rho = reduced_density_matrix(state, Region.of("R", sites), cost_budget=args.budget)
    entropy = von_neumann_entropy(rho)
    payload = {
        "sites": sorted(sites),
        "rho": rho.to_json_dict(),
        "entropy": _entropy_out(entropy, args.bits),
        "units": "bits" if args.bits else "nats",
    }
    _write_text(args.output, json.dumps(payload, sort_keys=True))
    return EXIT_OK


def _parse_regions(args, spec: LatticeSpec) -> tuple[Region, Region, Region]:
    if args.vertex_regions == "auto":
        return canonical_vertex_regions(spec)
    named = {}
    for chunk in args.vertex_regions.split(";"):
        label, _, body = chunk.partition("=")
        if not body:
            raise ValidationError(
                "regions must look like 'A=s1;B=s2;C=s3,s4' or be 'auto'"
            )
        named[label.strip()] = [s for s in body.split(",") if s]
    missing = {"A", "B", "C"} - set(named)
    if missing:
        raise ValidationError(f"regions missing labels {sorted(missing)}")
    return tuple(Region.of(k, named[k]) for k in ("A", "B", "C"))


def _cmd_stop(args) -> int:
    spec = _lattice_spec(args)
    state = _build_state(args)
    a, b, c = _parse_regions(args, spec)
    report = topological_entropy_report(state, a, b, c, cost_budget=args.budget)
    terms = {k: _entropy_out(v, args.bits) for k, v in report.inputs["terms"].items()}
    payload = {
        "regions": report.inputs["regions"],
        "terms": terms,
        "S_top": _entropy_out(float(report.value), args.bits),
        "units": "bits" if args.bits else "nats",
        "method": report.method,
    }
    _write_text(args.output, json.dumps(payload, sort_keys=True))
    return EXIT_OK


_OPERATORS = {
    "sz": lambda d: np.diag([1.0 if k == 0 else -1.0 for k in range(d)]),
    "occupation": lambda d: np.diag(np.arange(d, dtype=float)),
}


def _cmd_corr(args) -> int:
    state = _build_state(args)
    d = state.group.order
    if args.op.startswith("json:"):
        with open(args.op[5:]) as fh:
            data = json.load(fh)
        op = np.array(data["re"], dtype=float).reshape(d, d) + 1j * np.array(
            data["im"], dtype=float
        ).reshape(d, d)
    elif args.op in _OPERATORS:
        op = _OPERATORS[args.op](d)
    else:
        raise ValidationError(f"unknown operator {args.op!r}")
    s1, _, s2 = args.sites.partition(",")
    value = connected_correlator(state, op, s1.strip(), op, s2.strip(), cost_budget=args.budget)
    payload = {
        "sites": [s1.strip(), s2.strip()],
        "op": args.op,
        "re": value.real,
        "im": value.imag,
    }
    _write_text(args.output, json.dumps(payload, sort_keys=True))
    return EXIT_OK


def _theta_grid(points: int) -> list[float]:
    return [0.5 * math.pi * k / (points - 1) for k in range(points)] if points > 1 else [0.0]


def _scan_one_mask(payload) -> list[dict]:
    n, mask, thetas, cells, budget = payload
    return string_entropy_scan(n, [mask], thetas, cells=cells, cost_budget=budget)


def _cmd_string_scan(args) -> int:
    n = args.n
    thetas = _theta_grid(args.theta_grid)
    if args.masks == "all":
        masks = [
            tuple((k >> i) & 1 for i in range(n + 1)) for k in range(2 ** (n + 1))
        ]
    else:
        masks = []
        for chunk in args.masks.split(","):
            chunk = chunk.strip()
            if len(chunk) != n + 1 or set(chunk) - {"0", "1"}:
                raise ValidationError(f"mask {chunk!r} must be {n + 1} bits")
            masks.append(tuple(int(ch) for ch in chunk))
    masks = sorted(set(masks))
    cells = _parse_cells(args.cells)
    jobs = [(n, mask, thetas, cells, args.budget) for mask in masks]
    workers = args.workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_scan_one_mask, jobs))
    else:
        chunks = [_scan_one_mask(job) for job in jobs]
    lines = ["n,m,mask,theta,S_nats,method"]
    for chunk in chunks:
        for row in chunk:
            lines.append(
                f"{row['n']},{row['m']},{row['mask']},{_fmt(row['theta'])},"
                f"{_fmt(row['S_nats'])},{row['method']}"
            )
    _write_text(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_impurity_stop(args) -> int:
    thetas = _theta_grid(args.theta_grid)
    placements = (
        ["adjacent-to-A", "remote"] if args.placement == "both" else [args.placement]
    )
    cells = _parse_cells(args.cells)
    lines = ["placement,theta,S_top_nats"]
    for placement in placements:
        for theta in thetas:
            value = impurity_stop_curve(theta, placement, cells=cells, cost_budget=args.budget)
            lines.append(f"{placement},{_fmt(theta)},{_fmt(value)}")
    _write_text(args.output, "\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_verify(args) -> int:
    state = _build_state(args)
    sites = state.sites()
    if args.keep > len(sites):
        raise ValidationError(f"cannot keep {args.keep} of {len(sites)} sites")
    keep = sites[: args.keep]
    sandwich = build_sandwich(state, keep)
    _maybe_trace(args, sandwich)
    report = compare_to_pipeline(sandwich, tol=args.tol, budget=args.oracle_budget)
    sys.stderr.write(str(report) + "\n")
    return EXIT_OK if report.passed else EXIT_MISMATCH


# -- parser ------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, lattice: bool = True) -> None:
    if lattice:
        p.add_argument("--lattice", default="hexagonal", help="hex|square|kagome|triangular")
        p.add_argument("--cells", default="2x2", help="torus size, e.g. 3x3")
        p.add_argument("--group", default="Z2", help="group literal, e.g. Z2 or Z2xZ3xZ4")
        p.add_argument(
            "--impurity",
            action="append",
            metavar="VERTEX:THETA",
            help="replace a vertex tensor (repeatable; Z2 only)",
        )
    p.add_argument("--output", "-o", default=None, help="output path (default: stdout)")
    p.add_argument("--trace", default=None, help="write the rewrite trace as JSON lines")
    p.add_argument("--bits", action="store_true", help="report entropies in bits")
    p.add_argument("--budget", type=float, default=1e8, help="contraction cost budget")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaugetn",
        description="Exactly contractible gauge-theory tensor networks",
    )
    parser.add_argument("--config", default=None, help="JSON config file (flags override)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="emit the lattice state network as JSON")
    _add_common(p)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("rho", help="reduced density matrix and entropy of a site set")
    _add_common(p)
    p.add_argument("--sites", required=True, help="comma-separated site ids")
    p.set_defaults(func=_cmd_rho)

    p = sub.add_parser("stop", help="Kitaev-Preskill topological entanglement entropy")
    _add_common(p)
    p.add_argument(
        "--vertex-regions",
        default="auto",
        help="'auto' (lowest-id vertex) or 'A=s1;B=s2;C=s3,s4'",
    )
    p.set_defaults(func=_cmd_stop)

    p = sub.add_parser("corr", help="connected two-point correlator")
    _add_common(p)
    p.add_argument("--op", default="sz", help="sz|occupation|json:FILE")
    p.add_argument("--sites", required=True, help="two comma-separated site ids")
    p.set_defaults(func=_cmd_corr)

    p = sub.add_parser("string-scan", help="string-region entropy over masks and angles")
    _add_common(p, lattice=False)
    p.add_argument("--n", type=int, default=4, help="string length in sites")
    p.add_argument("--masks", default="all", help="'all' or comma-separated bit strings")
    p.add_argument("--theta-grid", type=int, default=33, help="grid points on [0, pi/2]")
    p.add_argument("--cells", default="4x4")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=_cmd_string_scan)

    p = sub.add_parser("impurity-stop", help="topological entropy curve around an impurity")
    _add_common(p, lattice=False)
    p.add_argument("--theta-grid", type=int, default=33)
    p.add_argument("--placement", default="both", help="adjacent-to-A|remote|both")
    p.add_argument("--cells", default="4x4")
    p.set_defaults(func=_cmd_impurity_stop)

    p = sub.add_parser("verify", help="compare the pipeline against the brute-force oracle")
    _add_common(p)
    p.add_argument("--keep", type=int, default=2, help="number of sites left open")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--oracle-budget", type=float, default=1e8)
    p.set_defaults(func=_cmd_verify)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> Sequence[str]:
    if "--config" not in argv:
        return argv
    at = list(argv).index("--config")
    path = argv[at + 1]
    with open(path) as fh:
        data = json.load(fh)
    if data.get("schema") != "1":
        raise ValidationError(f"config schema must be '1', got {data.get('schema')!r}")
    defaults = {
        key.replace("-", "_"): value
        for key, value in data.items()
        if key not in ("schema", "command")
    }
    parser.set_defaults(**defaults)
    return argv


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except BudgetExceededError as exc:
        sys.stderr.write(f"budget error: {exc}\n")
        return EXIT_BUDGET
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
