"""Command-line front end.

Commands: eval, invert, certify, probe-injectivity, ps-check, zoo.
Maps come from ``zoo:NAME`` builtins or ``*.map`` DSL files.  All
randomness is seeded (``--seed``, else the LIPINV_SEED environment
variable, else 0) and reports are byte-stable across runs for a fixed
seed when ``--no-timestamp`` is passed.

Exit codes: 0 success (for ``invert``: converged), 1 clean run without
convergence, 2 usage/parse/validation error, 3 numeric failure.

CSV column orders: eval -> value_0..value_{m-1}, active_patterns,
limiting_jacobians; invert -> iter, phi, residual, subgrad_norm, x...;
certify -> x..., status, min_singular_value, elements_count;
probe-injectivity -> outer_iter, node_index, psi, x... (path history);
ps-check -> direction..., one ||f|| column per radius.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import re
import sys
import time

import numpy as np

from .map_model import (
    EvaluationError,
    MapError,
    MapSyntaxError,
    MapValidationError,
    PatternExplosionError,
    active_patterns,
    eval_map,
    parse_map,
)
from .clarke import certificate_report, limiting_jacobians, max_rank_certificate
from .inversion import CONVERGED, SolveOptions, invert, solve_report_dict
from .mountain_pass import (
    MPOptions,
    ProbeOptions,
    injectivity_probe,
    injectivity_report_dict,
)
from .ps_probe import (
    coercivity_report_dict,
    coercivity_scan,
    ps_sequence_probe,
    ps_trace_dict,
)
from .zoo import ZOO, load_zoo_map


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("LIPINV_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise MapValidationError(f"LIPINV_SEED must be an integer, got {env!r}")
    return 0


def _load_map(spec: str):
    if spec.startswith("zoo:"):
        return load_zoo_map(spec[4:])
    try:
        with open(spec, "r", encoding="utf-8") as fh:
            return parse_map(fh.read())
    except OSError as exc:
        raise MapValidationError(f"cannot read map file {spec!r}: {exc}")


def _parse_vector(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(p) for p in text.split(",")])
    except ValueError:
        raise MapValidationError(f"{what} must be comma-separated numbers, got {text!r}")


def _parse_grid(text: str) -> list[np.ndarray]:
    """``lo:hi:count x lo:hi:count`` -> list of grid points, row-major."""
    axes = []
    for part in text.split("x"):
        pieces = part.split(":")
        if len(pieces) != 3:
            raise MapValidationError(f"grid axis must be lo:hi:count, got {part!r}")
        try:
            lo, hi, count = float(pieces[0]), float(pieces[1]), int(pieces[2])
        except ValueError:
            raise MapValidationError(f"bad grid axis {part!r}")
        if count < 1:
            raise MapValidationError("grid axis needs at least one point")
        axes.append(np.linspace(lo, hi, count))
    mesh = np.meshgrid(*axes, indexing="ij")
    return [np.array(p) for p in zip(*(g.ravel() for g in mesh))]


def _envelope(kind: str, args, payload: dict) -> dict:
    report = {"kind": kind}
    if not args.no_timestamp:
        report["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    report.update(payload)
    return report


def _write(args, text: str):
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(args, report: dict):
    _write(args, json.dumps(report, indent=2) + "\n")


def _emit_csv(args, header: list[str], rows: list[tuple]):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    _write(args, buf.getvalue())


def cmd_eval(args) -> int:
    m = _load_map(args.map)
    x = _parse_vector(args.point, "--point")
    tol = args.tol if args.tol is not None else 1e-9
    value = eval_map(m, x)
    patterns = active_patterns(m, x, tol)
    gj = limiting_jacobians(m, x, tol)
    if args.format == "csv":
        header = [f"value_{i}" for i in range(m.n_out)] + ["active_patterns",
                                                           "limiting_jacobians"]
        _emit_csv(args, header, [tuple(value) + (len(patterns), len(gj.elements))])
    else:
        _emit_json(args, _envelope("eval", args, {
            "map": args.map,
            "point": [float(v) for v in x],
            "value": [float(v) for v in value],
            "active_patterns": len(patterns),
            "limiting_jacobians": len(gj.elements),
        }))
    return 0


def cmd_invert(args) -> int:
    m = _load_map(args.map)
    y = _parse_vector(args.target, "--target")
    seed = _resolve_seed(args)
    opts = SolveOptions(seed=seed, record_trace=args.format == "csv")
    if args.tol is not None:
        opts.tol_residual = args.tol
    if args.start is not None:
        opts.x0 = _parse_vector(args.start, "--start")
    rep = invert(m, y, opts)
    if args.format == "csv":
        header = ["iter", "phi", "residual", "subgrad_norm"] + \
            [f"x{i}" for i in range(m.n_in)]
        _emit_csv(args, header, rep.trace or [])
    else:
        _emit_json(args, _envelope("invert", args, {
            "map": args.map,
            "target": [float(v) for v in y],
            "seed": seed,
            "report": solve_report_dict(rep),
        }))
    return 0 if rep.status == CONVERGED else 1


def cmd_certify(args) -> int:
    m = _load_map(args.map)
    seed = _resolve_seed(args)
    sigma_min = args.tol if args.tol is not None else 1e-8
    if args.grid:
        points = _parse_grid(args.grid)
    elif args.point:
        points = [_parse_vector(args.point, "--point")]
    else:
        raise MapValidationError("certify needs --point or --grid")
    certificates = []
    counts: dict[str, int] = {}
    for p in points:
        gj = limiting_jacobians(m, p)
        cert = max_rank_certificate(gj, sigma_min=sigma_min, seed=seed)
        certificates.append(certificate_report(gj, cert))
        counts[cert.status] = counts.get(cert.status, 0) + 1
    if args.format == "csv":
        header = [f"x{i}" for i in range(m.n_in)] + \
            ["status", "min_singular_value", "elements_count"]
        rows = [tuple(c["point"]) + (c["status"], c["min_singular_value"],
                                     c["elements_count"])
                for c in certificates]
        _emit_csv(args, header, rows)
    else:
        _emit_json(args, _envelope("certify", args, {
            "map": args.map,
            "seed": seed,
            "sigma_min": sigma_min,
            "certificates": certificates,
            "summary": dict(sorted(counts.items())),
        }))
    return 0


def cmd_probe_injectivity(args) -> int:
    m = _load_map(args.map)
    a = _parse_vector(args.target, "--target")
    seed = _resolve_seed(args)
    opts = ProbeOptions(seed=seed, starts=args.starts,
                        mp=MPOptions(seed=seed, record_history=args.format == "csv"))
    if args.tol is not None:
        opts.dedup_tol = args.tol
    rep = injectivity_probe(m, a, opts)
    if args.format == "csv":
        if rep.mp is not None and rep.mp.path_history:
            header = ["outer_iter", "node_index", "psi"] + \
                [f"x{i}" for i in range(m.n_in)]
            _emit_csv(args, header, rep.mp.path_history)
        else:
            header = ["preimage_index"] + [f"x{i}" for i in range(m.n_in)]
            _emit_csv(args, header,
                      [(i,) + tuple(p) for i, p in enumerate(rep.preimages)])
    else:
        _emit_json(args, _envelope("probe-injectivity", args, {
            "map": args.map,
            "target": [float(v) for v in a],
            "seed": seed,
            **injectivity_report_dict(rep),
        }))
    return 0


def cmd_ps_check(args) -> int:
    m = _load_map(args.map)
    y = _parse_vector(args.target, "--target")
    seed = _resolve_seed(args)
    coercivity = coercivity_scan(m, seed=seed)
    ps = ps_sequence_probe(m, y, seed=seed)
    if args.format == "csv":
        header = [f"d{i}" for i in range(m.n_in)] + \
            [f"norm_r{r:g}" for r in coercivity.radii]
        rows = [tuple(d) + tuple(v) for d, v in
                zip(coercivity.directions, coercivity.values)]
        _emit_csv(args, header, rows)
    else:
        _emit_json(args, _envelope("ps-check", args, {
            "map": args.map,
            "target": [float(v) for v in y],
            "seed": seed,
            "coercivity": coercivity_report_dict(coercivity),
            "ps": ps_trace_dict(ps),
        }))
    return 0


def cmd_zoo(args) -> int:
    entries = []
    for entry in ZOO.values():
        m = entry.load()
        entries.append({
            "name": entry.name,
            "n_in": m.n_in,
            "n_out": m.n_out,
            "nonsmooth_nodes": len(m.nonsmooth_nodes),
            "source": entry.source,
            "note": entry.note,
            "has_analytic_inverse": entry.analytic_inverse is not None,
            "singular_points": [list(p) for p in entry.singular_points],
            "coercive": entry.coercive,
            "injective": entry.injective,
        })
    if args.format == "csv":
        header = ["name", "n_in", "n_out", "nonsmooth_nodes", "coercive", "injective"]
        rows = [(e["name"], e["n_in"], e["n_out"], e["nonsmooth_nodes"],
                 e["coercive"], e["injective"]) for e in entries]
        _emit_csv(args, header, rows)
    else:
        _emit_json(args, _envelope("zoo", args, {"entries": entries}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipinv",
        description="Generalized-Jacobian certificates, global inversion and "
                    "mountain-pass injectivity probes for piecewise-smooth maps.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "CSV column orders (--format csv):\n"
            "  eval:               value_0..value_{m-1}, active_patterns, "
            "limiting_jacobians\n"
            "  invert:             iter, phi, residual, subgrad_norm, x0..x{n-1}\n"
            "  certify:            x0..x{n-1}, status, min_singular_value, "
            "elements_count\n"
            "  probe-injectivity:  outer_iter, node_index, psi, x0..x{n-1}\n"
            "  ps-check:           d0..d{n-1}, one ||f|| column per radius\n"
            "Exit codes: 0 success (invert: converged), 1 clean run without "
            "convergence,\n2 usage/parse error, 3 numeric failure."))
    # let values like "-2,0" and "-2:2:5x-2:2:5" pass as option arguments
    negative_value = re.compile(r"^-\d")
    parser._negative_number_matcher = negative_value
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_map=True):
        p._negative_number_matcher = negative_value
        if need_map:
            p.add_argument("--map", required=True,
                           help="zoo:NAME builtin or path to a .map DSL file")
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed (default: LIPINV_SEED env var, else 0)")
        p.add_argument("--tol", type=float, default=None,
                       help="primary tolerance of the command (eval: kink activity; "
                            "invert: residual; certify: sigma_min; "
                            "probe-injectivity: preimage dedup)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--no-timestamp", action="store_true",
                       help="omit the timestamp field (byte-stable reports)")

    p = sub.add_parser("eval", help="evaluate a map and count kinks at a point")
    common(p)
    p.add_argument("--point", required=True, help="comma-separated coordinates")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("invert", help="solve f(x) = y globally")
    common(p)
    p.add_argument("--target", required=True, help="comma-separated target y")
    p.add_argument("--start", default=None,
                   help="optional start point (default: seeded multi-start)")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("certify", help="maximal-rank certificates on points or a grid")
    common(p)
    p.add_argument("--point", default=None, help="single point")
    p.add_argument("--grid", default=None,
                   help="grid as lo:hi:count x lo:hi:count (e.g. -2:2:5x-2:2:5)")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("probe-injectivity",
                       help="hunt for distinct preimages and run the saddle search")
    common(p)
    p.add_argument("--target", required=True)
    p.add_argument("--starts", type=int, default=16, help="number of inversion starts")
    p.set_defaults(func=cmd_probe_injectivity)

    p = sub.add_parser("ps-check",
                       help="coercivity scan plus descent-compactness probe")
    common(p)
    p.add_argument("--target", required=True)
    p.set_defaults(func=cmd_ps_check)

    p = sub.add_parser("zoo", help="list builtin maps and their known facts")
    common(p, need_map=False)
    p.set_defaults(func=cmd_zoo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EvaluationError, PatternExplosionError) as exc:
        print(f"lipinv: numeric failure: {exc}", file=sys.stderr)
        return 3
    except MapError as exc:
        print(f"lipinv: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
