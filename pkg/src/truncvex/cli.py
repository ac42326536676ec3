"""``truncvex`` command line.

Exit codes: 0 on success, 1 on bad input, 2 when an inequality that must hold
for every smooth field fails (a numerical fault, not a user error).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .cassini import ground_truth
from .critical import find_critical_points
from .errors import TruncvexError
from .export import (dumps, level_curves_json, write_collisions_svg, write_json, write_level_svg,
                     write_pgm)
from .gradient_map import gradient_collision_scan
from .hess_region import h_max, hess_plus_mask, level_mask
from .levels import classify_levels, level_curve
from .report import RunConfig, analyze, read_config, validate_report

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INEQUALITY = 2

WORKERS_ENV = "TRUNCVEX_WORKERS"


class _Parser(argparse.ArgumentParser):
    # argparse's own exit status 2 would collide with the inequality-failure code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags given here override it")
    p.add_argument("--field", help="cassini, cassini-g, quadratic, saddle, exp-sum or poly")
    p.add_argument("--a", type=float, help="Cassini parameter a")
    p.add_argument("--b", type=float, help="parameter b of cassini-g")
    p.add_argument("--terms", help='poly terms as JSON, e.g. "[[2,0,1],[0,2,1]]"')
    p.add_argument("--window", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help=f"thread count (default ${WORKERS_ENV} or 1)")
    p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE", help="override a tolerance")
    p.add_argument("--budget", action="append", default=[], metavar="NAME=VALUE", help="override a budget")
    p.add_argument("--out", help="write the JSON result here instead of stdout")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="truncvex", description="Convexity-deviation analysis of planar scalar fields.")
    parser.add_argument("--version", action="version", version=f"truncvex {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="full pipeline and JSON report")
    _common(p)
    p.add_argument("--bracket", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--levels", type=float, nargs="*", help="levels for the classification table")
    p.add_argument("--scan-level", type=float, help="collision scan on {f > level}")
    p.add_argument("--pgm", help="write the positive-definite mask as PGM")
    p.add_argument("--svg", help="write the classified level curves as SVG")
    p.add_argument("--collisions-svg", help="write the collision overlay as SVG")
    p.add_argument("--timings", action="store_true", help="include wall-clock per stage")
    p.add_argument("--no-validate", action="store_true", help="skip schema validation")

    p = sub.add_parser("levels", help="classify level curves")
    _common(p)
    p.add_argument("--c", type=float, nargs="*", default=[], dest="c_values", metavar="C")
    p.add_argument("--svg", help="write the curves as SVG")
    p.add_argument("--curves-json", help="write the curve vertices as JSON")

    p = sub.add_parser("gradient-scan", help="gradient collision scan on an overlevel set")
    _common(p)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--image-tol", type=float, default=1e-4)
    p.add_argument("--min-sep", type=float)
    p.add_argument("--svg", help="write the collision overlay as SVG")

    p = sub.add_parser("hess-mask", help="positive-definite Hessian mask and h_max")
    _common(p)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--pgm", help="write the mask as PGM")

    p = sub.add_parser("critical", help="critical points with Morse indices")
    _common(p)

    p = sub.add_parser("cassini-demo", help="ground truth against recovered values for the Cassini field")
    _common(p)
    return parser


def _kv(items, what):
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise TruncvexError(f"{what} override must look like NAME=VALUE, got {item!r}")
        try:
            out[name] = float(value) if what == "tolerance" else int(value)
        except ValueError as e:
            raise TruncvexError(f"bad {what} value {value!r}") from e
    return out


def config_from_args(args) -> RunConfig:
    base = {}
    if args.config:
        base = read_config(args.config)
    params = dict(base.get("params", {}))
    for key in ("a", "b"):
        if getattr(args, key, None) is not None:
            params[key] = getattr(args, key)
    if getattr(args, "terms", None):
        try:
            params["terms"] = json.loads(args.terms)
        except json.JSONDecodeError as e:
            raise TruncvexError(f"--terms is not valid JSON: {e}") from e
    d = dict(base)
    d["params"] = params
    if args.field:
        d["field"] = args.field
    for key in ("window", "nx", "ny", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    d["tolerances"] = {**base.get("tolerances", {}), **_kv(args.tol, "tolerance")}
    d["budgets"] = {**base.get("budgets", {}), **_kv(args.budget, "budget")}
    workers = args.workers if args.workers is not None else d.get("workers")
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        try:
            workers = int(env) if env else 1
        except ValueError as e:
            raise TruncvexError(f"{WORKERS_ENV} must be an integer") from e
    d["workers"] = workers
    for key, attr in (("bracket", "bracket"), ("levels", "levels"), ("scan_level", "scan_level"),
                      ("timings", "timings")):
        v = getattr(args, attr, None)
        if v not in (None, False):
            d[key] = v
    return RunConfig.from_dict(d)


def _emit(obj, out) -> None:
    text = dumps(obj)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> int:
    cfg = config_from_args(args)
    report = analyze(cfg)
    if not args.no_validate:
        validate_report(json.loads(dumps(report)))
    f = cfg.make_field()
    grid = cfg.grid()
    if args.pgm:
        write_pgm(hess_plus_mask(f, grid, workers=cfg.workers), args.pgm)
    if args.svg:
        levels = [r["level"] for r in report["level_classification"]]
        write_level_svg([level_curve(f, c, grid) for c in levels], grid, args.svg)
    if args.collisions_svg and report["injectivity"] is not None:
        region = level_mask(f, grid, report["injectivity"]["level"])
        scan = gradient_collision_scan(f, region, cfg.budgets["scan_samples"], cfg.tolerances["image_tol"],
                                       seed=cfg.seed)
        write_collisions_svg(scan, region, args.collisions_svg)
    _emit(report, args.out)
    return EXIT_OK if report["inequalities"]["ok"] else EXIT_INEQUALITY


def cmd_levels(args) -> int:
    cfg = config_from_args(args)
    f, grid = cfg.make_field(), cfg.grid()
    tol = cfg.tolerances
    rows = classify_levels(f, args.c_values, grid, workers=cfg.workers,
                           regularity_tol=tol["regularity_tol"], curve_tol=tol["curve_tol"])
    if args.svg or args.curves_json:
        curves = [level_curve(f, c, grid) for c in args.c_values]
        if args.svg:
            write_level_svg(curves, grid, args.svg)
        if args.curves_json:
            write_json(level_curves_json(curves), args.curves_json)
    _emit({"field": cfg.field, "params": cfg.params, "levels": [r.to_dict() for r in rows]}, args.out)
    return EXIT_OK


def cmd_gradient_scan(args) -> int:
    cfg = config_from_args(args)
    f, grid = cfg.make_field(), cfg.grid()
    region = level_mask(f, grid, args.level, above=True, strict=True, workers=cfg.workers)
    if region.count == 0:
        raise TruncvexError(f"overlevel {{f > {args.level}}} is empty on the window")
    rep = gradient_collision_scan(f, region, args.samples, args.image_tol, args.min_sep, seed=cfg.seed)
    if args.svg:
        write_collisions_svg(rep, region, args.svg)
    _emit({"level": args.level, **rep.to_dict()}, args.out)
    return EXIT_OK


def cmd_hess_mask(args) -> int:
    cfg = config_from_args(args)
    f, grid = cfg.make_field(), cfg.grid()
    mask = hess_plus_mask(f, grid, args.eps, workers=cfg.workers)
    out = {"pd_cells": mask.count, "cells": grid.nx * grid.ny, "eps": args.eps, "h_max": None}
    if (~mask.cells).any():
        out["h_max"] = h_max(f, mask, refine_iters=cfg.budgets["refine_iters"]).to_dict()
    if args.pgm:
        write_pgm(mask, args.pgm)
    _emit(out, args.out)
    return EXIT_OK


def cmd_critical(args) -> int:
    cfg = config_from_args(args)
    rep = find_critical_points(cfg.make_field(), cfg.grid(), newton_tol=cfg.tolerances["newton_tol"],
                               degen_tol=cfg.tolerances["degen_tol"])
    _emit(rep.to_dict(), args.out)
    return EXIT_OK


def cmd_cassini_demo(args) -> int:
    if args.field and args.field != "cassini":
        raise TruncvexError("cassini-demo only runs on the cassini field")
    args.field = "cassini"
    cfg = config_from_args(args)
    a = float(cfg.params.get("a", 1.0))
    report = analyze(cfg)
    truth = ground_truth(a)
    th = report["thresholds"]
    pts = report["critical_set"]["points"]
    recovered = {
        "h_max": th["h_max"],
        "sql_bracket": [th["sql"]["lo"], th["sql"]["hi"]],
        "scl_bracket": [th["scl"]["lo"], th["scl"]["hi"]],
        "nu_max": th["nu_max"],
        "min_value": min((p["value"] for p in pts), default=None),
        "critical_points": [p["location"] for p in pts],
        "morse_indices": [p["morse_index"] for p in pts],
        "valence": report["valence"],
    }
    _emit({"a": a, "ground_truth": truth.to_dict(), "recovered": recovered,
           "inequalities": report["inequalities"]}, args.out)
    return EXIT_OK if report["inequalities"]["ok"] else EXIT_INEQUALITY


COMMANDS = {
    "analyze": cmd_analyze,
    "levels": cmd_levels,
    "gradient-scan": cmd_gradient_scan,
    "hess-mask": cmd_hess_mask,
    "critical": cmd_critical,
    "cassini-demo": cmd_cassini_demo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # usage errors, --help and --version
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (TruncvexError, ValueError, OSError) as e:
        print(f"truncvex: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
