"""Run configuration and the full analysis pipeline behind ``truncvex analyze``."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field as dc_field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .critical import find_critical_points
from .errors import InvalidInputError
from .field import GridSpec, ScalarField2
from .gradient_map import gradient_collision_scan, valence_bounds
from .hess_region import complement_bounded, h_max, hess_plus_mask, level_mask
from .levels import classify_levels
from .registry import make_field
from .truncation import ConvexityProbe, estimate_scl, estimate_sql, window_max, window_min

SCHEMA_VERSION = "1.0"
NOT_APPLICABLE = "not_applicable"

DEFAULT_TOLERANCES = {
    "newton_tol": 1e-9,
    "bisect_tol": 1e-2,
    "violation_tol": None,  # 1e-7 * (1 + max |f| on the window)
    "image_tol": 1e-4,
    "regularity_tol": 1e-6,
    "curve_tol": 1e-8,
    "mono_tol": None,  # 1e-9 * (1 + max |grad f| * window diagonal)
    "tol_compare": 1e-9,
    "sandwich_tol": 1e-6,
    "psd_slack": 1e-9,
    "degen_tol": 1e-9,
}

DEFAULT_BUDGETS = {
    "pair_samples": 4000,
    "seg_samples": 3,
    "scan_samples": 200_000,
    "valence_samples": 50_000,
    "refine_iters": 80,
    "probe_levels": 8,
}

BUDGET_MINIMA = {"pair_samples": 1, "seg_samples": 3, "scan_samples": 2, "valence_samples": 2,
                 "refine_iters": 1, "probe_levels": 1}


@dataclass
class RunConfig:
    field: str = "cassini"
    params: dict = dc_field(default_factory=dict)
    window: Optional[tuple[float, float, float, float]] = None  # default [-3a, 3a]^2 or [-3, 3]^2
    nx: int = 600
    ny: int = 600
    tolerances: dict = dc_field(default_factory=dict)
    budgets: dict = dc_field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    bracket: Optional[tuple[float, float]] = None
    levels: Optional[list[float]] = None
    scan_level: Optional[float] = None
    outputs: dict = dc_field(default_factory=dict)  # json, pgm, svg, levels_svg, collisions_svg
    timings: bool = False

    def __post_init__(self):
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.tolerances or {})
        for k, v in tol.items():
            if k not in DEFAULT_TOLERANCES:
                raise InvalidInputError(f"unknown tolerance {k!r}")
            if v is not None and not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidInputError(f"tolerance {k} must be > 0, got {v!r}")
        self.tolerances = tol
        bud = dict(DEFAULT_BUDGETS)
        bud.update(self.budgets or {})
        for k, v in bud.items():
            if k not in DEFAULT_BUDGETS:
                raise InvalidInputError(f"unknown budget {k!r}")
            if int(v) != v or v < BUDGET_MINIMA[k]:
                raise InvalidInputError(f"budget {k} must be an integer >= {BUDGET_MINIMA[k]}")
            bud[k] = int(v)
        self.budgets = bud
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")
        if self.window is not None:
            if len(self.window) != 4:
                raise InvalidInputError("window needs four numbers: xmin xmax ymin ymax")
            self.window = tuple(float(v) for v in self.window)
        if self.bracket is not None:
            if len(self.bracket) != 2:
                raise InvalidInputError("bracket needs two numbers")
            self.bracket = tuple(float(v) for v in self.bracket)
        self.grid()  # validates the window

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidInputError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(read_config(path))

    def make_field(self) -> ScalarField2:
        return make_field(self.field, **self.params)

    def grid(self) -> GridSpec:
        if self.window is None:
            s = 3.0 * float(self.params.get("a", self.params.get("b", 1.0))) \
                if self.field in ("cassini", "cassini-g") else 3.0
            return GridSpec(-s, s, -s, s, self.nx, self.ny)
        return GridSpec(*self.window, self.nx, self.ny)

    def echo(self) -> dict:
        """Config as it was resolved; excludes output paths and worker count, which never
        change the numbers."""
        return {
            "field": self.field,
            "params": self.params,
            "window": self.grid().to_dict(),
            "tolerances": self.tolerances,
            "budgets": self.budgets,
            "seed": self.seed,
            "bracket": list(self.bracket) if self.bracket else None,
            "levels": self.levels,
            "scan_level": self.scan_level,
        }


def read_config(path) -> dict:
    """Raw config mapping from a JSON file (keys checked, values not yet resolved)."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidInputError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise InvalidInputError("config file must hold a JSON object")
    extra = set(data) - set(RunConfig.__dataclass_fields__)
    if extra:
        raise InvalidInputError(f"unknown config keys: {sorted(extra)}")
    return data


def load_schema() -> dict:
    return json.loads(resources.files("truncvex").joinpath("report.schema.json").read_text())


def validate_report(report: dict) -> None:
    import jsonschema
    jsonschema.validate(report, load_schema())


class _Clock:
    def __init__(self):
        self.stages: dict[str, float] = {}

    def __call__(self, name):
        clock = self

        class _Stage:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                clock.stages[name] = time.perf_counter() - self.t

        return _Stage()


def _resolved(cfg: RunConfig, values: np.ndarray, grad_scale: float, grid: GridSpec) -> dict:
    tol = dict(cfg.tolerances)
    if tol["violation_tol"] is None:
        tol["violation_tol"] = 1e-7 * (1.0 + float(np.max(np.abs(values))))
    if tol["mono_tol"] is None:
        tol["mono_tol"] = 1e-9 * (1.0 + grad_scale * grid.diagonal)
    return tol


def analyze(cfg: RunConfig) -> dict:
    """Full pipeline; returns the JSON-ready report (inequality verdicts under ``inequalities``)."""
    clock = _Clock()
    f = cfg.make_field()
    grid = cfg.grid()
    X, Y = grid.mesh()
    values = f.value(X, Y)
    gx, gy = f.gradient(X, Y)
    tol = _resolved(cfg, values, float(np.max(np.hypot(gx, gy))), grid)
    bud = cfg.budgets
    w = cfg.workers

    with clock("hess_region"):
        mask = hess_plus_mask(f, grid, 0.0, workers=w)
        nonempty = bool((~mask.cells).any())
        bounded = complement_bounded(mask) if nonempty else False
        hm = h_max(f, mask, refine_iters=bud["refine_iters"]) if nonempty else None
    hess = {
        "pd_cells": mask.count,
        "complement_nonempty": nonempty,
        "complement_bounded": bounded,
        "h_max": hm.to_dict() if hm else None,
    }

    with clock("critical_set"):
        crit = find_critical_points(f, grid, newton_tol=tol["newton_tol"], degen_tol=tol["degen_tol"])

    with clock("thresholds"):
        floor = window_min(f, grid, values)
        lo, hi = cfg.bracket if cfg.bracket else (floor, window_max(f, grid, values))
        probe = ConvexityProbe(f, grid, pair_samples=bud["pair_samples"], seg_samples=bud["seg_samples"],
                               seed=cfg.seed, violation_tol=tol["violation_tol"],
                               psd_slack=tol["psd_slack"], regularity_tol=tol["regularity_tol"],
                               curve_tol=tol["curve_tol"])
        kw = dict(probe_levels=bud["probe_levels"], workers=w, probe=probe)
        sql = estimate_sql(f, (lo, hi), grid, tol["bisect_tol"], **kw)
        scl = estimate_scl(f, (lo, hi), grid, tol["bisect_tol"], **kw)

    inequalities = _inequalities(hm, bounded, crit.nu_max, sql, scl, tol)

    with clock("levels"):
        if cfg.levels is not None:
            c_values = [float(c) for c in cfg.levels]
        else:
            top = 2 * scl.hi - floor if scl.hi > floor else floor + 1.0
            c_values = [float(c) for c in np.linspace(floor, top, 8)]
        table = classify_levels(f, c_values, grid, workers=w, regularity_tol=tol["regularity_tol"],
                                curve_tol=tol["curve_tol"])

    with clock("injectivity"):
        margin = 0.0125 * (scl.hi - floor)
        scan_level = cfg.scan_level if cfg.scan_level is not None else scl.hi + margin
        region = level_mask(f, grid, scan_level, above=True, strict=True, workers=w)
        scan = None
        if region.count:
            scan = gradient_collision_scan(f, region, bud["scan_samples"], tol["image_tol"], seed=cfg.seed)

    with clock("valence"):
        val = None
        if mask.count:
            val = valence_bounds(f, mask, scl.hi, crit, samples=bud["valence_samples"],
                                 image_tol=tol["image_tol"], seed=cfg.seed)

    report: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "library_version": __version__,
        "config": cfg.echo(),
        "tolerances_used": tol,
        "hess_region": hess,
        "critical_set": crit.to_dict(),
        "thresholds": {
            "window_min": floor,
            "bracket": [lo, hi],
            "sql": sql.to_dict(),
            "scl": scl.to_dict(),
            "h_max": hm.value if hm else None,
            "nu_max": crit.nu_max,
        },
        "inequalities": inequalities,
        "level_classification": [r.to_dict() for r in table],
        "injectivity": None if scan is None else {"level": scan_level, **scan.to_dict()},
        "valence": None if val is None else val.to_dict(),
    }
    if cfg.timings:
        report["timings"] = clock.stages
    return report


def _inequalities(hm, bounded, nu, sql, scl, tol) -> dict:
    out = {"tolerances": {"tol_compare": tol["tol_compare"], "sandwich_tol": tol["sandwich_tol"],
                          "bisect_tol": tol["bisect_tol"]}}
    # convexity implies quasiconvexity: meaningful on any window
    out["sql_le_scl"] = bool(sql.hi <= scl.hi + tol["bisect_tol"])
    if hm is None or not bounded:
        out["h_max_ge_nu_max"] = NOT_APPLICABLE
        out["scl_le_max_sql_h_max"] = NOT_APPLICABLE
    else:
        out["h_max_ge_nu_max"] = bool(not math.isfinite(nu) or hm.value >= nu - tol["tol_compare"])
        out["scl_le_max_sql_h_max"] = bool(scl.hi <= max(sql.hi, hm.value) + tol["sandwich_tol"])
    checks = [v for k, v in out.items() if k != "tolerances"]
    out["ok"] = all(v is not False for v in checks)
    return out


def inequalities_ok(report: dict) -> bool:
    return bool(report["inequalities"]["ok"])


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})


__all__ = ["RunConfig", "analyze", "inequalities_ok", "load_schema", "validate_report"]
