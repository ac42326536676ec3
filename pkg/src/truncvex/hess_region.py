"""Rasterised positive-definite region of the Hessian and the level ``h_max``.

Boundedness of the complement is only ever judged inside the sampling window;
results carry that window and say so.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import InconclusiveError, InvalidInputError, UndefinedError
from .field import GridSpec, Point2, ScalarField2, pd_mask, psd_mask

log = logging.getLogger(__name__)

HESS_PLUS = "hess_plus"
HESS_PLUS_0 = "hess_plus_0"
SUBLEVEL = "sublevel"
OVERLEVEL = "overlevel"
CUSTOM = "custom"
TAGS = (HESS_PLUS, HESS_PLUS_0, SUBLEVEL, OVERLEVEL, CUSTOM)

Predicate = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Boolean raster over ``grid``; ``cells[row, col]`` is the property at that cell centre.

    ``predicate`` (when known) evaluates the same property at arbitrary points;
    it is what polishing steps use to stay inside the region.
    """

    grid: GridSpec
    cells: np.ndarray
    property_tag: str
    predicate: Optional[Predicate] = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        if cells.shape != (self.grid.ny, self.grid.nx):
            raise InvalidInputError(
                f"mask shape {cells.shape} does not match grid ({self.grid.ny}, {self.grid.nx})")
        if self.property_tag not in TAGS:
            raise InvalidInputError(f"unknown property tag {self.property_tag!r}")
        object.__setattr__(self, "cells", cells)

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    def contains(self, x, y):
        """Pointwise membership: the predicate if known, else the containing cell's flag."""
        if self.predicate is not None:
            return np.asarray(self.predicate(x, y), dtype=bool) & self.grid.contains(x, y)
        row, col = self.grid.cell_index(x, y)
        return self.cells[row, col] & self.grid.contains(x, y)

    def cell_of(self, p) -> bool:
        row, col = self.grid.cell_index(p[0], p[1])
        return bool(self.cells[row, col])

    def __and__(self, other: "RegionMask") -> "RegionMask":
        if other.grid != self.grid:
            raise InvalidInputError("masks live on different grids")
        pred = None
        if self.predicate is not None and other.predicate is not None:
            p1, p2 = self.predicate, other.predicate
            pred = lambda x, y: np.asarray(p1(x, y)) & np.asarray(p2(x, y))  # noqa: E731
        return RegionMask(self.grid, self.cells & other.cells, CUSTOM, pred)


def _map_rows(grid: GridSpec, fn, workers: int) -> np.ndarray:
    """Evaluate ``fn(X, Y)`` blockwise over rows; block order fixes the result."""
    X, Y = grid.mesh()
    if workers <= 1 or grid.ny < 2 * workers:
        return fn(X, Y)
    bounds = np.linspace(0, grid.ny, workers + 1).astype(int)
    blocks = [(bounds[i], bounds[i + 1]) for i in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda b: fn(X[b[0]:b[1]], Y[b[0]:b[1]]), blocks))
    return np.concatenate(parts, axis=0)


def pd_predicate(field: ScalarField2, eps: float = 0.0) -> Predicate:
    def pred(x, y):
        return pd_mask(*field.hessian(x, y), eps)
    return pred


def psd_predicate(field: ScalarField2, eps: float = 0.0) -> Predicate:
    def pred(x, y):
        return psd_mask(*field.hessian(x, y), eps)
    return pred


def hess_plus_mask(field: ScalarField2, grid: GridSpec, eps: float = 0.0, workers: int = 1) -> RegionMask:
    """Cells whose centre Hessian is positive definite with margin ``eps``.

    A positive ``eps`` shrinks the region, which can only enlarge the
    complement and so only push ``h_max`` up.
    """
    if not (math.isfinite(eps) and eps >= 0):
        raise InvalidInputError("eps must be >= 0")
    pred = pd_predicate(field, eps)
    cells = _map_rows(grid, pred, workers)
    return RegionMask(grid, cells, HESS_PLUS, pred, {"eps": eps})


def hess_plus_0_mask(field: ScalarField2, grid: GridSpec, eps: float = 0.0, workers: int = 1) -> RegionMask:
    pred = psd_predicate(field, eps)
    return RegionMask(grid, _map_rows(grid, pred, workers), HESS_PLUS_0, pred, {"eps": eps})


def level_mask(field: ScalarField2, grid: GridSpec, level: float, above: bool = True,
               strict: bool = True, workers: int = 1) -> RegionMask:
    """``{f > level}`` / ``{f >= level}`` when ``above``, else ``{f <= level}`` / ``{f < level}``."""
    if above:
        pred = (lambda x, y: field.value(x, y) > level) if strict else \
            (lambda x, y: field.value(x, y) >= level)
        tag = OVERLEVEL
    else:
        pred = (lambda x, y: field.value(x, y) < level) if strict else \
            (lambda x, y: field.value(x, y) <= level)
        tag = SUBLEVEL
    return RegionMask(grid, _map_rows(grid, pred, workers), tag, pred, {"level": level})


def predicate_mask(grid: GridSpec, pred: Predicate, workers: int = 1) -> RegionMask:
    return RegionMask(grid, _map_rows(grid, pred, workers), CUSTOM, pred)


def complement_bounded(mask: RegionMask, margin_cells: int = 5) -> bool:
    """True iff no false cell lies within ``margin_cells`` of the window edge.

    This is a statement about the window only, never about the whole plane.
    """
    if margin_cells < 1:
        raise InvalidInputError("margin_cells must be >= 1")
    g = mask.grid
    if 2 * margin_cells >= g.nx or 2 * margin_cells >= g.ny:
        raise InconclusiveError(
            f"window of {g.nx}x{g.ny} cells is entirely within the {margin_cells}-cell margin")
    m = margin_cells
    c = mask.cells
    border = np.concatenate([c[:m].ravel(), c[-m:].ravel(), c[:, :m].ravel(), c[:, -m:].ravel()])
    return bool(border.all())


@dataclass(frozen=True)
class HMaxEstimate:
    """Maximum of ``f`` over the complement of the PD region.

    ``raster_witness`` is the centre of a false cell; ``witness`` is the
    refined point (itself outside the PD region) and ``value = f(witness)``.
    """

    value: float
    witness: Point2
    complement_bounded: bool
    refinement_radius: float
    raster_value: float
    raster_witness: Point2
    window: GridSpec

    @property
    def window_relative(self) -> bool:
        return not self.complement_bounded

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "witness": self.witness.as_list(),
            "raster_value": self.raster_value,
            "raster_witness": self.raster_witness.as_list(),
            "complement_bounded": self.complement_bounded,
            "window_relative": self.window_relative,
            "refinement_radius": self.refinement_radius,
        }


def _raster_candidates(values: np.ndarray, cells: np.ndarray, grid: GridSpec, k: int):
    """Top-k cells by value among ``cells``; ties broken by (x, y) lexicographically."""
    rows, cols = np.nonzero(cells)
    vals = values[rows, cols]
    xs = grid.xc[cols]
    ys = grid.yc[rows]
    order = np.lexsort((ys, xs, -vals))[:k]
    return [(float(vals[i]), int(rows[i]), int(cols[i])) for i in order]


def ascend_in_region(field: ScalarField2, start, in_region: Predicate, box, iters: int,
                     step0: float) -> tuple[np.ndarray, float]:
    """Gradient ascent that only accepts steps staying in ``box`` and the region.

    A rejected step halves the step length, so the iterate converges onto the
    region boundary when the ascent direction points out of it.
    """
    p = np.asarray(start, dtype=float)
    fp = float(field.value(p[0], p[1]))
    step = step0
    xlo, xhi, ylo, yhi = box
    for _ in range(iters):
        gx, gy = field.gradient(p[0], p[1])
        gn = math.hypot(float(gx), float(gy))
        if gn == 0.0 or step < 1e-16 * max(1.0, abs(p).max()):
            break
        q = p + step * np.array([float(gx), float(gy)]) / gn
        ok = xlo <= q[0] <= xhi and ylo <= q[1] <= yhi and bool(in_region(q[0], q[1]))
        fq = float(field.value(q[0], q[1])) if ok else -math.inf
        if ok and fq > fp:
            p, fp = q, fq
        else:
            step *= 0.5
    return p, fp


def region_max(field: ScalarField2, grid: GridSpec, cells: np.ndarray, in_region: Predicate,
               values: np.ndarray | None = None, refine_iters: int = 80, candidates: int = 4):
    """Raster maximum of ``f`` over ``cells`` followed by local ascent inside the region.

    Returns ``(raster_value, raster_point, value, point)``; the refined value is
    never below the raster value.
    """
    if values is None:
        X, Y = grid.mesh()
        values = field.value(X, Y)
    cand = _raster_candidates(values, cells, grid, candidates)
    if not cand:
        raise UndefinedError("region is empty on this grid")
    xc, yc = grid.xc, grid.yc
    r_val, r_row, r_col = cand[0]
    raster_pt = np.array([xc[r_col], yc[r_row]])
    best_val, best_pt = r_val, raster_pt
    for val, row, col in cand:
        start = np.array([xc[col], yc[row]])
        box = (max(start[0] - 1.5 * grid.dx, grid.x_min), min(start[0] + 1.5 * grid.dx, grid.x_max),
               max(start[1] - 1.5 * grid.dy, grid.y_min), min(start[1] + 1.5 * grid.dy, grid.y_max))
        pt, v = ascend_in_region(field, start, in_region, box, refine_iters,
                                 0.5 * min(grid.dx, grid.dy))
        if v > best_val or (v == best_val and tuple(pt) < tuple(best_pt)):
            best_val, best_pt = v, pt
    return r_val, raster_pt, best_val, best_pt


def h_max(field: ScalarField2, mask: RegionMask, refine_iters: int = 80,
          margin_cells: int = 5) -> HMaxEstimate:
    """Estimate ``max f`` over the complement of the PD region in the mask's window."""
    if mask.property_tag != HESS_PLUS:
        raise InvalidInputError("h_max needs a hess_plus mask")
    complement = ~mask.cells
    if not complement.any():
        raise UndefinedError("positive-definite region covers the window; h_max undefined")
    eps = mask.meta.get("eps", 0.0)
    pd = pd_predicate(field, eps)

    def outside(x, y):
        return ~np.asarray(pd(x, y))

    try:
        bounded = complement_bounded(mask, margin_cells)
    except InconclusiveError:
        bounded = False
    if not bounded:
        log.warning("complement of Hess+ reaches the window edge; h_max is window-relative")
    r_val, r_pt, val, pt = region_max(field, mask.grid, complement, outside,
                                      refine_iters=refine_iters)
    g = mask.grid
    return HMaxEstimate(
        value=float(val),
        witness=Point2(*pt),
        complement_bounded=bounded,
        refinement_radius=1.5 * math.hypot(g.dx, g.dy),
        raster_value=float(r_val),
        raster_witness=Point2(*r_pt),
        window=g,
    )


def nu_vs_h_check(h: HMaxEstimate | float, nu: float, tol_compare: float = 1e-9) -> bool:
    """``h_max >= nu_max`` up to ``tol_compare``; False flags a numerical fault."""
    hv = h.value if isinstance(h, HMaxEstimate) else float(h)
    if not (math.isfinite(hv) and math.isfinite(nu)):
        raise InvalidInputError("h_max and nu_max must be finite")
    ok = hv >= nu - tol_compare
    if not ok:
        log.error("h_max=%r < nu_max=%r: inequality violated, numerical fault suspected", hv, nu)
    return ok
