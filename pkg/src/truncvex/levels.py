"""Level-curve extraction, bordered-Hessian curvature sign and level classification.

Curves come from marching squares on the cell-centre lattice; every vertex is
then polished by bisection along its grid edge.  A critical point sitting on the
level (the pinch of a figure-eight, say) is located by Newton from the slowest
vertices and reported; such curves are never called regular.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np
from skimage import measure

from .critical import _newton
from .errors import CurvatureUndefinedError, InvalidInputError
from .field import GridSpec, Point2, ScalarField2


@dataclass(frozen=True, eq=False)
class LevelCurve:
    level: float
    polylines: tuple[np.ndarray, ...]
    closed: tuple[bool, ...]
    regular: bool
    components: int
    min_grad_norm: float
    critical_on_level: tuple[Point2, ...]
    grid: GridSpec
    # dense samples on the curve (vertices plus projected in-between points)
    samples: np.ndarray = dc_field(repr=False, default=None)
    sample_det: np.ndarray = dc_field(repr=False, default=None)
    sample_det_tol: np.ndarray = dc_field(repr=False, default=None)

    @property
    def empty(self) -> bool:
        return not self.polylines

    @property
    def closed_count(self) -> int:
        return sum(self.closed)

    @property
    def vertices(self) -> np.ndarray:
        if not self.polylines:
            return np.empty((0, 2))
        return np.concatenate(self.polylines, axis=0)

    def curvature_sign_constant(self) -> bool:
        if self.samples is None or len(self.samples) == 0:
            return True
        pos = self.sample_det > self.sample_det_tol
        neg = self.sample_det < -self.sample_det_tol
        return not (pos.any() and neg.any())

    def max_concavity(self) -> tuple[float, int]:
        """Largest ``det / tol`` ratio over the samples (> 1 means a locally concave boundary)."""
        if self.samples is None or len(self.samples) == 0:
            return -math.inf, -1
        ratio = self.sample_det / self.sample_det_tol
        i = int(np.argmax(ratio))
        return float(ratio[i]), i

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "regular": self.regular,
            "components": self.components,
            "polylines": [[[float(x), float(y)] for x, y in pl] for pl in self.polylines],
            "closed": list(self.closed),
        }


def bordered_det(field: ScalarField2, x, y):
    """Determinant of ``[[fxx, fxy, fx], [fxy, fyy, fy], [fx, fy, 0]]``.

    Equals ``-(fxx fy^2 - 2 fxy fx fy + fyy fx^2)``; it is <= 0 where the
    sublevel set is locally convex (``-8`` for ``x^2 + y^2`` at ``(1, 0)``).
    """
    gx, gy = field.gradient(x, y)
    hxx, hxy, hyy = field.hessian(x, y)
    return -(hxx * gy * gy - 2.0 * hxy * gx * gy + hyy * gx * gx)


def _det_tolerance(field: ScalarField2, x, y, rel: float):
    gx, gy = field.gradient(x, y)
    hxx, hxy, hyy = field.hessian(x, y)
    hn = np.sqrt(hxx**2 + 2 * hxy**2 + hyy**2)
    return rel * (gx * gx + gy * gy) * np.maximum(hn, 1.0) + 1e-300


def curvature_sign(field: ScalarField2, p, regularity_tol: float = 1e-6) -> float:
    """Bordered-Hessian determinant at ``p``; negative means locally convex sublevel set."""
    gx, gy = field.gradient_at(p)
    if math.hypot(gx, gy) <= regularity_tol:
        raise CurvatureUndefinedError(f"gradient vanishes (|grad f| <= {regularity_tol}) at {tuple(p)}")
    return float(bordered_det(field, p[0], p[1]))


def _polish_vertices(field: ScalarField2, grid: GridSpec, rc: np.ndarray, c: float,
                     iters: int = 64) -> np.ndarray:
    """Bisection along the grid edge carrying each marching-squares vertex."""
    xc, yc = grid.xc, grid.yc
    r, col = rc[:, 0], rc[:, 1]
    on_row = np.abs(r - np.round(r)) < 1e-9
    # endpoints of the carrying edge
    r0 = np.where(on_row, np.round(r), np.floor(r)).astype(int)
    c0 = np.where(on_row, np.floor(col), np.round(col)).astype(int)
    r1 = np.where(on_row, r0, np.minimum(r0 + 1, grid.ny - 1))
    c1 = np.where(on_row, np.minimum(c0 + 1, grid.nx - 1), c0)
    ax, ay = xc[c0], yc[r0]
    bx, by = xc[c1], yc[r1]
    fa = field.value(ax, ay) - c
    fb = field.value(bx, by) - c
    t_lin = np.where(on_row, col - c0, r - r0)
    px = ax + t_lin * (bx - ax)
    py = ay + t_lin * (by - ay)
    bracket = (np.sign(fa) * np.sign(fb) <= 0) & ((c1 != c0) | (r1 != r0))
    lo = np.zeros_like(t_lin)
    hi = np.ones_like(t_lin)
    sa = np.sign(fa)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = field.value(ax + mid * (bx - ax), ay + mid * (by - ay)) - c
        same = np.sign(fm) == sa
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    t = np.where(fa == 0, 0.0, np.where(fb == 0, 1.0, 0.5 * (lo + hi)))
    qx = ax + t * (bx - ax)
    qy = ay + t * (by - ay)
    return np.stack([np.where(bracket, qx, px), np.where(bracket, qy, py)], axis=1)


def _project_to_level(field: ScalarField2, pts: np.ndarray, c: float, steps: int = 4):
    x, y = pts[:, 0].copy(), pts[:, 1].copy()
    for _ in range(steps):
        gx, gy = field.gradient(x, y)
        g2 = gx * gx + gy * gy
        r = field.value(x, y) - c
        with np.errstate(divide="ignore", invalid="ignore"):
            x = x - np.where(g2 > 0, r * gx / g2, 0.0)
            y = y - np.where(g2 > 0, r * gy / g2, 0.0)
    return np.stack([x, y], axis=1)


def _densify(field: ScalarField2, polylines, c: float, factor: int, max_move: float, curve_tol: float):
    pieces = []
    for pl in polylines:
        pieces.append(pl)
        if factor > 1 and len(pl) > 1:
            a, b = pl[:-1], pl[1:]
            for k in range(1, factor):
                t = k / factor
                pieces.append(_project_to_level(field, a + t * (b - a), c))
    pts = np.concatenate(pieces, axis=0) if pieces else np.empty((0, 2))
    if len(pts) == 0:
        return pts
    ok = np.isfinite(pts).all(axis=1) & (np.abs(field.value(pts[:, 0], pts[:, 1]) - c) <= curve_tol)
    if polylines:
        base = np.concatenate(polylines, axis=0)
        # drop projections that wandered off the polyline (possible near critical points)
        from scipy.spatial import cKDTree
        d, _ = cKDTree(base).query(pts)
        ok &= d <= max_move
    return pts[ok]


def level_curve(field: ScalarField2, c: float, grid: GridSpec, *, values: np.ndarray | None = None,
                curve_tol: float | None = None, regularity_tol: float = 1e-6,
                curvature_tol: float = 1e-9, densify: int = 4, crit_candidates: int = 8) -> LevelCurve:
    """Extract ``f^{-1}(c)`` inside the window.

    ``values`` may carry the precomputed cell-centre lattice of ``field``.
    ``curve_tol`` defaults to ``1e-9 * (1 + |c|)``.
    """
    if not math.isfinite(c):
        raise InvalidInputError("level must be finite")
    if curve_tol is None:
        curve_tol = 1e-9 * (1.0 + abs(c))
    if values is None:
        X, Y = grid.mesh()
        values = field.value(X, Y)
    raw = measure.find_contours(values, c)
    polylines = []
    closed = []
    for rc in raw:
        if len(rc) < 2:
            continue
        pts = _polish_vertices(field, grid, rc, c)
        is_closed = bool(np.all(rc[0] == rc[-1]))
        polylines.append(pts)
        closed.append(is_closed)
    if not polylines:
        return LevelCurve(c, (), (), True, 0, math.inf, (), grid,
                          np.empty((0, 2)), np.empty(0), np.empty(0))

    samples = _densify(field, polylines, c, densify, 2 * grid.cell_diagonal, max(curve_tol, 1e-12))
    if len(samples) == 0:
        samples = np.concatenate(polylines, axis=0)
    sgx, sgy = field.gradient(samples[:, 0], samples[:, 1])
    sgn = np.hypot(sgx, sgy)

    crit = _critical_on_level(field, grid, polylines, c, curve_tol, crit_candidates)
    min_grad = float(sgn.min())
    if crit:
        min_grad = min(min_grad, min(math.hypot(*field.gradient_at(p)) for p in crit))
    regular = (min_grad > regularity_tol) and not crit

    components = _count_components(polylines, crit, 2 * grid.cell_diagonal)

    # curvature only where the gradient is clearly nonzero
    keep = sgn > max(regularity_tol, 0.0)
    samples_c = samples[keep]
    det = bordered_det(field, samples_c[:, 0], samples_c[:, 1])
    dtol = _det_tolerance(field, samples_c[:, 0], samples_c[:, 1], curvature_tol)
    return LevelCurve(c, tuple(polylines), tuple(closed), bool(regular), components, min_grad,
                      tuple(crit), grid, samples_c, det, dtol)


def _critical_on_level(field, grid, polylines, c, curve_tol, n_candidates):
    """Critical points of ``f`` lying on the level, found by Newton from slow vertices."""
    cand = []
    for pl in polylines:
        gx, gy = field.gradient(pl[:, 0], pl[:, 1])
        gn = np.hypot(gx, gy)
        # local minima of |grad f| along the polyline
        left = np.r_[np.inf, gn[:-1]]
        right = np.r_[gn[1:], np.inf]
        idx = np.flatnonzero((gn <= left) & (gn <= right))
        for i in idx:
            cand.append((float(gn[i]), float(pl[i, 0]), float(pl[i, 1])))
    cand.sort()
    cand = cand[:n_candidates]
    if not cand:
        return []
    sx = np.array([p[1] for p in cand])
    sy = np.array([p[2] for p in cand])
    x, y, gn = _newton(field, sx, sy, 1e-10 * max(1.0, float(max(p[0] for p in cand))), 50,
                       max_step=4 * grid.cell_diagonal)
    verts = np.concatenate(polylines, axis=0)
    found: list[Point2] = []
    for xi, yi, gi, x0, y0 in zip(x, y, gn, sx, sy):
        if not (np.isfinite(xi) and np.isfinite(yi)) or gi > 1e-8 * max(1.0, abs(c)):
            continue
        if math.hypot(xi - x0, yi - y0) > 3 * grid.cell_diagonal:
            continue
        if abs(float(field.value(xi, yi)) - c) > max(curve_tol, 1e-12 * (1 + abs(c))):
            continue
        if np.min(np.hypot(verts[:, 0] - xi, verts[:, 1] - yi)) > 2 * grid.cell_diagonal:
            continue
        if all(math.hypot(xi - p.x, yi - p.y) > grid.cell_diagonal for p in found):
            found.append(Point2(float(xi), float(yi)))
    return found


def _count_components(polylines, crit, radius) -> int:
    """Polylines count separately unless they meet at a critical point on the level."""
    n = len(polylines)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for p in crit:
        near = [i for i, pl in enumerate(polylines)
                if np.min(np.hypot(pl[:, 0] - p.x, pl[:, 1] - p.y)) <= radius]
        for i in near[1:]:
            parent[find(i)] = find(near[0])
    return len({find(i) for i in range(n)})


@dataclass(frozen=True)
class LevelRecord:
    level: float
    nonempty: bool
    regular: bool
    components: int
    curvature_sign_constant: bool
    min_grad_norm: float

    @property
    def convex_regular(self) -> bool:
        """Nonempty, regular, and the boundary curvature never changes sign."""
        return self.nonempty and self.regular and self.curvature_sign_constant

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "nonempty": self.nonempty,
            "regular": self.regular,
            "components": self.components,
            "curvature_sign_constant": self.curvature_sign_constant,
            "min_grad_norm": self.min_grad_norm if math.isfinite(self.min_grad_norm) else None,
            "convex_regular": self.convex_regular,
        }


def classify_levels(field: ScalarField2, c_values, grid: GridSpec, workers: int = 1,
                    **curve_kw) -> list[LevelRecord]:
    X, Y = grid.mesh()
    values = field.value(X, Y)

    def one(c):
        curve = level_curve(field, float(c), grid, values=values, **curve_kw)
        if curve.empty:
            return LevelRecord(float(c), False, True, 0, True, math.inf)
        return LevelRecord(float(c), True, curve.regular, curve.components,
                           curve.curvature_sign_constant(), curve.min_grad_norm)

    c_values = list(c_values)
    if workers > 1 and len(c_values) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, c_values))
    return [one(c) for c in c_values]
