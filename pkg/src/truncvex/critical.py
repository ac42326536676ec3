"""Critical points inside the window: seeded Newton, clustering, Morse classification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError
from .field import GridSpec, Point2, ScalarField2, SymMat2, pd_mask, sym_eigvals


@dataclass(frozen=True)
class CriticalPoint:
    location: Point2
    value: float
    grad_norm: float
    morse_index: Optional[int]  # None when degenerate
    in_hess_plus: bool

    @property
    def degenerate(self) -> bool:
        return self.morse_index is None

    def to_dict(self) -> dict:
        return {
            "location": self.location.as_list(),
            "value": self.value,
            "grad_norm": self.grad_norm,
            "morse_index": self.morse_index,
            "degenerate": self.degenerate,
            "in_hess_plus": self.in_hess_plus,
        }


@dataclass(frozen=True)
class CriticalSetReport:
    points: tuple[CriticalPoint, ...]
    nu_max: float
    window: GridSpec
    seeds_used: int
    seeds_discarded: int
    dedup_radius: float
    newton_tol: float

    def to_dict(self) -> dict:
        return {
            "points": [p.to_dict() for p in self.points],
            "nu_max": self.nu_max if math.isfinite(self.nu_max) else None,
            "seeds_used": self.seeds_used,
            "seeds_discarded": self.seeds_discarded,
            "dedup_radius": self.dedup_radius,
            "newton_tol": self.newton_tol,
        }


def morse_index(field: ScalarField2, p, degen_tol: float = 1e-9) -> Optional[int]:
    """Number of negative Hessian eigenvalues, or None if ``|det| <= degen_tol * |H|_F^2``."""
    H = field.hessian_at(p)
    return _index_from_hessian(H, degen_tol)


def _index_from_hessian(H: SymMat2, degen_tol: float, floor2: float = 0.0) -> Optional[int]:
    # floor2 keeps a vanishing Hessian (all entries small together) from looking regular
    norm2 = max(H.frobenius() ** 2, floor2)
    if abs(H.det) <= degen_tol * norm2 or norm2 == 0.0:
        return None
    lo, hi = H.eigvalsh()
    return int(lo < 0) + int(hi < 0)


def _seed_cells(gnorm: np.ndarray, fraction: float) -> np.ndarray:
    """Lowest ``fraction`` of raster gradient norms plus strict 3x3 local minima."""
    thresh = np.quantile(gnorm, fraction)
    low = gnorm <= thresh
    padded = np.pad(gnorm, 1, mode="constant", constant_values=np.inf)
    fp = np.ones((3, 3), dtype=bool)
    fp[1, 1] = False
    neigh_min = ndimage.minimum_filter(padded, footprint=fp, mode="constant", cval=np.inf)[1:-1, 1:-1]
    strict_min = gnorm < neigh_min
    return low | strict_min


def _newton(field: ScalarField2, x: np.ndarray, y: np.ndarray, tol: float, max_iters: int,
            max_step: float):
    """Vectorised Newton on grad f = 0.

    Seeds with a near-singular Hessian take a damped Gauss-Newton step on
    ``|grad f|^2`` instead.
    """
    x = x.copy()
    y = y.copy()
    done = np.zeros(x.shape, dtype=bool)
    for _ in range(max_iters):
        act = ~done
        if not act.any():
            break
        xa, ya = x[act], y[act]
        gx, gy = field.gradient(xa, ya)
        hxx, hxy, hyy = field.hessian(xa, ya)
        gn = np.hypot(gx, gy)
        conv = gn <= tol
        det = hxx * hyy - hxy * hxy
        norm2 = hxx**2 + 2 * hxy**2 + hyy**2
        regular = np.abs(det) > 1e-10 * np.maximum(norm2, 1e-300)
        with np.errstate(divide="ignore", invalid="ignore"):
            sx = np.where(regular, -(hyy * gx - hxy * gy) / det, 0.0)
            sy = np.where(regular, -(-hxy * gx + hxx * gy) / det, 0.0)
            # damped descent on |g|^2 / 2: (H^2 + mu I) s = -H g
            mu = 1e-3 * norm2 + 1e-12
            a11 = hxx * hxx + hxy * hxy + mu
            a12 = hxx * hxy + hxy * hyy
            a22 = hxy * hxy + hyy * hyy + mu
            bx = -(hxx * gx + hxy * gy)
            by = -(hxy * gx + hyy * gy)
            d2 = a11 * a22 - a12 * a12
            lx = (a22 * bx - a12 * by) / d2
            ly = (-a12 * bx + a11 * by) / d2
        sx = np.where(regular, sx, lx)
        sy = np.where(regular, sy, ly)
        sn = np.hypot(sx, sy)
        scale = np.where(sn > max_step, max_step / np.maximum(sn, 1e-300), 1.0)
        sx = np.where(conv, 0.0, np.nan_to_num(sx * scale))
        sy = np.where(conv, 0.0, np.nan_to_num(sy * scale))
        x[act] = xa + sx
        y[act] = ya + sy
        idx = np.flatnonzero(act)
        done[idx[conv]] = True
    gx, gy = field.gradient(x, y)
    return x, y, np.hypot(gx, gy)


def _polish(field: ScalarField2, p: np.ndarray, steps: int = 200) -> np.ndarray:
    """Plain Newton steps at a converged point while the gradient keeps shrinking.

    A regular root stalls after a step or two; a degenerate root converges only
    linearly, and the extra steps bring its Hessian close enough to singular for
    the determinant test to flag it.
    """
    best = p.copy()
    gx, gy = field.gradient(best[0], best[1])
    best_n = math.hypot(float(gx), float(gy))
    q = best.copy()
    for _ in range(steps):
        if best_n == 0.0:
            break
        gx, gy = field.gradient(q[0], q[1])
        H = field.hessian_at(q)
        if H.det == 0.0:
            break
        q = q - np.linalg.solve(H.to_array(), np.array([float(gx), float(gy)]))
        gx, gy = field.gradient(q[0], q[1])
        n = math.hypot(float(gx), float(gy))
        if not n < best_n:
            break
        best, best_n = q.copy(), n
    return best


def find_critical_points(field: ScalarField2, grid: GridSpec, newton_tol: float = 1e-9,
                         max_iters: int = 60, dedup_radius: float | None = None,
                         seed_fraction: float = 0.05, degen_tol: float = 1e-9,
                         pd_eps: float = 0.0) -> CriticalSetReport:
    """Locate critical points of ``field`` inside ``grid``'s window.

    Newton runs from every seed cell; converged points are clustered within
    ``dedup_radius`` (default two cell diagonals), keeping the point with the
    smallest gradient norm.  Roots that leave the window are discarded.
    """
    if not (newton_tol > 0):
        raise InvalidInputError("newton_tol must be > 0")
    if dedup_radius is None:
        dedup_radius = 2 * grid.cell_diagonal
    X, Y = grid.mesh()
    gx, gy = field.gradient(X, Y)
    seeds = _seed_cells(np.hypot(gx, gy), seed_fraction)
    hxx, hxy, hyy = field.hessian(X, Y)
    floor2 = float(np.median(hxx**2 + 2 * hxy**2 + hyy**2))
    sx, sy = X[seeds], Y[seeds]
    x, y, gn = _newton(field, sx, sy, newton_tol, max_iters, max_step=0.1 * grid.diagonal)
    ok = (gn <= newton_tol) & grid.contains(x, y) & np.isfinite(x) & np.isfinite(y)
    seeds_used = int(sx.size)
    discarded = int((~ok).sum())

    # deterministic clustering over the location-sorted converged list
    cx, cy, cg = x[ok], y[ok], gn[ok]
    order = np.lexsort((cy, cx))
    reps: list[list] = []  # [x, y, gnorm]
    for i in order:
        px, py, pg = float(cx[i]), float(cy[i]), float(cg[i])
        for r in reps:
            if math.hypot(px - r[0], py - r[1]) < dedup_radius:
                if pg < r[2]:
                    r[0], r[1], r[2] = px, py, pg
                break
        else:
            reps.append([px, py, pg])

    points = []
    for px, py, _ in sorted(reps, key=lambda r: (r[0], r[1])):
        q = _polish(field, np.array([px, py]))
        if not bool(grid.contains(q[0], q[1])):
            q = np.array([px, py])
        loc = Point2(*q)
        g = field.gradient_at(loc)
        H = field.hessian_at(loc)
        points.append(CriticalPoint(
            location=loc,
            value=field.value_at(loc),
            grad_norm=math.hypot(*g),
            morse_index=_index_from_hessian(H, degen_tol, floor2),
            in_hess_plus=bool(pd_mask(H.a11, H.a12, H.a22, pd_eps)),
        ))
    return CriticalSetReport(
        points=tuple(points),
        nu_max=nu_max_of(points),
        window=grid,
        seeds_used=seeds_used,
        seeds_discarded=discarded,
        dedup_radius=dedup_radius,
        newton_tol=newton_tol,
    )


def nu_max_of(points) -> float:
    return max((p.value for p in points), default=-math.inf)


def nu_max(report: CriticalSetReport) -> float:
    """Largest critical value; ``-inf`` when no critical point was found."""
    return nu_max_of(report.points)


__all__ = [
    "CriticalPoint", "CriticalSetReport", "find_critical_points", "morse_index", "nu_max",
    "sym_eigvals",
]
