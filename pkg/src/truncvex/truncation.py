"""Truncations ``max(q, f)``, sampling-based convexity probes and threshold bisection.

The probes are falsifiers: ``convex`` means no violation turned up within the
sample budget.  Three kinds of evidence can refute convexity of a sublevel set:
a violating chord, two or more closed boundary loops, or a boundary point where
the bordered-Hessian determinant is positive.  Truncations are refuted by a
violating chord, by a non-PSD Hessian above the truncation level, or by a
nonconvex sublevel set.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import BracketError, InconclusiveError, InvalidInputError
from .field import GridSpec, Point2, ScalarField2, psd_mask, sym_eigvals
from .hess_region import region_max, psd_predicate
from .levels import level_curve, _project_to_level

CONVEX = "convex"
QUASICONVEX_ONLY = "quasiconvex_only"
NEITHER = "neither"

Predicate = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TruncatedField:
    base: ScalarField2
    q: float

    def __post_init__(self):
        if not math.isfinite(self.q):
            raise InvalidInputError("truncation level must be finite")

    def value(self, x, y):
        return np.maximum(self.q, self.base.value(x, y))

    def value_at(self, p) -> float:
        return float(self.value(p[0], p[1]))


def truncate(field: ScalarField2, q: float) -> TruncatedField:
    return TruncatedField(field, float(q))


@dataclass(frozen=True)
class ConvexityVerdict:
    kind: str
    counterexample: Optional[tuple[Point2, Point2, float]]
    samples_used: int
    level: float
    evidence: Optional[str] = None  # chord | topology | curvature | hessian | sublevel
    violation: Optional[float] = None
    empty: bool = False

    @property
    def convex(self) -> bool:
        return self.kind == CONVEX

    def to_dict(self) -> dict:
        ce = None
        if self.counterexample is not None:
            x, y, t = self.counterexample
            ce = {"x": x.as_list(), "y": y.as_list(), "t": t}
        return {
            "kind": self.kind,
            "level": self.level,
            "evidence": self.evidence,
            "violation": self.violation,
            "counterexample": ce,
            "samples_used": self.samples_used,
            "empty": self.empty,
        }


def default_violation_tol(values: np.ndarray) -> float:
    return 1e-7 * (1.0 + float(np.max(np.abs(values))))


def _level_seed(seed: int, level: float) -> np.random.Generator:
    bits = struct.unpack("<Q", struct.pack("<d", float(level)))[0]
    return np.random.default_rng(np.random.SeedSequence([seed, bits & 0xFFFFFFFF, bits >> 32]))


def _stratified(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    """``m`` parameters per row, one in each of the ``m`` equal strata of (0, 1)."""
    u = rng.uniform(0.0, 1.0, size=(n, m))
    u = np.clip(u, 1e-6, 1 - 1e-6)
    return (np.arange(m) + u) / m


class ConvexityProbe:
    """Shared lattice, tolerances and caches for repeated probes of one field on one window."""

    def __init__(self, field: ScalarField2, grid: GridSpec, *, pair_samples: int = 4000,
                 seg_samples: int = 3, seed: int = 0, violation_tol: float | None = None,
                 psd_slack: float = 1e-9, curvature_tol: float = 1e-9,
                 regularity_tol: float = 1e-6, curve_tol: float | None = None,
                 restrict: Predicate | None = None):
        if pair_samples < 1:
            raise InvalidInputError("pair_samples must be >= 1")
        if seg_samples < 3:
            raise InvalidInputError("seg_samples must be >= 3")
        self.field = field
        self.grid = grid
        self.pair_samples = int(pair_samples)
        self.seg_samples = int(seg_samples)
        self.seed = int(seed)
        self.psd_slack = psd_slack
        self.curvature_tol = curvature_tol
        self.regularity_tol = regularity_tol
        self.curve_tol = curve_tol
        self.restrict = restrict
        X, Y = grid.mesh()
        self.X, self.Y = X, Y
        self.values = field.value(X, Y)
        self.violation_tol = default_violation_tol(self.values) if violation_tol is None else violation_tol
        self.allowed = np.ones_like(self.values, dtype=bool) if restrict is None else \
            np.asarray(restrict(X, Y), dtype=bool)
        self._nonpsd = None
        self._lam_min = None
        self._sub_cache: dict[float, ConvexityVerdict] = {}
        self._trunc_cache: dict[float, ConvexityVerdict] = {}

    # -- sublevel sets ---------------------------------------------------

    def sublevel(self, r: float) -> ConvexityVerdict:
        r = float(r)
        if r not in self._sub_cache:
            self._sub_cache[r] = self._sublevel(r)
        return self._sub_cache[r]

    def _sublevel(self, r: float) -> ConvexityVerdict:
        f = self.field
        tol = self.violation_tol
        inside = (self.values <= r) & self.allowed
        curve = level_curve(f, r, self.grid, values=self.values, curve_tol=self.curve_tol,
                            regularity_tol=self.regularity_tol, curvature_tol=self.curvature_tol)
        verts = curve.vertices
        if len(verts) and self.restrict is not None:
            verts = verts[np.asarray(self.restrict(verts[:, 0], verts[:, 1]), dtype=bool)]
        pts = np.concatenate([np.stack([self.X[inside], self.Y[inside]], axis=1), verts], axis=0)
        if len(pts) == 0:
            return ConvexityVerdict(CONVEX, None, 0, r, empty=True)

        rng = _level_seed(self.seed, r)
        n, m = self.pair_samples, self.seg_samples
        i = rng.integers(0, len(pts), size=n)
        # half the pairs are boundary-to-boundary chords, which see shallow dents best
        if len(verts) >= 2:
            nb = n // 2
            off = len(pts) - len(verts)
            i[:nb] = off + rng.integers(0, len(verts), size=nb)
            j = rng.integers(0, len(pts), size=n)
            j[:nb] = off + rng.integers(0, len(verts), size=nb)
        else:
            j = rng.integers(0, len(pts), size=n)
        t = _stratified(rng, n, m)
        a, b = pts[i], pts[j]
        mx = a[:, None, 0] + t * (b[:, None, 0] - a[:, None, 0])
        my = a[:, None, 1] + t * (b[:, None, 1] - a[:, None, 1])
        excess = f.value(mx, my) - r
        if self.restrict is not None:
            excess = np.where(np.asarray(self.restrict(mx, my), dtype=bool), excess, np.inf)
        bad = excess > tol
        if bad.any():
            k = int(np.argmax(bad.any(axis=1)))
            s = int(np.argmax(bad[k]))
            v = float(excess[k, s])
            return ConvexityVerdict(NEITHER, (Point2(*a[k]), Point2(*b[k]), float(t[k, s])), n, r,
                                    "chord", v if math.isfinite(v) else None)

        loops = [pl for pl, c in zip(curve.polylines, curve.closed) if c and len(pl) > 3]
        if self.restrict is not None:
            loops = [pl for pl in loops if np.asarray(self.restrict(pl[:, 0], pl[:, 1])).all()]
        if len(loops) >= 2:
            ce, v = self._loops_chord(loops[0], loops[1], r)
            return ConvexityVerdict(NEITHER, ce, n, r, "topology", v)

        samples = curve.samples
        if samples is not None and len(samples):
            ratio = curve.sample_det / curve.sample_det_tol
            if self.restrict is not None:
                ratio = np.where(np.asarray(self.restrict(samples[:, 0], samples[:, 1])), ratio, -np.inf)
            k = int(np.argmax(ratio))
            if ratio[k] > 1.0:
                ce, v = self._dent_chord(samples[k], r)
                return ConvexityVerdict(NEITHER, ce, n, r, "curvature", v)
        return ConvexityVerdict(CONVEX, None, n, r)

    def _loops_chord(self, l1, l2, r):
        """Best violating chord between vertices of two boundary loops."""
        k1 = np.linspace(0, len(l1) - 1, min(len(l1), 16)).astype(int)
        k2 = np.linspace(0, len(l2) - 1, min(len(l2), 16)).astype(int)
        a = l1[k1][:, None, :]
        b = l2[k2][None, :, :]
        mid = 0.5 * (a + b)
        ex = self.field.value(mid[..., 0], mid[..., 1]) - r
        u, w = np.unravel_index(int(np.argmax(ex)), ex.shape)
        return (Point2(*l1[k1[u]]), Point2(*l2[k2[w]]), 0.5), float(ex[u, w])

    def _dent_chord(self, p, r):
        """Chord between two level points straddling a locally concave boundary point."""
        f = self.field
        gx, gy = f.gradient(p[0], p[1])
        tang = np.array([-float(gy), float(gx)]) / math.hypot(float(gx), float(gy))
        best = (None, -math.inf)
        for h in self.grid.cell_diagonal * 2.0 ** np.arange(-4, 5):
            ends = _project_to_level(f, np.stack([p + h * tang, p - h * tang]), r)
            if not np.isfinite(ends).all():
                continue
            mid = ends.mean(axis=0)
            v = float(f.value(mid[0], mid[1])) - r
            if v > best[1]:
                best = ((Point2(*ends[0]), Point2(*ends[1]), 0.5), v)
        return best

    # -- truncations -----------------------------------------------------

    def nonpsd_max(self):
        """``(value, point)`` of the largest ``f`` where the Hessian is not PSD, or None."""
        if self._nonpsd is None:
            hxx, hxy, hyy = self.field.hessian(self.X, self.Y)
            hxx, hxy, hyy = np.broadcast_arrays(hxx, hxy, hyy)
            cells = ~psd_mask(hxx, hxy, hyy, self.psd_slack) & self.allowed
            if not cells.any():
                self._nonpsd = (None,)
            else:
                psd = psd_predicate(self.field, self.psd_slack)
                _, _, val, pt = region_max(self.field, self.grid, cells,
                                           lambda x, y: ~np.asarray(psd(x, y)), values=self.values)
                self._nonpsd = (float(val), np.asarray(pt))
        return None if self._nonpsd[0] is None else self._nonpsd

    def truncation(self, q: float) -> ConvexityVerdict:
        """Verdict for ``max(q, f)``; a failing truncation is further split into
        ``quasiconvex_only`` and ``neither``."""
        v = self.truncation_raw(q)
        if v.convex or v.evidence == "sublevel":
            return v
        kind = QUASICONVEX_ONLY if self.quasiconvex_from(q) else NEITHER
        return ConvexityVerdict(kind, v.counterexample, v.samples_used, v.level, v.evidence, v.violation)

    def truncation_raw(self, q: float) -> ConvexityVerdict:
        """Verdict without the quasiconvex split (failures are reported as ``neither``)."""
        q = float(q)
        if q not in self._trunc_cache:
            self._trunc_cache[q] = self._truncation(q)
        return self._trunc_cache[q]

    def _truncation(self, q: float) -> ConvexityVerdict:
        f = self.field
        tol = self.violation_tol
        g = self.grid
        rng = _level_seed(self.seed ^ 0x5F3759DF, q)
        n = self.pair_samples
        ax = rng.uniform(g.x_min, g.x_max, size=n)
        ay = rng.uniform(g.y_min, g.y_max, size=n)
        bx = rng.uniform(g.x_min, g.x_max, size=n)
        by = rng.uniform(g.y_min, g.y_max, size=n)
        stu = _stratified(rng, n, 3) * 1.0
        s, t, u = stu[:, 0], stu[:, 1], stu[:, 2]
        T = truncate(f, q)

        def at(w):
            return T.value(ax + w * (bx - ax), ay + w * (by - ay))

        ts, tt, tu = at(s), at(t), at(u)
        tau = (t - s) / (u - s)
        excess = tt - ((1 - tau) * ts + tau * tu)
        if self.restrict is not None:
            ok = np.ones(n, dtype=bool)
            for w in (s, t, u):
                ok &= np.asarray(self.restrict(ax + w * (bx - ax), ay + w * (by - ay)), dtype=bool)
            excess = np.where(ok, excess, -np.inf)
        bad = excess > tol
        if bad.any():
            k = int(np.argmax(bad))
            xs = Point2(ax[k] + s[k] * (bx[k] - ax[k]), ay[k] + s[k] * (by[k] - ay[k]))
            xu = Point2(ax[k] + u[k] * (bx[k] - ax[k]), ay[k] + u[k] * (by[k] - ay[k]))
            return ConvexityVerdict(NEITHER, (xs, xu, float(tau[k])), n, q, "chord",
                                    float(excess[k]))

        top = self.nonpsd_max()
        if top is not None and top[0] > q:
            ce, v = self._eigen_chord(top[1], q)
            alt = self._most_concave_above(q)
            if alt is not None:
                ce2, v2 = self._eigen_chord(alt, q)
                if v2 > v:
                    ce, v = ce2, v2
            return ConvexityVerdict(NEITHER, ce, n, q, "hessian", v)

        sub = self.sublevel(q)
        if not sub.convex:
            return ConvexityVerdict(NEITHER, sub.counterexample, n, q, "sublevel", sub.violation)
        return ConvexityVerdict(CONVEX, None, n, q)

    def _most_concave_above(self, q):
        """Lattice point with ``f > q`` and the most negative Hessian eigenvalue."""
        if self._lam_min is None:
            hxx, hxy, hyy = np.broadcast_arrays(*self.field.hessian(self.X, self.Y))
            self._lam_min = sym_eigvals(hxx, hxy, hyy)[0]
        lam = np.where((self.values > q) & self.allowed, self._lam_min, np.inf)
        k = int(np.argmin(lam))
        if not lam.flat[k] < 0:
            return None
        return np.array([self.X.flat[k], self.Y.flat[k]])

    def quasiconvex_from(self, q: float, probe_levels: int = 8) -> bool:
        """Sublevel sets at ``q`` and a ladder up to the window maximum all pass."""
        top = float(self.values.max())
        if q >= top:
            return True
        ladder = [q + k * (top - q) / probe_levels for k in range(probe_levels)]
        return all(self.sublevel(r).convex for r in ladder)

    def _eigen_chord(self, p, q):
        """Symmetric chord along the most negative Hessian direction at ``p``."""
        f = self.field
        H = f.hessian_at(p)
        _, v = np.linalg.eigh(H.to_array())
        d = v[:, 0]
        T = truncate(f, q)
        best = (None, -math.inf)
        for h in self.grid.cell_diagonal * 2.0 ** np.arange(-6, 4):
            a = p + h * d
            b = p - h * d
            ex = T.value_at(p) - 0.5 * (T.value_at(a) + T.value_at(b))
            if ex > best[1]:
                best = ((Point2(*a), Point2(*b), 0.5), float(ex))
        return best


def sublevel_convex(field: ScalarField2, r: float, grid: GridSpec, pair_samples: int = 4000,
                    seg_samples: int = 3, **kw) -> ConvexityVerdict:
    """Probe convexity of ``{f <= r}`` inside the window."""
    return ConvexityProbe(field, grid, pair_samples=pair_samples, seg_samples=seg_samples,
                          **kw).sublevel(r)


def truncation_convex(field: ScalarField2, q: float, grid: GridSpec, pair_samples: int = 4000,
                      seg_samples: int = 3, **kw) -> ConvexityVerdict:
    """Probe convexity of ``max(q, f)`` inside the window."""
    return ConvexityProbe(field, grid, pair_samples=pair_samples, seg_samples=seg_samples,
                          **kw).truncation(q)


# -- threshold bisection -------------------------------------------------


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    at_lower_end: bool = False  # the lower end already passed: threshold <= lo, possibly -inf
    steps: int = 0

    def __iter__(self):
        yield self.lo
        yield self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, v: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= v <= self.hi + slack

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "at_lower_end": self.at_lower_end, "steps": self.steps}


def _window_extreme(field: ScalarField2, grid: GridSpec, values: np.ndarray | None, sign: float) -> float:
    if values is None:
        X, Y = grid.mesh()
        values = field.value(X, Y)
    k = int(np.argmin(sign * values))
    row, col = np.unravel_index(k, values.shape)
    x0 = np.array([grid.xc[col], grid.yc[row]])

    def fun(p):
        gx, gy = field.gradient(p[0], p[1])
        return sign * float(field.value(p[0], p[1])), sign * np.array([float(gx), float(gy)])

    res = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B",
                            bounds=[(grid.x_min, grid.x_max), (grid.y_min, grid.y_max)])
    return sign * min(sign * float(values[row, col]), float(res.fun))


def window_min(field: ScalarField2, grid: GridSpec, values: np.ndarray | None = None) -> float:
    """Minimum of ``f`` over the window: lattice minimum refined by bounded L-BFGS."""
    return _window_extreme(field, grid, values, 1.0)


def window_max(field: ScalarField2, grid: GridSpec, values: np.ndarray | None = None) -> float:
    return _window_extreme(field, grid, values, -1.0)


def _bisect(test: Callable[[float], bool], lo: float, hi: float, bisect_tol: float,
            probe_levels: int, workers: int, scan: np.ndarray | None = None) -> Bracket:
    """Shrink ``[lo, hi]`` around the smallest level from which every ladder rung passes.

    ``scan`` levels (inside the bracket) are tried from the top down first; the
    highest failure and the scan level above it become the bisection bracket.
    This keeps a wide bracket from letting the ladder step over a failing band.
    """
    cache: dict[float, bool] = {}

    def run(levels):
        todo = [r for r in levels if r not in cache]
        if workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for r, ok in zip(todo, pool.map(test, todo)):
                    cache[r] = ok
        else:
            for r in todo:
                cache[r] = test(r)
        return all(cache[r] for r in levels)

    def passes(q, top):
        step = (top - q) / probe_levels
        return run([q + k * step for k in range(probe_levels + 1)])

    if not run([hi]):
        raise BracketError(f"upper end {hi!r} fails the probe; widen the bracket")
    if scan is not None:
        above = hi
        for r in sorted((float(v) for v in scan if lo < v < hi), reverse=True):
            if not run([r]):
                lo, hi = r, above
                break
            above = r
    if passes(lo, hi):
        return Bracket(lo, lo, True, 0)
    steps = 0
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        if passes(mid, hi):
            hi = mid
        else:
            lo = mid
        steps += 1
    return Bracket(lo, hi, False, steps)


def scan_levels(values: np.ndarray, count: int = 64) -> np.ndarray:
    """Quantiles of the lattice values: dense where the field spends its area."""
    return np.unique(np.quantile(values, np.linspace(0.0, 1.0, count + 1)[1:-1]))


def _effective_lo(probe: ConvexityProbe, lo: float) -> float:
    return max(float(lo), window_min(probe.field, probe.grid, probe.values))


def estimate_sql(field: ScalarField2, bracket, grid: GridSpec, bisect_tol: float = 1e-2, *,
                 probe_levels: int = 8, workers: int = 1, probe: ConvexityProbe | None = None,
                 scan_count: int = 64, **probe_kw) -> Bracket:
    """Bracket the smallest level from which every truncation is quasiconvex."""
    lo, hi = bracket
    _check_bracket(lo, hi, bisect_tol)
    probe = probe or ConvexityProbe(field, grid, **probe_kw)
    lo = _effective_lo(probe, lo)
    if lo >= hi:
        lo = hi
    _require_nonempty(probe, hi)
    return _bisect(lambda r: probe.sublevel(r).convex, lo, float(hi), bisect_tol, probe_levels, workers,
                   scan_levels(probe.values[probe.allowed], scan_count) if scan_count else None)


def estimate_scl(field: ScalarField2, bracket, grid: GridSpec, bisect_tol: float = 1e-2, *,
                 probe_levels: int = 8, workers: int = 1, probe: ConvexityProbe | None = None,
                 scan_count: int = 64, **probe_kw) -> Bracket:
    """Bracket the smallest level from which every truncation is convex."""
    lo, hi = bracket
    _check_bracket(lo, hi, bisect_tol)
    probe = probe or ConvexityProbe(field, grid, **probe_kw)
    lo = _effective_lo(probe, lo)
    if lo >= hi:
        lo = hi
    _require_nonempty(probe, hi)
    return _bisect(lambda r: probe.truncation_raw(r).convex, lo, float(hi), bisect_tol, probe_levels, workers,
                   scan_levels(probe.values[probe.allowed], scan_count) if scan_count else None)


def _check_bracket(lo, hi, tol):
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise InvalidInputError(f"bracket must satisfy lo < hi, got ({lo}, {hi})")
    if not tol > 0:
        raise InvalidInputError("bisect_tol must be > 0")


def _require_nonempty(probe: ConvexityProbe, hi: float):
    if not ((probe.values <= hi) & probe.allowed).any():
        raise InconclusiveError(f"sublevel set at {hi!r} is empty on the window; nothing to probe")


# -- subdifferential -----------------------------------------------------

SINGLETON_GRAD = "singleton_grad"
SEGMENT = "segment_0_to_grad"
SINGLETON_ZERO = "singleton_zero"


@dataclass(frozen=True)
class Subdifferential:
    kind: str
    grad: tuple[float, float]

    def contains(self, v, tol: float = 1e-12) -> bool:
        v = np.asarray(v, dtype=float)
        g = np.asarray(self.grad, dtype=float)
        if self.kind == SINGLETON_ZERO:
            return bool(np.linalg.norm(v) <= tol)
        if self.kind == SINGLETON_GRAD:
            return bool(np.linalg.norm(v - g) <= tol)
        gg = float(g @ g)
        t = 0.0 if gg == 0 else float(np.clip(v @ g / gg, 0.0, 1.0))
        return bool(np.linalg.norm(v - t * g) <= tol)


def subdifferential_of_truncation(field: ScalarField2, q: float, p, tol: float = 1e-9) -> Subdifferential:
    if not math.isfinite(q):
        raise InvalidInputError("q must be finite")
    fp = field.value_at(p)
    g = tuple(float(v) for v in field.gradient_at(p))
    if fp > q + tol:
        return Subdifferential(SINGLETON_GRAD, g)
    if fp < q - tol:
        return Subdifferential(SINGLETON_ZERO, (0.0, 0.0))
    return Subdifferential(SEGMENT, g)


# -- report --------------------------------------------------------------


@dataclass(frozen=True)
class LevelThresholdReport:
    sql_bracket: Bracket
    scl_bracket: Bracket
    h_max: Optional[float]
    nu_max: float
    inequalities: dict = dc_field(default_factory=dict)
    window: Optional[GridSpec] = None
    bisect_tol: float = 1e-2

    @property
    def inequalities_ok(self) -> bool:
        return all(v is not False for v in self.inequalities.values())

    def to_dict(self) -> dict:
        return {
            "sql_bracket": self.sql_bracket.to_dict(),
            "scl_bracket": self.scl_bracket.to_dict(),
            "h_max": self.h_max,
            "nu_max": self.nu_max if math.isfinite(self.nu_max) else None,
            "bisect_tol": self.bisect_tol,
            "inequalities": dict(self.inequalities),
            "inequalities_ok": self.inequalities_ok,
        }


__all__ = [
    "Bracket", "ConvexityProbe", "ConvexityVerdict", "LevelThresholdReport", "Subdifferential",
    "TruncatedField", "estimate_scl", "estimate_sql", "sublevel_convex", "subdifferential_of_truncation",
    "sym_eigvals", "truncate", "truncation_convex", "window_max", "window_min",
]
