"""Injectivity of the gradient map: collision scans, monotonicity, valence bounds.

A collision is a pair of well-separated points with (numerically) the same
gradient.  Random samples almost never hit an exact collision, so the scan
looks for near neighbours in gradient space and then closes the gap with a
two-point Newton solve on ``grad f(p2) = grad f(p1)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .cassini import axis_grad_norm_sq, cassini_field
from .critical import CriticalSetReport
from .errors import DomainError, InvalidInputError
from .field import GridSpec, Point2, ScalarField2
from .hess_region import RegionMask
from .levels import level_curve

log = logging.getLogger(__name__)

NO_COLLISION = "no_collision_found"
COLLISIONS = "collisions_found"


@dataclass(frozen=True)
class CollisionPair:
    p1: Point2
    p2: Point2
    grad_image: tuple[float, float]
    separation: float
    image_tol: float
    image_gap: float
    level_polished: bool = False

    def to_dict(self) -> dict:
        return {
            "p1": self.p1.as_list(),
            "p2": self.p2.as_list(),
            "grad_image": list(self.grad_image),
            "separation": self.separation,
            "image_gap": self.image_gap,
            "image_tol": self.image_tol,
            "level_polished": self.level_polished,
        }


@dataclass(frozen=True)
class InjectivityReport:
    region_tag: str
    samples: int
    collisions: tuple[CollisionPair, ...]
    collision_count: int
    raw_hits: int
    valence_lower_bound: int
    image_tol: float
    min_separation: float
    raw_hits_capped: bool = False

    @property
    def verdict(self) -> str:
        return COLLISIONS if self.collision_count else NO_COLLISION

    def to_dict(self) -> dict:
        return {
            "region_tag": self.region_tag,
            "samples": self.samples,
            "verdict": self.verdict,
            "collision_count": self.collision_count,
            "raw_hits": self.raw_hits,
            "raw_hits_capped": self.raw_hits_capped,
            "valence_lower_bound": self.valence_lower_bound,
            "image_tol": self.image_tol,
            "min_separation": self.min_separation,
            "collisions": [c.to_dict() for c in self.collisions],
        }


def sample_region(region: RegionMask, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` jittered points in true cells that also satisfy the region predicate."""
    g = region.grid
    rows, cols = np.nonzero(region.cells)
    if rows.size == 0:
        raise InvalidInputError("region has no true cells")
    out = []
    have = 0
    for _ in range(20):
        k = rng.integers(0, rows.size, size=n)
        x = g.xc[cols[k]] + rng.uniform(-0.5, 0.5, size=n) * g.dx
        y = g.yc[rows[k]] + rng.uniform(-0.5, 0.5, size=n) * g.dy
        ok = np.asarray(region.contains(x, y), dtype=bool)
        pts = np.stack([x[ok], y[ok]], axis=1)
        out.append(pts)
        have += len(pts)
        if have >= n:
            break
    return np.concatenate(out, axis=0)[:n]


def _hash_hits(img: np.ndarray, pts: np.ndarray, image_tol: float, min_sep: float,
               max_hits: int) -> tuple[np.ndarray, bool]:
    """Pairs within ``image_tol`` in gradient space: buckets of side ``image_tol``, 3x3 neighbourhood.

    Stops after ``max_hits`` pairs (a gradient constant along whole curves would
    otherwise produce quadratically many); the flag says whether it stopped early.
    """
    keys = np.floor(img / image_tol).astype(np.int64)
    buckets: dict[tuple[int, int], list[int]] = {}
    for i, key in enumerate(map(tuple, keys.tolist())):
        buckets.setdefault(key, []).append(i)
    hits = []
    for (kx, ky) in sorted(buckets):
        members = buckets[(kx, ky)]
        near = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                near.extend(buckets.get((kx + dx, ky + dy), ()))
        near = np.array(near)
        for i in members:
            j = near[near > i]
            if j.size == 0:
                continue
            d_img = np.hypot(*(img[j] - img[i]).T)
            d_pt = np.hypot(*(pts[j] - pts[i]).T)
            for jj in j[(d_img <= image_tol) & (d_pt >= min_sep)]:
                hits.append((i, int(jj)))
            if len(hits) >= max_hits:
                return np.array(sorted(hits[:max_hits]), dtype=int).reshape(-1, 2), True
    return np.array(sorted(hits), dtype=int).reshape(-1, 2), False


def _grad(field, p):
    gx, gy = field.gradient(p[0], p[1])
    return np.array([float(gx), float(gy)])


def _hess(field, p):
    return field.hessian_at(p).to_array()


def polish_partner(field: ScalarField2, p1, p2, region: RegionMask, iters: int = 30,
                   tol: float = 1e-12):
    """Newton on ``grad f(p2) = grad f(p1)`` with ``p1`` fixed; None if it leaves the region."""
    with np.errstate(all="ignore"):
        return _polish_partner(field, p1, p2, region, iters, tol)


def _polish_partner(field, p1, p2, region, iters, tol):
    target = _grad(field, p1)
    q = np.asarray(p2, dtype=float).copy()
    scale = max(1.0, float(np.abs(target).max()))
    for _ in range(iters):
        r = _grad(field, q) - target
        if np.linalg.norm(r) <= tol * scale:
            break
        H = _hess(field, q)
        try:
            step = np.linalg.solve(H, r)
        except np.linalg.LinAlgError:
            return None
        q = q - step
        if not (np.isfinite(q).all() and bool(region.contains(q[0], q[1]))):
            return None
    return q


def polish_level_pair(field: ScalarField2, p1, p2, region: RegionMask, iters: int = 30):
    """Newton on ``[grad f(p1) - grad f(p2) = 0, f(p1) = f(p2) = c*]`` with ``c*`` the start mean."""
    with np.errstate(all="ignore"):
        return _polish_level_pair(field, p1, p2, region, iters)


def _polish_level_pair(field, p1, p2, region, iters):
    c = 0.5 * (field.value_at(p1) + field.value_at(p2))
    z = np.concatenate([np.asarray(p1, float), np.asarray(p2, float)])

    def resid(z):
        a, b = z[:2], z[2:]
        return np.concatenate([_grad(field, a) - _grad(field, b),
                               [field.value_at(a) - c, field.value_at(b) - c]])

    for _ in range(iters):
        r = resid(z)
        a, b = z[:2], z[2:]
        J = np.zeros((4, 4))
        J[:2, :2] = _hess(field, a)
        J[:2, 2:] = -_hess(field, b)
        J[2, :2] = _grad(field, a)
        J[3, 2:] = _grad(field, b)
        try:
            z = z - np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            return None
        if not np.isfinite(z).all():
            return None
        if np.linalg.norm(resid(z)) <= 1e-12 * max(1.0, abs(c)):
            break
    a, b = z[:2], z[2:]
    if not (bool(region.contains(a[0], a[1])) and bool(region.contains(b[0], b[1]))):
        return None
    return a, b


def gradient_collision_scan(field: ScalarField2, region: RegionMask, samples: int = 200_000,
                            image_tol: float = 1e-4, min_separation: float | None = None, *,
                            seed: int = 0, candidates: int = 200, neighbours: int = 4,
                            max_report: int = 20) -> InjectivityReport:
    """Falsification scan for injectivity of ``grad f`` on ``region``.

    Exact hash hits (image distance <= ``image_tol``) always count.  In
    addition the ``candidates`` closest separated image-space neighbours are
    polished by Newton and count when the polished gap is within ``image_tol``.
    """
    if not image_tol > 0:
        raise InvalidInputError("image_tol must be > 0")
    if samples < 2:
        raise InvalidInputError("samples must be >= 2")
    g = region.grid
    if min_separation is None:
        min_separation = 4 * g.cell_diagonal
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6A09E667]))
    pts = sample_region(region, samples, rng)
    gx, gy = field.gradient(pts[:, 0], pts[:, 1])
    img = np.stack([np.broadcast_to(gx, pts[:, 0].shape), np.broadcast_to(gy, pts[:, 0].shape)], axis=1)

    raw, truncated = _hash_hits(img, pts, image_tol, min_separation, max(candidates, 1))

    # separated near neighbours in image space
    tree = cKDTree(img)
    k = min(neighbours + 1, len(pts))
    d, idx = tree.query(img, k=k)
    cand = []
    for col in range(1, k):
        j = idx[:, col]
        sep = np.hypot(*(pts[j] - pts).T)
        ok = (sep >= min_separation) & (np.arange(len(pts)) < j)
        for i in np.flatnonzero(ok):
            cand.append((float(d[i, col]), int(i), int(j[i])))
    # the closest images overall sit near folds with small separation; spread the
    # polishing budget over geometric separation bands so far-apart pairs get a turn
    bands: dict[int, list] = {}
    for dist, i, j in cand:
        sep = float(np.hypot(*(pts[j] - pts[i])))
        b = min(int(math.log2(sep / min_separation)), 5)
        bands.setdefault(b, []).append((dist, i, j))
    per_band = max(1, candidates // 6)
    chosen = []
    for b in sorted(bands):
        chosen.extend(sorted(bands[b])[:per_band])
    pairs = [tuple(h) for h in raw.tolist()] + [(i, j) for _, i, j in chosen]

    found: list[CollisionPair] = []
    raw_pairs = {tuple(r) for r in raw.tolist()}
    seen = set()
    for i, j in pairs:
        if (i, j) in seen:
            continue
        seen.add((i, j))
        p1 = pts[i]
        q = polish_partner(field, p1, pts[j], region)
        if q is None:
            if (i, j) in raw_pairs:
                q = pts[j]
            else:
                continue
        sep = float(np.hypot(*(q - p1)))
        gap = float(np.linalg.norm(_grad(field, q) - _grad(field, p1)))
        if sep < min_separation or gap > image_tol:
            continue
        a, b, polished = p1, q, False
        lv = polish_level_pair(field, p1, q, region)
        if lv is not None:
            a2, b2 = lv
            gap2 = float(np.linalg.norm(_grad(field, a2) - _grad(field, b2)))
            if np.hypot(*(a2 - b2)) >= min_separation and gap2 <= image_tol:
                a, b, polished, gap = a2, b2, True, gap2
        if tuple(b) < tuple(a):
            a, b = b, a
        im = _grad(field, a)
        found.append(CollisionPair(Point2(*a), Point2(*b), (float(im[0]), float(im[1])),
                                   float(np.hypot(*(a - b))), image_tol, gap, polished))

    found = _dedupe(found, min_separation)
    mult = _multiplicity(found, min_separation)
    # equal-level witnesses are the most legible, so they win the report slots
    keep = sorted(found, key=lambda c: (not c.level_polished, c.grad_image, c.p1.x, c.p1.y))[:max_report]
    keep.sort(key=lambda c: (c.grad_image[0], c.grad_image[1], c.p1.x, c.p1.y))
    return InjectivityReport(region.property_tag, int(len(pts)), tuple(keep), len(found),
                             int(len(raw)), mult, image_tol, min_separation, truncated)


def _dedupe(found, radius):
    out: list[CollisionPair] = []
    for c in sorted(found, key=lambda c: (c.p1.x, c.p1.y, c.p2.x, c.p2.y)):
        if any(c.p1.dist(o.p1) < radius and c.p2.dist(o.p2) < radius for o in out):
            continue
        out.append(c)
    return out


def _multiplicity(found, radius) -> int:
    """Largest number of distinct preimages sharing one image among the collisions."""
    best = 1
    for c in found:
        pre = [c.p1, c.p2]
        for o in found:
            if math.dist(o.grad_image, c.grad_image) <= 2 * c.image_tol:
                for p in (o.p1, o.p2):
                    if all(p.dist(r) >= radius for r in pre):
                        pre.append(p)
        best = max(best, len(pre))
    return best


def level_value_collisions(field: ScalarField2, region: RegionMask, samples: int = 20_000,
                           tol: float = 1e-6, min_separation: float = 0.05, seed: int = 0,
                           limit: int = 10) -> list[tuple[Point2, Point2, float]]:
    """Separated pairs with equal values of ``f`` (non-injectivity of ``f`` itself)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBB67AE85]))
    pts = sample_region(region, samples, rng)
    v = field.value(pts[:, 0], pts[:, 1])
    order = np.argsort(v, kind="stable")
    out = []
    for a, b in zip(order[:-1], order[1:]):
        if abs(v[b] - v[a]) <= tol and np.hypot(*(pts[a] - pts[b])) >= min_separation:
            out.append((Point2(*pts[a]), Point2(*pts[b]), float(abs(v[b] - v[a]))))
            if len(out) >= limit:
                break
    return out


@dataclass(frozen=True)
class MonotonicityResult:
    ok: bool
    pairs_checked: int
    violations: int
    worst: float
    worst_pair: tuple[Point2, Point2] | None
    mono_tol: float

    def __bool__(self) -> bool:
        return self.ok

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "pairs_checked": self.pairs_checked,
            "violations": self.violations,
            "worst": self.worst,
            "worst_pair": None if self.worst_pair is None else [p.as_list() for p in self.worst_pair],
            "mono_tol": self.mono_tol,
        }


def monotonicity_check(field: ScalarField2, level: float, grid: GridSpec, pairs: int = 20_000,
                       mono_tol: float | None = None, seed: int = 0) -> MonotonicityResult:
    """``<grad f(x) - grad f(y), x - y> >= 0`` on ``{f >= level}`` and ``<grad f(x), x - y> >= 0``
    for ``x`` in the overlevel and ``y`` below it.

    Half the overlevel pairs are short (a few cells apart) so local
    concavity is seen, not only the global picture.
    """
    X, Y = grid.mesh()
    vals = field.value(X, Y)
    gx, gy = field.gradient(X, Y)
    if mono_tol is None:
        mono_tol = 1e-9 * (1.0 + float(np.max(np.hypot(gx, gy))) * grid.diagonal)
    over = vals >= level
    if not over.any():
        raise InvalidInputError(f"overlevel {{f >= {level}}} is empty on the window")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x3C6EF372]))
    ox, oy = X[over], Y[over]

    def pick(mask_x, mask_y, n):
        k = rng.integers(0, mask_x.size, size=n)
        return np.stack([mask_x[k] + rng.uniform(-.5, .5, n) * grid.dx,
                         mask_y[k] + rng.uniform(-.5, .5, n) * grid.dy], axis=1)

    def g(p):
        a, b = field.gradient(p[:, 0], p[:, 1])
        return np.stack(np.broadcast_arrays(a, b), axis=1)

    def keep_over(p):
        return field.value(p[:, 0], p[:, 1]) >= level

    n1 = pairs // 2
    x = pick(ox, oy, n1)
    y = np.concatenate([pick(ox, oy, n1 // 2),
                        x[n1 // 2:] + rng.normal(scale=3 * grid.cell_diagonal, size=(n1 - n1 // 2, 2))])
    ok = keep_over(x) & keep_over(y)
    s1 = np.einsum("ij,ij->i", g(x) - g(y), x - y)
    s1 = np.where(ok, s1, np.inf)

    under = ~over
    n2 = pairs - n1
    if under.any():
        x2 = pick(ox, oy, n2)
        y2 = pick(X[under], Y[under], n2)
        ok2 = keep_over(x2) & (field.value(y2[:, 0], y2[:, 1]) < level)
        s2 = np.where(ok2, np.einsum("ij,ij->i", g(x2), x2 - y2), np.inf)
    else:
        x2 = y2 = np.empty((0, 2))
        s2 = np.empty(0)

    s = np.concatenate([s1, s2])
    xs = np.concatenate([x, x2])
    ys = np.concatenate([y, y2])
    bad = s < -mono_tol
    k = int(np.argmin(s)) if s.size else -1
    worst = float(s[k]) if s.size and np.isfinite(s[k]) else 0.0
    wp = (Point2(*xs[k]), Point2(*ys[k])) if bad.any() else None
    return MonotonicityResult(not bad.any(), int(np.isfinite(s).sum()), int(bad.sum()), worst, wp, mono_tol)


@dataclass(frozen=True)
class ValenceBounds:
    lo: int
    hi_conjectural: int
    components: int
    minima_in_hess_plus: int
    scan_multiplicity: int

    def to_dict(self) -> dict:
        return {
            "lo": self.lo,
            "hi_conjectural": self.hi_conjectural,
            "hi_is_conjectural": True,
            "components": self.components,
            "minima_in_hess_plus": self.minima_in_hess_plus,
            "scan_multiplicity": self.scan_multiplicity,
        }


def hess_minus_overlevel_components(field: ScalarField2, hess_mask: RegionMask, level: float) -> int:
    """4-connected components of the PD cells where ``f <= level``."""
    X, Y = hess_mask.grid.mesh()
    cells = hess_mask.cells & ~(field.value(X, Y) > level)
    _, n = ndimage.label(cells)
    return int(n)


def valence_bounds(field: ScalarField2, hess_mask: RegionMask, scl_hi: float, critical: CriticalSetReport,
                   scan: InjectivityReport | None = None, *, samples: int = 50_000,
                   image_tol: float = 1e-4, seed: int = 0) -> ValenceBounds:
    """Lower bound from minima and collisions in the PD region; conjectural upper bound
    ``components + 1``."""
    if critical.window != hess_mask.grid:
        raise InvalidInputError("critical set and mask were computed on different windows")
    minima = sum(1 for p in critical.points if p.morse_index == 0 and p.in_hess_plus)
    if scan is None and hess_mask.count:
        scan = gradient_collision_scan(field, hess_mask, samples, image_tol, seed=seed)
    mult = scan.valence_lower_bound if scan is not None else 1
    comps = hess_minus_overlevel_components(field, hess_mask, scl_hi)
    lo = max(minima, mult)
    hi = comps + 1
    if lo > hi:
        log.error("valence lower bound %d exceeds conjectural upper bound %d", lo, hi)
    return ValenceBounds(lo, hi, comps, minima, mult)


@dataclass(frozen=True)
class GammaLevelRecord:
    a: float
    k: float
    c: float
    max_grad_norm_sq_on_gamma_k: float  # 16 a^4 (a^2 + sqrt(a^4 + k)), the form being checked
    probe_high: float
    probe_low: float
    numeric_max: float
    numeric_min: float
    axis_max: float  # 16 (a^4 + k)(a^2 + sqrt(a^4 + k)), value at the outer axis point
    axis_min: float
    closed_form_verified: bool
    two_intersections_expected: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def gamma_level_scan(a: float, k: float, c: float, *, n: int = 800, rtol: float = 1e-3) -> GammaLevelRecord:
    """Gradient-norm bounds on the left oval ``Gamma_k`` of the Cassini field.

    ``two_intersections_expected`` compares the probes with the numerically
    measured extremes on ``Gamma_k`` rather than with the closed form.
    """
    if not (a > 0 and math.isfinite(a)):
        raise DomainError("a must be > 0")
    a4 = a**4
    if not (-a4 < k < 0 and -a4 < c < 0 and k < c):
        raise DomainError(f"need -a^4 < k < c < 0, got k={k}, c={c}")
    f = cassini_field(a)
    grid = GridSpec.square(2 * a, n)
    curve = level_curve(f, k, grid)
    pts = curve.samples
    pts = pts[pts[:, 0] < 0]
    gx, gy = f.gradient(pts[:, 0], pts[:, 1])
    g2 = gx * gx + gy * gy
    num_max, num_min = float(g2.max()), float(g2.min())
    r = math.sqrt(a4 + k)
    paper_max = 16 * a4 * (a * a + r)
    rc = math.sqrt(a4 + c)
    # |grad f|^2 at the outer and inner axis points of Gamma_c
    high = float(axis_grad_norm_sq(a, -math.sqrt(a * a + rc)))
    low = float(axis_grad_norm_sq(a, -math.sqrt(a * a - rc)))
    return GammaLevelRecord(
        a, k, c, paper_max, high, low, num_max, num_min,
        16 * (a4 + k) * (a * a + r), 16 * (a4 + k) * (a * a - r),
        abs(num_max - paper_max) <= rtol * abs(paper_max),
        bool(high > num_max and low < num_min),
    )
