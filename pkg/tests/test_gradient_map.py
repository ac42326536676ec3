import math

import numpy as np
import pytest

from truncvex import (
    DomainError, GridSpec, InvalidInputError, find_critical_points, gamma_level_scan,
    gradient_collision_scan, hess_plus_mask, known_collision, level_mask, make_field, monotonicity_check,
    valence_bounds,
)
from truncvex.cassini import c_minus_predicate
from truncvex.gradient_map import level_value_collisions
from truncvex.hess_region import predicate_mask


@pytest.fixture(scope="module")
def grid():
    return GridSpec.square(3.0, 300)


def test_no_collisions_above_threshold(f1, grid):
    rep = gradient_collision_scan(f1, level_mask(f1, grid, 3.05), 100_000)
    assert rep.verdict == "no_collision_found" and rep.collision_count == 0


def test_collisions_below_threshold_match_known_pairs(f1, grid):
    rep = gradient_collision_scan(f1, level_mask(f1, grid, 1.0), 100_000)
    assert rep.verdict == "collisions_found"
    polished = [c for c in rep.collisions if c.level_polished]
    assert polished
    hit = False
    for c in polished:
        level = f1.value_at(c.p1)
        if not 1.0 < level < 3.0:
            continue
        k1, k2, _ = known_collision(1.0, level)
        for q1, q2 in ((k1, k2), (type(k1)(k1.x, -k1.y), type(k2)(k2.x, -k2.y))):
            ends = sorted([c.p1.as_list(), c.p2.as_list()])
            ref = sorted([q1.as_list(), q2.as_list()])
            if np.abs(np.array(ends) - np.array(ref)).max() <= 1e-3:
                hit = True
    assert hit


def test_reported_pairs_are_genuine(f1, grid):
    rep = gradient_collision_scan(f1, level_mask(f1, grid, 1.0), 50_000)
    for c in rep.collisions:
        g1, g2 = np.array(f1.gradient_at(c.p1)), np.array(f1.gradient_at(c.p2))
        assert np.abs(g1 - g2).max() <= c.image_tol
        assert c.p1.dist(c.p2) >= rep.min_separation


def test_quadratic_is_injective():
    f = make_field("quadratic")
    grid = GridSpec.square(2.0, 100)
    assert gradient_collision_scan(f, level_mask(f, grid, 0.0), 20_000).collision_count == 0


def test_exp_sum_raw_hits_are_capped():
    f = make_field("exp-sum")
    grid = GridSpec.square(1.0, 100)
    rep = gradient_collision_scan(f, level_mask(f, grid, 0.0), 20_000, candidates=50)
    assert rep.collision_count > 0


def test_scan_is_seed_deterministic(f1, grid):
    region = level_mask(f1, grid, 1.0)
    a = gradient_collision_scan(f1, region, 20_000, seed=4).to_dict()
    b = gradient_collision_scan(f1, region, 20_000, seed=4).to_dict()
    assert a == b


def test_scan_validation(f1, grid):
    region = level_mask(f1, grid, 1.0)
    with pytest.raises(InvalidInputError):
        gradient_collision_scan(f1, region, 100, image_tol=0.0)
    with pytest.raises(InvalidInputError):
        gradient_collision_scan(f1, region, 1)


def test_minima_share_gradient_image(f1, grid):
    rep = gradient_collision_scan(f1, hess_plus_mask(f1, grid), 50_000)
    assert rep.valence_lower_bound >= 2


def test_valence_bounds(f1, grid):
    mask = hess_plus_mask(f1, grid)
    v = valence_bounds(f1, mask, 3.01, find_critical_points(f1, grid), samples=20_000)
    assert (v.lo, v.hi_conjectural, v.components, v.minima_in_hess_plus) == (2, 3, 2, 2)
    assert v.lo <= v.hi_conjectural


def test_valence_needs_matching_windows(f1, grid):
    other = GridSpec.square(2.0, 100)
    with pytest.raises(InvalidInputError):
        valence_bounds(f1, hess_plus_mask(f1, grid), 3.0, find_critical_points(f1, other))


def test_quadratic_valence_is_one():
    f = make_field("quadratic")
    grid = GridSpec.square(2.0, 100)
    v = valence_bounds(f, hess_plus_mask(f, grid), 0.0, find_critical_points(f, grid), samples=5000)
    assert (v.lo, v.hi_conjectural) == (1, 1)


@pytest.mark.parametrize("level, ok", [(3.0, True), (3.5, True), (-1.0, False)])
def test_monotonicity(f1, grid, level, ok):
    assert bool(monotonicity_check(f1, level, grid, pairs=5000)) is ok


def test_level_value_collisions_inside_c_minus(f1, grid):
    region = predicate_mask(grid, c_minus_predicate(1.0))
    pairs = level_value_collisions(f1, region)
    assert pairs
    for p, q, gap in pairs:
        assert gap <= 1e-6 and p.dist(q) >= 0.05
        assert abs(f1.value_at(p) - f1.value_at(q)) <= 1e-6


def test_gamma_scan_matches_corrected_closed_form():
    rec = gamma_level_scan(1.0, -0.5, -0.25)
    r = math.sqrt(0.5)
    assert rec.numeric_max == pytest.approx(16 * 0.5 * (1 + r), rel=1e-3)
    assert rec.numeric_min == pytest.approx(16 * 0.5 * (1 - r), rel=1e-3)
    assert rec.axis_max == pytest.approx(rec.numeric_max, rel=1e-3)
    assert not rec.closed_form_verified  # the closed form as printed is off by the factor a^4/(a^4+k)


def test_gamma_scan_domain():
    with pytest.raises(DomainError):
        gamma_level_scan(1.0, -0.25, -0.5)
    with pytest.raises(DomainError):
        gamma_level_scan(1.0, -1.5, -0.5)


@pytest.mark.parametrize("a, k, c", [(1.0, -0.5, -0.25), (1.0, -0.9, -0.1), (2.0, -8.0, -2.0), (1.0, -0.3, -0.29)])
def test_axis_probes_straddle_gamma_extremes(a, k, c):
    rec = gamma_level_scan(a, k, c)
    assert rec.probe_high > rec.numeric_max and rec.probe_low < rec.numeric_min
    assert rec.two_intersections_expected
