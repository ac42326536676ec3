import math

import numpy as np
import pytest

from truncvex import (
    BracketError, GridSpec, InvalidInputError, estimate_scl, estimate_sql, make_field,
    subdifferential_of_truncation, sublevel_convex, truncate, truncation_convex,
)
from truncvex.truncation import Bracket, ConvexityProbe, scan_levels, window_max, window_min


def test_truncate_values(f1):
    t = truncate(f1, 0.5)
    assert t.value_at((1.0, 0.0)) == 0.5
    assert t.value_at((2.0, 0.0)) == f1.value_at((2.0, 0.0))
    with pytest.raises(InvalidInputError):
        truncate(f1, math.inf)


@pytest.mark.parametrize("r, convex", [(-0.5, False), (0.5, False), (3.5, True), (6.0, True)])
def test_sublevel_convexity(f1, grid3, r, convex):
    v = sublevel_convex(f1, r, grid3)
    assert v.convex is convex
    if not convex:
        assert v.evidence in ("chord", "topology", "curvature")


def test_counterexample_is_a_real_chord(f1, grid3):
    v = sublevel_convex(f1, 0.5, grid3)
    if v.evidence == "chord":
        p, q, t = v.counterexample
        z = (1 - t) * np.array(p.as_list()) + t * np.array(q.as_list())
        # endpoints may sit on the level up to rounding
        assert f1.value_at(p) <= 0.5 + 1e-12 and f1.value_at(q) <= 0.5 + 1e-12
        assert f1.value_at(z) > 0.5 + v.violation * 0.5


@pytest.mark.parametrize("q, convex", [(1.0, False), (2.5, False), (3.2, True)])
def test_truncation_convexity(f1, grid3, q, convex):
    assert truncation_convex(f1, q, grid3).convex is convex


def test_truncation_of_quadratic_is_convex_everywhere():
    grid = GridSpec.square(2.0, 100)
    f = make_field("quadratic")
    for q in (-1.0, 0.0, 1.0, 3.0):
        assert truncation_convex(f, q, grid).convex


def test_probe_validation(f1, grid3):
    with pytest.raises(InvalidInputError):
        ConvexityProbe(f1, grid3, pair_samples=0)
    with pytest.raises(InvalidInputError):
        ConvexityProbe(f1, grid3, seg_samples=2)


def test_probe_is_deterministic(f1, grid3):
    a = ConvexityProbe(f1, grid3, seed=3).sublevel(1.0).to_dict()
    b = ConvexityProbe(f1, grid3, seed=3).sublevel(1.0).to_dict()
    assert a == b


def test_brackets_a1(f1, grid3):
    probe = ConvexityProbe(f1, grid3)
    sql = estimate_sql(f1, (-1.0, 6.0), grid3, 1e-2, probe=probe)
    scl = estimate_scl(f1, (-1.0, 6.0), grid3, 1e-2, probe=probe)
    for b in (sql, scl):
        assert b.contains(3.0) and b.width <= 1e-2 and not b.at_lower_end
    assert sql.hi <= scl.hi + 1e-2


def test_wide_bracket_still_finds_threshold(f1, grid3):
    b = estimate_sql(f1, (-1.0, 324.0), grid3, 1e-2)
    assert b.contains(3.0)


def test_convex_field_hugs_lower_end():
    f = make_field("quadratic")
    grid = GridSpec.square(2.0, 100)
    b = estimate_scl(f, (0.0, 4.0), grid)
    # lower end is the refined window minimum
    assert b.at_lower_end and b.lo == pytest.approx(0.0, abs=1e-12)


def test_exp_sum_thresholds_at_window_minimum():
    f = make_field("exp-sum")
    grid = GridSpec.square(1.0, 100)
    lo = window_min(f, grid)
    assert lo == pytest.approx(math.exp(-2.0))
    assert estimate_sql(f, (lo, window_max(f, grid)), grid).at_lower_end


def test_failing_upper_end(f1, grid3):
    with pytest.raises(BracketError):
        estimate_sql(f1, (-1.0, 1.0), grid3)


def test_bad_bracket(f1, grid3):
    with pytest.raises(InvalidInputError):
        estimate_sql(f1, (3.0, 1.0), grid3)
    with pytest.raises(InvalidInputError):
        estimate_sql(f1, (1.0, 3.0), grid3, bisect_tol=0.0)


def test_bracket_type():
    b = Bracket(1.0, 1.5)
    lo, hi = b
    assert (lo, hi) == (1.0, 1.5) and b.width == 0.5
    assert b.contains(1.6, slack=0.2) and not b.contains(1.6)


def test_scan_levels_are_interior_and_sorted():
    v = np.linspace(0.0, 1.0, 1001)
    s = scan_levels(v, 8)
    assert np.all(np.diff(s) > 0) and s[0] > 0 and s[-1] < 1


@pytest.mark.parametrize("p, kind", [((2.0, 0.0), "singleton_grad"), ((1.0, 0.0), "singleton_zero")])
def test_subdifferential_off_the_level(f1, p, kind):
    assert subdifferential_of_truncation(f1, 0.0, p).kind == kind


def test_subdifferential_on_the_level(f1):
    p = (math.sqrt(2.0), 0.0)  # f = 0 there
    s = subdifferential_of_truncation(f1, 0.0, p)
    g = np.array(f1.gradient_at(p))
    assert s.kind == "segment_0_to_grad"
    assert s.contains(0.3 * g) and s.contains((0.0, 0.0)) and s.contains(g)
    assert not s.contains(1.5 * g)
