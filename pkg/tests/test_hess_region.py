import math

import numpy as np
import pytest

from truncvex import (
    GridSpec, InconclusiveError, InvalidInputError, RegionMask, UndefinedError, cassini_field,
    complement_bounded, h_max, hess_plus_0_mask, hess_plus_mask, level_mask, make_field, nu_vs_h_check,
)
from truncvex.cassini import hess_boundary_residual


def test_quadratic_mask_is_full():
    mask = hess_plus_mask(make_field("quadratic"), GridSpec.square(2.0, 50))
    assert mask.count == 2500


def test_cassini_mask_matches_quartic_inequality(f1):
    grid = GridSpec.square(2.0, 400)
    mask = hess_plus_mask(f1, grid)
    X, Y = grid.mesh()
    expected = hess_boundary_residual(1.0, X, Y) > 0
    # cells straddling the boundary may disagree by rounding only
    disagree = mask.cells != expected
    assert disagree.sum() <= 4
    assert not mask.cell_of((0.0, 0.0))
    assert mask.cell_of((1.5, 0.0))


def test_psd_mask_contains_pd_mask(f1, grid3):
    pd = hess_plus_mask(f1, grid3)
    psd = hess_plus_0_mask(f1, grid3)
    assert np.all(psd.cells >= pd.cells)


def test_eps_shrinks_region(f1, grid3):
    assert hess_plus_mask(f1, grid3, 0.1).count < hess_plus_mask(f1, grid3, 0.0).count


def test_workers_do_not_change_mask(f1, grid3):
    assert np.array_equal(hess_plus_mask(f1, grid3, workers=1).cells,
                          hess_plus_mask(f1, grid3, workers=4).cells)


def test_mask_shape_validated(grid3):
    with pytest.raises(InvalidInputError):
        RegionMask(grid3, np.zeros((3, 3), bool), "custom")
    with pytest.raises(InvalidInputError):
        RegionMask(grid3, np.zeros((300, 300), bool), "nonsense")


def test_complement_bounded_verdicts(f1, grid3):
    assert complement_bounded(hess_plus_mask(f1, grid3))
    assert not complement_bounded(hess_plus_mask(make_field("saddle"), grid3))


def test_complement_bounded_needs_room():
    mask = hess_plus_mask(make_field("quadratic"), GridSpec.square(1.0, 8))
    with pytest.raises(InconclusiveError):
        complement_bounded(mask, margin_cells=4)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_h_max_cassini(a):
    f = cassini_field(a)
    est = h_max(f, hess_plus_mask(f, GridSpec.square(3 * a, 300)))
    assert est.value == pytest.approx(3 * a**4, rel=1e-3)
    assert est.value >= est.raster_value
    assert est.complement_bounded and not est.window_relative
    assert abs(est.witness.y) == pytest.approx(a, rel=1e-2)
    assert est.value == f.value_at(est.witness)


def test_h_max_witness_stays_outside_pd_region(f1, grid3):
    est = h_max(f1, hess_plus_mask(f1, grid3))
    assert hess_boundary_residual(1.0, est.witness.x, est.witness.y) <= 0


def test_h_max_refines_monotonically(f1):
    coarse = h_max(f1, hess_plus_mask(f1, GridSpec.square(3.0, 100)))
    fine = h_max(f1, hess_plus_mask(f1, GridSpec.square(3.0, 200)))
    X, Y = GridSpec.square(3.0, 100).mesh()
    gx, gy = f1.gradient(X, Y)
    lip = float(np.max(np.hypot(gx, gy)))
    assert fine.raster_value >= coarse.raster_value - lip * GridSpec.square(3.0, 100).cell_diagonal


def test_h_max_undefined_for_convex_field():
    f = make_field("quadratic")
    with pytest.raises(UndefinedError):
        h_max(f, hess_plus_mask(f, GridSpec.square(1.0, 20)))


def test_h_max_saddle_is_window_relative():
    f = make_field("saddle")
    grid = GridSpec.square(2.0, 100)
    est = h_max(f, hess_plus_mask(f, grid))
    assert est.window_relative
    assert est.value == pytest.approx(4.0, abs=0.1)


def test_h_max_requires_hess_plus_tag(f1, grid3):
    with pytest.raises(InvalidInputError):
        h_max(f1, level_mask(f1, grid3, 0.0))


def test_overlevel_inside_pd_region(f1, grid3):
    mask = hess_plus_mask(f1, grid3)
    est = h_max(f1, mask)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-3, 3, size=(5000, 2))
    high = pts[f1.value(pts[:, 0], pts[:, 1]) > est.value + 0.05]
    assert len(high) > 100
    rows, cols = grid3.cell_index(high[:, 0], high[:, 1])
    assert mask.cells[rows, cols].all()


def test_nu_vs_h_check():
    assert nu_vs_h_check(3.0, 0.0)
    assert nu_vs_h_check(1.0, 1.0 + 1e-10)
    assert not nu_vs_h_check(1.0, 2.0)
    with pytest.raises(InvalidInputError):
        nu_vs_h_check(math.nan, 0.0)


def test_level_mask_strictness(f1, grid3):
    above = level_mask(f1, grid3, 1.0)
    below = level_mask(f1, grid3, 1.0, above=False)
    assert above.count + below.count == 300 * 300
