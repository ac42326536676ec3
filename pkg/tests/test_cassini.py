import math

import numpy as np
import pytest

from truncvex import (
    CassiniParams, DomainError, InvalidInputError, c_plus_minus_membership, cassini_field, g_field,
    ground_truth, known_collision,
)
from truncvex.cassini import C_MINUS, C_PLUS, NEITHER, axis_grad_norm_sq, hess_boundary_residual


def test_minimum_value(f1):
    assert f1.value_at((1.0, 0.0)) == -1.0
    assert f1.value_at((-1.0, 0.0)) == -1.0


def test_origin_is_critical(f1):
    assert f1.value_at((0.0, 0.0)) == 0.0
    assert f1.gradient_at((0.0, 0.0)) == (0.0, 0.0)


def test_diagonal_value(f1):
    # (x^2+y^2)^2 = 0.25 and x^2 - y^2 = 0
    assert f1.value_at((0.5, 0.5)) == pytest.approx(0.25, abs=1e-15)


def test_hessian_entries():
    a = 1.3
    f = cassini_field(a)
    x, y = 0.4, -0.7
    H = f.hessian_at((x, y))
    assert H.a11 == pytest.approx(12 * x * x + 4 * y * y - 4 * a * a)
    assert H.a12 == pytest.approx(8 * x * y)
    assert H.a22 == pytest.approx(4 * x * x + 12 * y * y + 4 * a * a)


def test_g_field_values():
    assert g_field(1.0).value_at((1.0, 0.0)) == 3.0
    assert g_field(0.37).value_at((0.0, 0.0)) == 0.0


def test_hess_boundary_is_a_level_of_g():
    a = 1.0
    g = g_field(a / math.sqrt(3))
    f = cassini_field(a)
    # walk out along rays until the PD test flips, then compare with the g level
    for theta in np.linspace(0.1, 3.0, 12):
        d = np.array([math.cos(theta), math.sin(theta)])
        lo, hi = 0.0, 3.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if hess_boundary_residual(a, *(mid * d)) > 0:
                hi = mid
            else:
                lo = mid
        p = hi * d
        assert g.value_at(p) == pytest.approx(a**4 / 3, abs=1e-9)
        H = f.hessian_at(p)
        assert abs(H.det) <= 1e-8 * H.frobenius() ** 2


@pytest.mark.parametrize("p, expected", [((-1.0, 0.0), C_MINUS), ((1.0, 0.0), C_PLUS), ((0.0, 1.0), NEITHER),
                                         ((0.0, 0.0), NEITHER), ((-0.3, 2.0), NEITHER)])
def test_c_plus_minus_membership(p, expected):
    assert c_plus_minus_membership(1.0, p) == expected


@pytest.mark.parametrize("a", [1.0, 2.0])
def test_ground_truth(a):
    gt = ground_truth(a)
    a4 = a**4
    assert gt.min_value == -a4
    assert gt.h_max == gt.sql == gt.scl == 3 * a4
    assert gt.nu_max == 0.0
    assert gt.morse_indices == (0, 1, 0)
    assert gt.hess_boundary_level == a4 / 3
    assert gt.inflection_abscissa == pytest.approx(a / math.sqrt(3))


def test_scaling_identity():
    rng = np.random.default_rng(3)
    f1 = cassini_field(1.0)
    for a in (0.5, 2.0, 3.7):
        fa = cassini_field(a)
        for x, y in rng.uniform(-3, 3, size=(50, 2)):
            lhs = fa.value_at((x, y))
            rhs = a**4 * f1.value_at((x / a, y / a))
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * a**4)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_params_validation(bad):
    with pytest.raises(InvalidInputError):
        CassiniParams(bad)


def test_known_collision_a1_c0():
    p1, p2, image = known_collision(1.0, 0.0)
    assert p1.as_list() == pytest.approx([-math.sqrt(3) / 2, 0.5])
    assert p2.as_list() == pytest.approx([math.sqrt(3) / 2, 0.5])
    assert image == pytest.approx((0.0, 4.0))
    assert cassini_field(1.0).value_at(p1) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_known_collision_grid(a):
    f = cassini_field(a)
    a4 = a**4
    for c in np.linspace(-a4, 3 * a4, 11)[1:-1]:
        p1, p2, image = known_collision(a, c)
        g1, g2 = np.array(f.gradient_at(p1)), np.array(f.gradient_at(p2))
        scale = max(1.0, abs(image[1]))
        assert np.abs(g1 - g2).max() <= 1e-9 * scale
        assert np.abs(g1 - image).max() <= 1e-9 * scale
        assert f.value_at(p1) == pytest.approx(c, abs=1e-9 * max(1, a4))
        assert f.value_at(p2) == pytest.approx(c, abs=1e-9 * max(1, a4))


@pytest.mark.parametrize("c", [-1.0, 3.0, 5.0, -2.0])
def test_known_collision_domain(c):
    with pytest.raises(DomainError):
        known_collision(1.0, c)


def test_known_collision_points_merge_near_upper_end():
    p1, p2, _ = known_collision(1.0, 3.0 - 1e-10)
    assert p1.dist(p2) < 1e-4
    assert p1.y == pytest.approx(1.0, abs=1e-9)


def test_axis_formula_at_half():
    assert float(axis_grad_norm_sq(1.0, 0.5)) == pytest.approx(2.25, abs=1e-15)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_second_derivative_flips_at_inflection(a):
    f = cassini_field(a)
    t0 = -a / math.sqrt(3)
    before = f.hessian_at((t0 - 1e-3 * a, 0.0)).a11
    after = f.hessian_at((t0 + 1e-3 * a, 0.0)).a11
    assert before > 0 > after
