"""The Cassini quartic ``f_a`` and its companion ``g_b`` with closed-form ground truth.

``f_a(x, y) = (x^2 + y^2)^2 - 2 a^2 (x^2 - y^2)`` is the product of the squared
distances to the foci ``(+-a, 0)`` minus ``a^4``.  ``g_b`` flips the sign of the
``x^2 - y^2`` term; its level set ``g_{a/sqrt 3} = a^4 / 3`` is the boundary of
the positive-definite region of ``f_a``.

This is the only module that hard-codes reference constants; everything else
recovers them numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidInputError
from .field import ANALYTIC, Point2, ScalarField2

C_MINUS = "C_minus"
C_PLUS = "C_plus"
NEITHER = "neither"


@dataclass(frozen=True)
class CassiniParams:
    a: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise InvalidInputError(f"Cassini parameter must be finite and > 0, got {self.a}")
        object.__setattr__(self, "a", float(self.a))


@dataclass(frozen=True)
class GroundTruth:
    min_value: float
    critical_points: tuple[Point2, Point2, Point2]
    critical_values: tuple[float, float, float]
    morse_indices: tuple[int, int, int]
    nu_max: float
    h_max: float
    sql: float
    scl: float
    hess_boundary_level: float
    hess_boundary_b: float
    inflection_abscissa: float

    def to_dict(self) -> dict:
        return {
            "min_value": self.min_value,
            "critical_points": [p.as_list() for p in self.critical_points],
            "critical_values": list(self.critical_values),
            "morse_indices": list(self.morse_indices),
            "nu_max": self.nu_max,
            "h_max": self.h_max,
            "sql": self.sql,
            "scl": self.scl,
            "hess_boundary_level": self.hess_boundary_level,
            "hess_boundary_b": self.hess_boundary_b,
            "inflection_abscissa": self.inflection_abscissa,
        }


def _quartic(name: str, sign: float, k: float, params: dict) -> ScalarField2:
    # (x^2 + y^2)^2 + sign * 2 k^2 (x^2 - y^2)
    k2 = k * k

    def value(x, y):
        s = x * x + y * y
        return s * s + sign * 2.0 * k2 * (x * x - y * y)

    def grad(x, y):
        s = x * x + y * y
        return 4.0 * x * (s + sign * k2), 4.0 * y * (s - sign * k2)

    def hess(x, y):
        xx = x * x
        yy = y * y
        return (12.0 * xx + 4.0 * yy + sign * 4.0 * k2,
                8.0 * x * y,
                4.0 * xx + 12.0 * yy - sign * 4.0 * k2)

    return ScalarField2(name, value, grad, hess, ANALYTIC, params)


def cassini_field(params: CassiniParams | float) -> ScalarField2:
    if not isinstance(params, CassiniParams):
        params = CassiniParams(params)
    return _quartic("cassini", -1.0, params.a, {"a": params.a})


def g_field(b: float) -> ScalarField2:
    if not (math.isfinite(b) and b > 0):
        raise InvalidInputError(f"g_b needs b > 0, got {b}")
    return _quartic("cassini-g", +1.0, float(b), {"b": float(b)})


def c_plus_minus_membership(params: CassiniParams | float, p) -> str:
    """Which of the open sets ``C-`` / ``C+`` (``x<0`` resp. ``x>0`` with ``-a^4 <= f_a < 0``) holds ``p``."""
    if not isinstance(params, CassiniParams):
        params = CassiniParams(params)
    x, y = float(p[0]), float(p[1])
    v = float(cassini_field(params).value(x, y))
    if not (-params.a**4 <= v < 0):
        return NEITHER
    if x < 0:
        return C_MINUS
    if x > 0:
        return C_PLUS
    return NEITHER


def c_minus_predicate(a: float):
    f = cassini_field(a)
    return lambda x, y: (np.asarray(x) < 0) & (f.value(x, y) < 0)


def c_plus_predicate(a: float):
    f = cassini_field(a)
    return lambda x, y: (np.asarray(x) > 0) & (f.value(x, y) < 0)


def ground_truth(params: CassiniParams | float) -> GroundTruth:
    if not isinstance(params, CassiniParams):
        params = CassiniParams(params)
    a = params.a
    a4 = a**4
    return GroundTruth(
        min_value=-a4,
        critical_points=(Point2(-a, 0.0), Point2(0.0, 0.0), Point2(a, 0.0)),
        critical_values=(-a4, 0.0, -a4),
        morse_indices=(0, 1, 0),
        nu_max=0.0,
        h_max=3 * a4,
        sql=3 * a4,
        scl=3 * a4,
        hess_boundary_level=a4 / 3,
        hess_boundary_b=a / math.sqrt(3),
        inflection_abscissa=a / math.sqrt(3),
    )


def hess_boundary_residual(a: float, x, y):
    """``3 (x^2+y^2)^2 + 2 a^2 (x^2 - y^2) - a^4``; positive exactly on the PD region."""
    s = np.asarray(x) ** 2 + np.asarray(y) ** 2
    return 3 * s * s + 2 * a * a * (np.asarray(x) ** 2 - np.asarray(y) ** 2) - a**4


def axis_grad_norm_sq(a: float, t):
    """``|grad f_a|^2`` on the x-axis: ``16 (t^6 - 2 a^2 t^4 + a^4 t^2)``."""
    t = np.asarray(t, dtype=float)
    return 16.0 * (t**6 - 2 * a * a * t**4 + a**4 * t**2)


def known_collision(a: float, c: float, rtol: float = 1e-9):
    """Two distinct points on ``f_a = c`` sharing the gradient ``(0, 4a sqrt(c + a^4))``.

    Defined for ``-a^4 < c < 3a^4``; the points merge as ``c`` approaches ``3a^4``.
    """
    params = CassiniParams(a)
    a = params.a
    a4 = a**4
    if not (math.isfinite(c) and -a4 < c < 3 * a4):
        raise DomainError(f"c must lie in (-a^4, 3a^4) = ({-a4}, {3 * a4}), got {c}")
    x = math.sqrt(3 * a4 - c) / (2 * a)
    y = math.sqrt(c + a4) / (2 * a)
    p1, p2 = Point2(-x, y), Point2(x, y)
    image = (0.0, 4 * a * math.sqrt(c + a4))

    f = cassini_field(params)
    scale_g = max(1.0, abs(image[1]))
    scale_f = max(1.0, abs(c), a4)
    for p in (p1, p2):
        gx, gy = f.gradient_at(p)
        if abs(gx - image[0]) > rtol * scale_g or abs(gy - image[1]) > rtol * scale_g:
            raise ArithmeticError(f"collision gradient check failed at {p}")
        if abs(f.value_at(p) - c) > rtol * scale_f:
            raise ArithmeticError(f"collision level check failed at {p}")
    return p1, p2, image
