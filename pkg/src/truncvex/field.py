"""Planar scalar fields, 2x2 symmetric-matrix tests and a finite-difference oracle.

Every field evaluates on numpy arrays: ``value(x, y)``, ``gradient(x, y)`` and
``hessian(x, y)`` accept scalars or broadcastable arrays and return arrays of
the broadcast shape (a tuple of arrays for the derivatives).  Point-level
helpers wrap these for single evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import InvalidInputError

ANALYTIC = "analytic"
FINITE_DIFFERENCE = "finite-difference"


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not _finite(self.x, self.y):
            raise InvalidInputError(f"non-finite point ({self.x}, {self.y})")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))

    def __iter__(self) -> Iterator[float]:
        yield self.x
        yield self.y

    def __getitem__(self, i: int) -> float:
        return (self.x, self.y)[i]

    def __len__(self) -> int:
        return 2

    def dist(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_list(self) -> list[float]:
        return [self.x, self.y]


@dataclass(frozen=True)
class SymMat2:
    """Symmetric 2x2 matrix stored by its three distinct entries."""

    a11: float
    a12: float
    a22: float

    def __post_init__(self):
        if not _finite(self.a11, self.a12, self.a22):
            raise InvalidInputError("non-finite matrix entry")
        for name in ("a11", "a12", "a22"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12 * self.a12

    @property
    def trace(self) -> float:
        return self.a11 + self.a22

    def eigvalsh(self) -> tuple[float, float]:
        lo, hi = sym_eigvals(self.a11, self.a12, self.a22)
        return float(lo), float(hi)

    def frobenius(self) -> float:
        return math.sqrt(self.a11**2 + 2 * self.a12**2 + self.a22**2)

    def scaled(self, t: float) -> "SymMat2":
        return SymMat2(t * self.a11, t * self.a12, t * self.a22)

    def to_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])


def sym_eigvals(a11, a12, a22):
    """Eigenvalues (ascending) of symmetric 2x2 matrices, elementwise."""
    a11 = np.asarray(a11, dtype=float)
    a12 = np.asarray(a12, dtype=float)
    a22 = np.asarray(a22, dtype=float)
    mean = 0.5 * (a11 + a22)
    rad = np.hypot(0.5 * (a11 - a22), a12)
    return mean - rad, mean + rad


def pd_scale(a11, a22):
    return np.maximum(1.0, np.maximum(np.square(a11), np.square(a22)))


def pd_mask(a11, a12, a22, eps: float = 0.0):
    """Vectorised strict positive-definiteness with a scale-aware margin."""
    a11 = np.asarray(a11, dtype=float)
    a22 = np.asarray(a22, dtype=float)
    det = a11 * a22 - np.square(a12)
    return (a11 > eps) & (det > eps * eps * pd_scale(a11, a22))


def psd_mask(a11, a12, a22, eps: float = 0.0):
    a11 = np.asarray(a11, dtype=float)
    a22 = np.asarray(a22, dtype=float)
    det = a11 * a22 - np.square(a12)
    return (a11 >= -eps) & (a22 >= -eps) & (det >= -eps * pd_scale(a11, a22))


def _check_matrix(m: SymMat2, eps: float) -> None:
    if not isinstance(m, SymMat2):
        m = SymMat2(*m)
    if not math.isfinite(eps) or eps < 0:
        raise InvalidInputError(f"eps must be finite and >= 0, got {eps}")


def is_positive_definite(m: SymMat2, eps: float = 0.0) -> bool:
    """Sylvester test ``a11 > eps`` and ``det > eps**2 * max(1, a11**2, a22**2)``."""
    _check_matrix(m, eps)
    return bool(pd_mask(m.a11, m.a12, m.a22, eps))


def is_positive_semidefinite(m: SymMat2, eps: float = 0.0) -> bool:
    _check_matrix(m, eps)
    return bool(psd_mask(m.a11, m.a12, m.a22, eps))


@dataclass(frozen=True)
class GridSpec:
    """Rectangular window split into ``nx * ny`` cells; samples sit at cell centres."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if not _finite(self.x_min, self.x_max, self.y_min, self.y_max):
            raise InvalidInputError("non-finite window bounds")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidInputError("window bounds must satisfy min < max")
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise InvalidInputError("cell counts must be integers")
        if self.nx < 2 or self.ny < 2:
            raise InvalidInputError("need at least 2 cells per axis")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))

    @classmethod
    def square(cls, half_width: float, n: int, center: tuple[float, float] = (0.0, 0.0)):
        cx, cy = center
        return cls(cx - half_width, cx + half_width, cy - half_width, cy + half_width, n, n)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.ny

    @property
    def cell_diagonal(self) -> float:
        return math.hypot(self.dx, self.dy)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.x_max - self.x_min, self.y_max - self.y_min)

    @property
    def xc(self) -> np.ndarray:
        return self.x_min + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def yc(self) -> np.ndarray:
        return self.y_min + (np.arange(self.ny) + 0.5) * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as ``(ny, nx)`` arrays (row = y index)."""
        return np.meshgrid(self.xc, self.yc)

    def contains(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)

    def cell_index(self, x, y):
        """(row, col) of the cell containing each point, clipped to the window."""
        col = np.floor((np.asarray(x) - self.x_min) / self.dx).astype(int)
        row = np.floor((np.asarray(y) - self.y_min) / self.dy).astype(int)
        return np.clip(row, 0, self.ny - 1), np.clip(col, 0, self.nx - 1)

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min, "x_max": self.x_max,
            "y_min": self.y_min, "y_max": self.y_max,
            "nx": self.nx, "ny": self.ny,
        }


ValueFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
GradFn = Callable[[np.ndarray, np.ndarray], tuple]
HessFn = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass(frozen=True)
class ScalarField2:
    """A C^2 field on the plane with vectorised value/gradient/Hessian.

    Instances are immutable and their callables must be pure, so a field can be
    evaluated from any number of threads.
    """

    name: str
    value_fn: ValueFn
    gradient_fn: GradFn
    hessian_fn: HessFn
    derivative_mode: str = ANALYTIC
    params: dict = dc_field(default_factory=dict)

    def value(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.asarray(self.value_fn(x, y), dtype=float) * np.ones_like(x)

    def gradient(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        gx, gy = self.gradient_fn(x, y)
        ones = np.ones_like(x)
        return np.asarray(gx, dtype=float) * ones, np.asarray(gy, dtype=float) * ones

    def hessian(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        hxx, hxy, hyy = self.hessian_fn(x, y)
        ones = np.ones_like(x)
        return (np.asarray(hxx, dtype=float) * ones,
                np.asarray(hxy, dtype=float) * ones,
                np.asarray(hyy, dtype=float) * ones)

    # point-level conveniences
    def value_at(self, p) -> float:
        return float(self.value(p[0], p[1]))

    def gradient_at(self, p) -> tuple[float, float]:
        gx, gy = self.gradient(p[0], p[1])
        return float(gx), float(gy)

    def hessian_at(self, p) -> SymMat2:
        hxx, hxy, hyy = self.hessian(p[0], p[1])
        return SymMat2(float(hxx), float(hxy), float(hyy))

    def spec(self) -> dict:
        return {"name": self.name, "params": dict(self.params), "derivative_mode": self.derivative_mode}


def central_gradient(value_fn: ValueFn, x, y, h: float):
    gx = (value_fn(x + h, y) - value_fn(x - h, y)) / (2 * h)
    gy = (value_fn(x, y + h) - value_fn(x, y - h)) / (2 * h)
    return gx, gy


def central_hessian(value_fn: ValueFn, x, y, h: float):
    f0 = value_fn(x, y)
    hxx = (value_fn(x + h, y) - 2 * f0 + value_fn(x - h, y)) / (h * h)
    hyy = (value_fn(x, y + h) - 2 * f0 + value_fn(x, y - h)) / (h * h)
    hxy = (value_fn(x + h, y + h) - value_fn(x + h, y - h)
           - value_fn(x - h, y + h) + value_fn(x - h, y - h)) / (4 * h * h)
    return hxx, hxy, hyy


DEFAULT_FD_WINDOW_DIAGONAL = math.hypot(6.0, 6.0)


def finite_difference_field(name: str, value_fn: ValueFn, step: float | None = None,
                            window: GridSpec | None = None, params: dict | None = None) -> ScalarField2:
    """Wrap a black-box value function; derivatives come from central differences.

    The default step is ``1e-5`` times the window diagonal (the ``[-3, 3]^2``
    window when none is given).
    """
    if step is None:
        diag = window.diagonal if window is not None else DEFAULT_FD_WINDOW_DIAGONAL
        step = 1e-5 * diag
    if not (step > 0 and math.isfinite(step)):
        raise InvalidInputError("finite-difference step must be positive")
    h = float(step)
    return ScalarField2(
        name=name,
        value_fn=value_fn,
        gradient_fn=lambda x, y: central_gradient(value_fn, x, y, h),
        hessian_fn=lambda x, y: central_hessian(value_fn, x, y, h),
        derivative_mode=FINITE_DIFFERENCE,
        params={**(params or {}), "fd_step": h},
    )


def check_derivatives(field: ScalarField2, p, h: float = 1e-4) -> tuple[float, float]:
    """Max-norm gaps between the field's derivatives and central differences of its value."""
    if not (h > 0 and math.isfinite(h)):
        raise InvalidInputError("step h must be positive")
    p = p if isinstance(p, Point2) else Point2(*p)
    x, y = np.float64(p.x), np.float64(p.y)
    fd_g = central_gradient(field.value, x, y, h)
    fd_h = central_hessian(field.value, x, y, h)
    g = field.gradient(x, y)
    H = field.hessian(x, y)
    grad_err = max(abs(float(a) - float(b)) for a, b in zip(g, fd_g))
    hess_err = max(abs(float(a) - float(b)) for a, b in zip(H, fd_h))
    return grad_err, hess_err


def polynomial_field(terms: Sequence[Sequence[float]], name: str = "poly") -> ScalarField2:
    """Bivariate polynomial from ``(i, j, c)`` triples meaning ``c * x**i * y**j``."""
    cleaned = []
    for t in terms:
        if len(t) != 3:
            raise InvalidInputError(f"monomial triple expected, got {t!r}")
        i, j, c = t
        if int(i) != i or int(j) != j or i < 0 or j < 0:
            raise InvalidInputError(f"exponents must be non-negative integers: {t!r}")
        if not math.isfinite(c):
            raise InvalidInputError(f"non-finite coefficient in {t!r}")
        cleaned.append((int(i), int(j), float(c)))
    if not cleaned:
        raise InvalidInputError("polynomial needs at least one term")
    triples = tuple(cleaned)

    def mono(x, y, i, j):
        # x**0 must be 1 even where x == 0
        return (x**i if i else 1.0) * (y**j if j else 1.0)

    def value(x, y):
        out = np.zeros_like(x)
        for i, j, c in triples:
            out = out + c * mono(x, y, i, j)
        return out

    def grad(x, y):
        gx = np.zeros_like(x)
        gy = np.zeros_like(x)
        for i, j, c in triples:
            if i:
                gx = gx + c * i * mono(x, y, i - 1, j)
            if j:
                gy = gy + c * j * mono(x, y, i, j - 1)
        return gx, gy

    def hess(x, y):
        hxx = np.zeros_like(x)
        hxy = np.zeros_like(x)
        hyy = np.zeros_like(x)
        for i, j, c in triples:
            if i > 1:
                hxx = hxx + c * i * (i - 1) * mono(x, y, i - 2, j)
            if i and j:
                hxy = hxy + c * i * j * mono(x, y, i - 1, j - 1)
            if j > 1:
                hyy = hyy + c * j * (j - 1) * mono(x, y, i, j - 2)
        return hxx, hxy, hyy

    return ScalarField2(name, value, grad, hess, ANALYTIC, {"terms": [list(t) for t in triples]})


def max_field(f: ScalarField2, g: ScalarField2) -> ScalarField2:
    """Pointwise ``max{f, g}``; derivatives are taken from the active branch."""

    def value(x, y):
        return np.maximum(f.value(x, y), g.value(x, y))

    def pick(x, y, a, b):
        use_f = f.value(x, y) >= g.value(x, y)
        return tuple(np.where(use_f, u, v) for u, v in zip(a, b))

    def grad(x, y):
        return pick(x, y, f.gradient(x, y), g.gradient(x, y))

    def hess(x, y):
        return pick(x, y, f.hessian(x, y), g.hessian(x, y))

    return ScalarField2(f"max({f.name},{g.name})", value, grad, hess, ANALYTIC,
                        {"f": f.spec(), "g": g.spec()})


def lattice_values(field: ScalarField2, grid: GridSpec) -> np.ndarray:
    X, Y = grid.mesh()
    return field.value(X, Y)
