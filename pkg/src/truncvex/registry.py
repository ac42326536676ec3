"""Builtin field registry: name + parameters -> ScalarField2."""

from __future__ import annotations

import numpy as np

from .cassini import cassini_field, g_field
from .errors import InvalidInputError
from .field import ANALYTIC, ScalarField2, polynomial_field


def quadratic_field() -> ScalarField2:
    return ScalarField2(
        "quadratic",
        lambda x, y: x * x + y * y,
        lambda x, y: (2.0 * x, 2.0 * y),
        lambda x, y: (2.0, 0.0, 2.0),
        ANALYTIC,
    )


def saddle_field() -> ScalarField2:
    return ScalarField2(
        "saddle",
        lambda x, y: x * x - y * y,
        lambda x, y: (2.0 * x, -2.0 * y),
        lambda x, y: (2.0, 0.0, -2.0),
        ANALYTIC,
    )


def exp_sum_field() -> ScalarField2:
    """``exp(x + y)``: convex, with threshold levels equal to 0 and never attained."""

    def hess(x, y):
        e = np.exp(x + y)
        return e, e, e

    return ScalarField2(
        "exp-sum",
        lambda x, y: np.exp(x + y),
        lambda x, y: (np.exp(x + y), np.exp(x + y)),
        hess,
        ANALYTIC,
    )


BUILTINS = ("cassini", "cassini-g", "quadratic", "saddle", "exp-sum", "poly")


def make_field(name: str, **params) -> ScalarField2:
    """Build a registry field.

    ``cassini`` takes ``a``, ``cassini-g`` takes ``b`` and ``poly`` takes
    ``terms`` (a list of ``(i, j, c)`` triples).
    """
    if name == "cassini":
        return cassini_field(float(params.get("a", 1.0)))
    if name == "cassini-g":
        return g_field(float(params.get("b", 1.0)))
    if name == "quadratic":
        return quadratic_field()
    if name == "saddle":
        return saddle_field()
    if name == "exp-sum":
        return exp_sum_field()
    if name == "poly":
        terms = params.get("terms")
        if not terms:
            raise InvalidInputError("poly field needs a non-empty 'terms' list")
        return polynomial_field(terms)
    raise InvalidInputError(f"unknown field {name!r}; known: {', '.join(BUILTINS)}")
