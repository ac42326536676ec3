import math

import numpy as np
from hypothesis import assume, given, settings, strategies as st

from truncvex import (
    SymMat2, cassini_field, is_positive_definite, is_positive_semidefinite, known_collision, make_field,
    subdifferential_of_truncation, truncate,
)
from truncvex.export import dumps

finite = st.floats(-1e6, 1e6, allow_nan=False)
coord = st.floats(-3, 3, allow_nan=False)
matrices = st.builds(SymMat2, finite, finite, finite)


@given(matrices)
def test_pd_implies_psd(m):
    if is_positive_definite(m):
        assert is_positive_semidefinite(m)


@given(matrices, st.floats(1e-3, 1e3))
def test_pd_scale_invariant(m, t):
    assert is_positive_definite(m.scaled(t)) == is_positive_definite(m)


@given(matrices)
def test_pd_matches_eigenvalues(m):
    lo, hi = m.eigvalsh()
    assume(abs(lo) > 1e-6 * max(1.0, abs(hi)))
    assert is_positive_definite(m) == (lo > 0)


@settings(max_examples=200)
@given(coord, coord, st.floats(-2, 5), st.floats(-2, 5))
def test_truncation_chain(x, y, q1, q2):
    f = cassini_field(1.0)
    q1, q2 = max(q1, q2), min(q1, q2)
    fv = f.value_at((x, y))
    t1 = truncate(f, q1).value_at((x, y))
    t2 = truncate(f, q2).value_at((x, y))
    assert t1 >= fv and t1 >= q1 and t1 >= t2


@given(coord, coord, st.floats(-2, 5), st.floats(0, 5))
def test_sublevel_identity(x, y, q, dr):
    f = cassini_field(1.0)
    r = q + dr
    assert (truncate(f, q).value_at((x, y)) <= r) == (f.value_at((x, y)) <= r)


@given(coord, coord, st.floats(-2, 5))
def test_subdifferential_contains_its_gradient_end(x, y, q):
    f = cassini_field(1.0)
    s = subdifferential_of_truncation(f, q, (x, y))
    if s.kind == "singleton_zero":
        assert s.contains((0.0, 0.0))
    else:
        assert s.contains(f.gradient_at((x, y)), tol=1e-9)


@settings(max_examples=200)
@given(st.floats(0.3, 3.0), st.floats(0.001, 0.999))
def test_known_collision_is_exact(a, u):
    a4 = a**4
    c = -a4 + u * 4 * a4
    f = cassini_field(a)
    p1, p2, image = known_collision(a, c)
    scale = max(1.0, abs(image[1]))
    g1, g2 = np.array(f.gradient_at(p1)), np.array(f.gradient_at(p2))
    assert np.abs(g1 - g2).max() <= 1e-9 * scale
    assert abs(f.value_at(p1) - c) <= 1e-9 * max(1.0, a4)
    assert p1.dist(p2) > 0


@given(st.floats(0.2, 4.0), coord, coord)
def test_cassini_scaling(a, x, y):
    lhs = cassini_field(a).value_at((x, y))
    rhs = a**4 * cassini_field(1.0).value_at((x / a, y / a))
    assert math.isclose(lhs, rhs, rel_tol=1e-12, abs_tol=1e-12 * max(1.0, a**4))


@given(coord, coord)
def test_saddle_gradient_is_linear(x, y):
    assert make_field("saddle").gradient_at((x, y)) == (2 * x, -2 * y)


@given(st.dictionaries(st.text(max_size=5), st.floats(allow_nan=True, allow_infinity=True), max_size=6))
def test_dumps_is_stable(d):
    text = dumps(d)
    assert text == dumps(dict(reversed(list(d.items()))))
    assert "NaN" not in text and "Infinity" not in text
