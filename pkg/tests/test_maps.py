import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semithermo.maps import (
    ParseError,
    Polynomial,
    RationalMap,
    critical_points,
    evaluate,
    parse_constant,
    parse_map,
    preimages,
    resultant,
    roots,
)
from semithermo.sphere import INF, chordal_distance


def _close_multiset(got, expected, tol=1e-9):
    got = sorted(got, key=lambda z: (np.isfinite(z), z.real if np.isfinite(z) else 0, z.imag if np.isfinite(z) else 0))
    expected = sorted(expected, key=lambda z: (np.isfinite(z), z.real if np.isfinite(z) else 0,
                                               z.imag if np.isfinite(z) else 0))
    assert len(got) == len(expected)
    for a, b in zip(got, expected):
        assert chordal_distance(a, b) < tol, (got, expected)


@pytest.mark.parametrize("expr,z,expected", [("z^2 - 1", 0, -1), ("z^2", INF, INF), ("z^2/4", 2, 1), ("1/z", 0, INF)])
def test_evaluate_examples(expr, z, expected):
    assert chordal_distance(evaluate(parse_map(expr), z), expected) < 1e-15


def test_rational_at_infinity():
    f = parse_map("(2*z^2 + 1)/(z^2 - 3)")
    assert f(INF) == pytest.approx(2.0)
    assert parse_map("(z + 1)/(z^2 + 1)")(INF) == 0


@pytest.mark.parametrize(
    "coeffs,expected",
    [([-1, 0, 1], [-1, 1]), ([0, 0, 0, 1], [0, 0, 0]), ([1, -4, 4], [0.5, 0.5])],
)
def test_roots_examples(coeffs, expected):
    r = roots(coeffs)
    assert len(r) == len(expected)
    np.testing.assert_allclose(np.sort_complex(r), np.sort_complex(np.array(expected, dtype=complex)), atol=1e-9)


@pytest.mark.parametrize("n", [4, 8, 12, 16])
def test_roots_wilkinson_scaled(n):
    # roots 1..n scaled into [-1, 1]; residual bound relative to coefficients
    target = np.linspace(-1, 1, n)
    c = np.polynomial.polynomial.polyfromroots(target).astype(complex)
    r = roots(c, merge=False)
    scale = np.max(np.abs(c))
    res = np.abs(np.polynomial.polynomial.polyval(r, c)) / (scale * np.maximum(1, np.abs(r)) ** n)
    assert res.max() <= 1e-9
    assert len(r) == n


def test_roots_against_numpy(rng):
    for deg in range(1, 9):
        c = rng.normal(size=deg + 1) + 1j * rng.normal(size=deg + 1)
        ours = roots(c)
        ref = np.roots(c[::-1])
        _close_multiset(list(ours), list(ref), tol=1e-8)


@pytest.mark.parametrize(
    "expr,expected",
    [("z^2", [(0, 1), (INF, 1)]), ("z^2 - 1", [(0, 1), (INF, 1)]), ("z^3 - 3*z", [(-1, 1), (1, 1), (INF, 2)])],
)
def test_critical_point_examples(expr, expected):
    got = critical_points(parse_map(expr))
    assert len(got) == len(expected)
    for (p, m), (q, k) in zip(got, expected):
        assert chordal_distance(p, q) < 1e-9 and m == k


@pytest.mark.parametrize("expr", ["z^2", "3*(z-1)^4 + 1", "(z^2 + 1)/(z^2 - 2*z)", "1/z^3", "z^3 - 0.4*z + 2j"])
def test_critical_points_count_and_vanishing(expr):
    f = parse_map(expr)
    pts = critical_points(f)
    assert sum(m for _, m in pts) == 2 * f.degree - 2
    for p, _ in pts:
        assert f.sph_deriv(p) < 1e-8


def test_mobius_has_no_critical_points():
    assert critical_points(parse_map("(2*z + 1)/(z - 3)")) == []


@pytest.mark.parametrize(
    "expr,w,expected",
    [("z^2", 1, [-1, 1]), ("z^2", 0, [0, 0]), ("z^2 - 1", -1, [0, 0]), ("z^2", INF, [INF, INF]),
     ("1/z^2", 0, [INF, INF]), ("(z^2 + 1)/z", INF, [0, INF])],
)
def test_preimage_examples(expr, w, expected):
    _close_multiset(preimages(parse_map(expr), w), [complex(e) for e in expected])


def test_preimage_order_is_canonical():
    ys = preimages(parse_map("z^4 - 2*z^2"), 0.5 + 0.1j)
    assert ys == sorted(ys, key=lambda z: (z.real, z.imag))
    ys = preimages(parse_map("(z^2 + 1)/z"), INF)
    assert ys[-1] == INF


@settings(max_examples=60)
@given(
    st.lists(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False), min_size=3, max_size=5),
    st.complex_numbers(max_magnitude=20, allow_nan=False, allow_infinity=False),
)
def test_preimages_reevaluate(coeffs, w):
    if abs(coeffs[-1]) < 0.1:
        return
    f = RationalMap(coeffs)
    ys = preimages(f, w)
    assert len(ys) == f.degree
    for y in ys:
        assert chordal_distance(f(y), w) < 1e-9


def test_preimage_multiplicity_at_critical_values():
    f = parse_map("z^3 - 3*z")
    for c, _ in critical_points(f):
        if np.isfinite(c):
            assert len(preimages(f, f(c))) == 3


def test_polynomial_invariants():
    p = Polynomial(np.array([1, 2, 0, 0], dtype=complex))
    assert p.degree == 1 and p.lead == 2
    with pytest.raises(ValueError):
        p.coeffs[0] = 5


def test_rational_map_rejects_common_factor():
    with pytest.raises(ValueError):
        RationalMap([-1, 0, 1], [1, 1])  # (z^2 - 1)/(z + 1)
    assert abs(resultant(np.array([-1, 0, 1], dtype=complex), np.array([1, 1], dtype=complex))) < 1e-12
    with pytest.raises(ValueError):
        RationalMap([3.0])


def test_parser_grammar():
    f = parse_map("a*(z-b)^3+b", {"a": 5, "b": 1})
    assert f(2) == pytest.approx(6)
    assert parse_map("0.09*z^2")(10) == pytest.approx(9)
    assert parse_map("z**2 - 1")(3) == pytest.approx(8)
    g = parse_map("exp(0.7*i)*z^2")
    assert g(1) == pytest.approx(np.exp(0.7j))
    h = parse_map("(z^2 + 1)/(2*z - 1j)")
    assert h(1) == pytest.approx(2 / (2 - 1j))
    assert parse_constant("sqrt(2) + pi") == pytest.approx(2 ** 0.5 + np.pi)
    for bad in ["z^", "import os", "q*z", "z^(1/2)", "__import__('os')", "z^2.5"]:
        with pytest.raises(ParseError):
            parse_map(bad)
