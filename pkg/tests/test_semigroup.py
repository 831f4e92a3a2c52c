import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semithermo.maps import parse_map
from semithermo.semigroup import (
    Annulus,
    Disk,
    DiskUnion,
    MultiMap,
    attracting_cycles,
    backward_step,
    certify_expanding,
    check_osc,
    detect_power_form,
    evaluate_word,
    julia_backward_cloud,
    occupancy,
    postcritical_set,
    repelling_fixed_point,
    word_deriv_lognorm,
)
from semithermo.sphere import INF, MobiusMap, chordal_distance

from conftest import family

words = st.lists(st.integers(1, 2), max_size=6).map(tuple)


def test_multimap_basics():
    F = MultiMap.parse(["z^2", "z^3 - 1"])
    assert F.s == 2 and F.degrees == (2, 3) and F.d == 5
    assert F[2](0) == -1
    with pytest.raises(ValueError):
        MultiMap([])


@pytest.mark.parametrize(
    "exprs,word,z,expected",
    [(["z^2 - 1", "z^2/4"], (1, 2), 1, 0), (["z^2"], (), 0.3 + 1j, 0.3 + 1j), (["z^2"], (1, 1, 1), 2, 256)],
)
def test_evaluate_word_examples(exprs, word, z, expected):
    assert evaluate_word(MultiMap.parse(exprs), word, z) == pytest.approx(expected)


def test_evaluate_word_rejects_bad_symbol():
    with pytest.raises(ValueError):
        evaluate_word(MultiMap.parse(["z^2"]), (2,), 0.5)


@given(words, words, st.complex_numbers(max_magnitude=1.2, allow_nan=False, allow_infinity=False))
def test_word_concatenation_is_composition(w1, w2, z):
    F = MultiMap.parse(["z^2 - 1", "0.09*z^2"])
    lhs = evaluate_word(F, w1 + w2, z)
    rhs = evaluate_word(F, w2, evaluate_word(F, w1, z))
    assert chordal_distance(lhs, rhs) < 1e-12


def test_word_deriv_examples():
    F = MultiMap.parse(["z^2"])
    assert word_deriv_lognorm(F, (1, 1), np.exp(0.4j)) == pytest.approx(2 * math.log(2))
    assert word_deriv_lognorm(F, (), 0.7) == 0.0
    G = family("basilica")
    assert word_deriv_lognorm(G, (2,), 1) == pytest.approx(math.log(0.18 * 2 / (1 + 0.09 ** 2)), rel=1e-13)
    assert word_deriv_lognorm(G, (1,), 0) == -math.inf


@settings(max_examples=60)
@given(words, words, st.complex_numbers(min_magnitude=0.05, max_magnitude=1.5, allow_nan=False, allow_infinity=False))
def test_word_deriv_additivity(w1, w2, y):
    F = family("basilica")
    total = word_deriv_lognorm(F, w1 + w2, y)
    parts = word_deriv_lognorm(F, w1, y) + word_deriv_lognorm(F, w2, evaluate_word(F, w1, y))
    if math.isinf(total) or math.isinf(parts):
        assert total == parts
    else:
        assert total == pytest.approx(parts, abs=1e-8)


def test_postcritical_examples():
    pcs = postcritical_set(family("z2"))
    assert pcs.bounded
    assert sorted(map(str, pcs.points)) == sorted(map(str, [0j, INF]))
    pcs = postcritical_set(family("z2_rot"))
    assert pcs.bounded and len(pcs.points) == 2
    assert postcritical_set(family("basilica")).bounded
    assert not postcritical_set(MultiMap.parse(["z^2 - 3", "z^2"])).bounded


def test_postcritical_contains_critical_values():
    F = family("quartic")
    pcs = postcritical_set(F, depth=3)
    for m in F.maps:
        for v in m.critical_values():
            assert min(chordal_distance(v, p) for p in pcs.points) < 1e-9


def test_attracting_cycles_find_period_two():
    cyc = attracting_cycles(MultiMap.parse(["z^2 - 1"]))
    pts = sorted(round(p.real, 9) for c in cyc for p in c.points if np.isfinite(p))
    assert -1.0 in pts and 0.0 in pts


def test_certify_examples():
    c = certify_expanding(family("z2"))
    assert c.certified and c.distance == pytest.approx(math.sqrt(2), abs=1e-3)
    assert certify_expanding(MultiMap.parse(["z^2", "4*z^2"])).certified
    fail = certify_expanding(MultiMap.parse(["z^2 - 2"]))
    assert fail.verdict == "failed" and fail.witness is not None
    assert certify_expanding(family("basilica")).certified


def test_repelling_fixed_point():
    z = repelling_fixed_point(parse_map("z^2 - 1"))
    assert z == pytest.approx((1 + 5 ** 0.5) / 2)
    assert repelling_fixed_point(parse_map("z^2")) == pytest.approx(1)


def test_osc_examples():
    F = MultiMap.parse(["z^2", "-z^2"])
    res = check_osc(F, Annulus(0, 0.5, 2))
    assert res.verdict == "violated" and res.witnesses
    assert check_osc(family("z2")).verdict == "osc"
    quartic = family("quartic")
    assert check_osc(quartic, Annulus(0, 0.25, 4.5)).verdict == "separating-osc"
    # 0 is fixed by both generators, so a disk around the Julia set cannot work
    assert check_osc(quartic, Disk(0, 4.5)).verdict == "violated"


def test_osc_region_types():
    U = DiskUnion((Disk(-1, 0.5), Disk(1, 0.5)))
    assert U.depth(np.array([1.0]))[0] == pytest.approx(0.5)
    assert Annulus(0, 1, 2).depth(np.array([1.5]))[0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        DiskUnion(tuple(Disk(k, 0.1) for k in range(9)))


def test_power_form_examples():
    pf = detect_power_form(MultiMap.parse(["z^2", "0.3*z^3"]))
    assert pf is not None and pf.degrees == (2, 3) and not pf.equal_degrees
    pf = detect_power_form(MultiMap.parse(["(z-1)^2 + 1", "5*(z-1)^3 + 1"]))
    assert pf is not None
    assert pf.phi(1) == pytest.approx(0) and pf.phi(INF) == INF
    assert detect_power_form(family("basilica")) is None
    pf = detect_power_form(MultiMap.parse(["1/z^2", "3*z^2"]))
    assert pf is not None and sorted(pf.signs) == [-1, 1]
    pf = detect_power_form(family("z3_pair"))
    assert pf is not None and pf.d0 == 3


def test_power_form_reproduces_generators():
    F = MultiMap.parse(["2*(z-0.5j)^3 + 0.5j", "-(z-0.5j)^3 + 0.5j"])
    pf = detect_power_form(F)
    assert pf is not None
    inv = pf.phi.inverse()
    for j, m in enumerate(F.maps):
        for z in [0.3, 1 + 1j, -2j]:
            lhs = pf.phi(m(inv(z)))
            rhs = pf.coefficients[j] * z ** (pf.signs[j] * pf.degrees[j])
            assert chordal_distance(lhs, rhs) < 1e-7


@pytest.mark.parametrize("name", ["z3_pair", "basilica", "z2_z3"])
def test_power_form_invariant_under_conjugation(name, rng):
    F = family(name)
    base = detect_power_form(F) is not None
    for _ in range(5):
        a = complex(*rng.uniform(0.5, 2, 2)) * (1 if rng.random() < 0.5 else -1)
        b = complex(*rng.uniform(-1, 1, 2))
        G = F.conjugated(MobiusMap.affine(a, b))
        assert (detect_power_form(G) is not None) == base


@pytest.mark.parametrize("exprs", [["z^2"], ["z^3"]])
def test_backward_cloud_on_circle(exprs):
    cloud = julia_backward_cloud(MultiMap.parse(exprs), 5000, burn_in=50, seed=3)
    assert cloud.size == 5000
    assert np.max(np.abs(np.abs(cloud) - 1)) < 1e-6


def test_backward_cloud_quartic_extent_and_invariance():
    F = family("quartic")
    cloud = julia_backward_cloud(F, 1_000_000, seed=1)
    # J(G) contains the Julia set {|z| = 4} of the second generator
    r = np.abs(cloud)
    assert r.max() <= 4 + 1e-9 and r.max() > 3.99
    assert r.min() > 0.25
    vp = (-4.5, 4.5, -4.5, 4.5)
    before = occupancy(cloud, vp)
    after = occupancy(backward_step(F, cloud, seed=2), vp)
    changed = np.count_nonzero(before ^ after)
    assert changed < 0.02 * np.count_nonzero(before)


def test_backward_cloud_deterministic():
    F = family("basilica")
    a = julia_backward_cloud(F, 3000, seed=5)
    b = julia_backward_cloud(F, 3000, seed=5)
    np.testing.assert_array_equal(a, b)


def test_rotation_pair_keeps_unit_circle(rng):
    F = MultiMap.parse(["z^2", "exp(2.1*i)*z^2"])
    # one skew step preserves |z| = 1 up to rounding
    for z in np.exp(1j * rng.uniform(0, 2 * np.pi, 500)):
        for j in (1, 2):
            assert abs(abs(F[j](z)) - 1) < 4e-16
    # along an orbit the rounding error can only double per squaring
    z = np.exp(1j * rng.uniform(0, 2 * np.pi))
    for n, j in enumerate(rng.integers(1, 3, size=30), start=1):
        z = F[int(j)](z)
        assert abs(abs(z) - 1) < 2.0 ** n * 1e-15
