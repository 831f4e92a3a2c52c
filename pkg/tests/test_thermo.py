import math

import numpy as np
import pytest

from semithermo.semigroup import Annulus, MultiMap, check_osc, evaluate_word
from semithermo.sphere import chordal_distance
from semithermo.streams import set_workers
from semithermo.thermo import (
    InvalidBasePoint,
    NoSignChange,
    TreeError,
    _bracketed_root,
    bowen_parameter,
    build_preimage_tree,
    check_base_point,
    closed_form_delta,
    depth_for,
    hd_lower_bound,
    log_partition_sum,
    partition_sum,
    poincare_exponent,
    pressure_curve,
    select_base_point,
    verify_inequality,
)

from conftest import family
from oracles import brute_force_partition_sum

LOG2, LOG3 = math.log(2), math.log(3)


def test_tree_single_level():
    tree = build_preimage_tree(MultiMap.parse(["z^2"]), 1, 1)
    leaves = tree.leaves()
    assert [leaf.point for leaf in leaves] == [pytest.approx(-1), pytest.approx(1)]
    assert all(leaf.logderiv == pytest.approx(LOG2) and leaf.word == (1,) for leaf in leaves)


def test_tree_depth_three():
    tree = build_preimage_tree(MultiMap.parse(["z^2"]), 1, 3)
    assert tree.level(3).size == 8
    np.testing.assert_allclose(np.abs(tree.points), 1, atol=1e-14)
    np.testing.assert_allclose(tree.level(3), 3 * LOG2, atol=1e-13)


def test_tree_counts_with_multiplicity():
    tree = build_preimage_tree(family("z2_z3"), 1, 2)
    assert tree.level(2).size == 25


def test_leaves_reproduce_base_point():
    F = MultiMap.parse(["z^2 - 1", "0.5*z^3 + 0.2"])
    z = 0.4 + 1.3j
    tree = build_preimage_tree(F, z, 4)
    for leaf in tree.leaves():
        assert chordal_distance(evaluate_word(F, leaf.word, leaf.point), z) < 1e-8
    assert tree.word_of(4, 0) == (1, 1, 1, 1)
    assert tree.word_of(4, tree.level(4).size - 1) == (2, 2, 2, 2)


def test_invalid_base_point_names_set():
    with pytest.raises(InvalidBasePoint, match="postcritical"):
        build_preimage_tree(MultiMap.parse(["z^2"]), 0, 2)
    with pytest.raises(InvalidBasePoint, match="P\\(G\\)"):
        check_base_point(family("basilica"), -1 + 1e-5)


def test_tree_error_carries_word():
    # 1 = f(infinity), so one branch is the point at infinity
    F = MultiMap.parse(["(z^2 + 1)/z^2"])
    with pytest.raises(InvalidBasePoint):
        build_preimage_tree(F, 1, 2)
    with pytest.raises(TreeError) as err:
        build_preimage_tree(F, 1, 2, check=False)
    assert err.value.word == ()


def test_partition_sum_examples():
    tree = build_preimage_tree(MultiMap.parse(["z^2"]), 1, 1)
    assert partition_sum(tree, 0) == pytest.approx(2, rel=1e-15)
    assert partition_sum(tree, 1) == pytest.approx(1, rel=1e-14)
    assert partition_sum(tree.leaves(), 1) == pytest.approx(1, rel=1e-14)
    rot = build_preimage_tree(MultiMap.parse(["z^2", "exp(0.7*i)*z^2"]), 1, 2)
    assert partition_sum(rot, 2) == pytest.approx(1, rel=1e-13)


def test_log_partition_sum_no_overflow():
    ld = np.array([-800.0, -790.0, 5.0])
    expected = 790.0 * 1 + math.log(math.exp(-10) + 1 + math.exp(-795))
    assert log_partition_sum(ld, 1.0) == pytest.approx(800 + math.log(1 + math.exp(-10)), rel=1e-14)
    assert math.isfinite(log_partition_sum(ld, -3.0))
    del expected


def test_pressure_power_examples():
    t = np.linspace(0, 3, 13)
    pc = pressure_curve(MultiMap.parse(["z^2"]), 1, 5, t)
    np.testing.assert_allclose(pc.values, LOG2 - t * LOG2, atol=1e-12)
    rot = pressure_curve(MultiMap.parse(["z^2", "exp(2.1*i)*z^2"]), 1, 4, t)
    np.testing.assert_allclose(rot.values, math.log(4) - t * LOG2, atol=1e-12)


@pytest.mark.parametrize("exprs", [["z^2", "exp(0.7*i)*z^2"], ["z^3", "exp(2*i)*z^3"], ["z^3", "z^3", "-z^3"]])
def test_pressure_independent_of_depth_for_power_families(exprs):
    # unimodular coefficients keep every leaf on the unit circle with equal norm
    F = MultiMap.parse(exprs)
    tree = build_preimage_tree(F, np.exp(0.3j), 6)
    t = np.linspace(0, 3, 7)
    curves = [np.array([log_partition_sum(tree.level(n), x) / n for x in t]) for n in range(1, 7)]
    for c in curves[1:]:
        np.testing.assert_allclose(c, curves[0], atol=1e-10)


@pytest.mark.parametrize("name", ["quartic", "basilica", "z2_z3", "z3_pair"])
def test_pressure_curve_shape(name):
    F = family(name)
    n = 5
    tree = build_preimage_tree(F, select_base_point(F), n)
    t = np.linspace(0, 4, 33)
    for k in range(1, n + 1):
        pc = pressure_curve(F, None, k, t, tree=tree)
        assert pc.values[0] == pytest.approx(math.log(F.d), abs=1e-12)
        assert pc.leaf_count == F.d ** k
        # log-convexity on the grid
        mid = pc.values[1:-1]
        chord = 0.5 * (pc.values[:-2] + pc.values[2:])
        assert np.all(mid <= chord + 1e-12)
    # strictly decreasing at the deepest level
    assert np.all(np.diff(pc.values) < 0)


@pytest.mark.parametrize(
    "exprs",
    [["z^2 - 1", "0.09*z^2"], ["z^3 - 0.5*z + 0.1", "0.8*z^2 + 0.2j"], ["z^2", "z^3"], ["z^3 + 0.3*z^2"]],
)
@pytest.mark.parametrize("n", [1, 2, 3])
def test_brute_force_oracle(exprs, n):
    F = MultiMap.parse(exprs)
    z = 0.37 + 1.21j
    tree = build_preimage_tree(F, z, n, check=False)
    for t in (0.5, 1.3, 2.0):
        assert partition_sum(tree, t) == pytest.approx(brute_force_partition_sum(F, z, n, t), rel=1e-7)


def test_bracketed_root_errors():
    with pytest.raises(NoSignChange):
        _bracketed_root(lambda t: 1.0 + 0 * t)
    root, lo, hi = _bracketed_root(lambda t: 3.0 - t)
    assert root == pytest.approx(3) and (lo, hi) == (2.0, 4.0)
    assert _bracketed_root(lambda t: 1.0 - t)[0] == 1.0


def test_bowen_single_map():
    est = bowen_parameter(MultiMap.parse(["z^2"]), 1, n_max=16)
    assert est.delta_hat == pytest.approx(1, abs=1e-6)
    assert est.bracket[0] <= est.delta_hat <= est.bracket[1]
    assert all(r >= 0 for r in est.roots)


@pytest.mark.parametrize("theta", [0.0, 1.3])
def test_bowen_power_pairs(theta):
    F = MultiMap.parse(["z^3", f"exp({theta}*i)*z^3"])
    assert bowen_parameter(F, 1, n_max=6).delta_hat == pytest.approx(1 + LOG2 / LOG3, abs=1e-3)
    G = MultiMap.parse(["z^2", f"exp({theta}*i)*z^2"])
    assert bowen_parameter(G, 1, n_max=8).delta_hat == pytest.approx(2, abs=1e-3)


def test_bowen_requires_depth():
    with pytest.raises(ValueError):
        bowen_parameter(MultiMap.parse(["z^2"]), 1, n_max=2)


def test_poincare_examples():
    assert poincare_exponent(MultiMap.parse(["z^2"]), 1, n_max=10) == pytest.approx(1, abs=1e-3)
    F = MultiMap.parse(["z^3", "exp(0.4*i)*z^3"])
    assert poincare_exponent(F, 1, n_max=6) == pytest.approx(1 + LOG2 / LOG3, abs=5e-3)
    tree = build_preimage_tree(F, 1, 5)
    assert poincare_exponent(F, t_grid=np.linspace(0.5, 3, 11), tree=tree) == pytest.approx(1.630930, abs=5e-3)
    with pytest.raises(ValueError):
        poincare_exponent(F, 1, n_max=2)


def test_poincare_agrees_with_bowen_quartic():
    F = family("quartic")
    tree = build_preimage_tree(F, select_base_point(F), 6)
    est = bowen_parameter(F, tree=tree, certificate="certified-heuristic")
    assert poincare_exponent(F, tree=tree) == pytest.approx(est.delta_hat, abs=2e-2)


@pytest.mark.parametrize("s,d0,expected", [(1, 2, 1.0), (2, 2, 2.0), (2, 3, 1.630930)])
def test_closed_form(s, d0, expected):
    assert closed_form_delta(s, d0) == pytest.approx(expected, abs=1e-6)


def test_closed_form_rejects():
    with pytest.raises(ValueError):
        closed_form_delta(2, 1)


def test_hd_lower_bound_examples():
    assert hd_lower_bound(family("z2_rot"), LOG2) == pytest.approx(2)
    assert hd_lower_bound(family("quartic"), math.log(4)) == 1.5
    assert hd_lower_bound(family("z2"), LOG2) == 1.0
    with pytest.raises(ValueError):
        hd_lower_bound(family("z2"), 0.0)


def test_depth_schedule():
    assert depth_for(family("z2")) == 24
    assert depth_for(family("quartic")) == 8
    assert depth_for(family("basilica")) == 12
    assert depth_for(family("z3_pair")) == 9


def test_base_point_robustness():
    F = family("z3_pair")
    a = bowen_parameter(F, -1, n_max=8, certificate="certified-heuristic")
    b = bowen_parameter(F, 0.3 + 1.1j, n_max=8, certificate="certified-heuristic")
    assert abs(a.delta_hat - b.delta_hat) < 2 * max(a.error, b.error)


def test_uncertified_warns():
    with pytest.warns(UserWarning):
        bowen_parameter(MultiMap.parse(["z^2"]), 1, n_max=4, certificate="inconclusive")


def test_osc_cap_quartic():
    F = family("quartic")
    assert check_osc(F, Annulus(0, 0.25, 4.5)).verdict in ("osc", "separating-osc")
    est = bowen_parameter(F, select_base_point(F), n_max=6, certificate="certified-heuristic")
    assert est.delta_hat <= 2 + 3 * est.cauchy_gap


def test_tree_worker_independence():
    F = family("basilica")
    set_workers(1)
    a = build_preimage_tree(F, 1.618, 8, check=False)
    set_workers(3)
    b = build_preimage_tree(F, 1.618, 8, check=False)
    set_workers(1)
    np.testing.assert_array_equal(a.points, b.points)
    assert log_partition_sum(a.level(8), 1.7) == log_partition_sum(b.level(8), 1.7)


@pytest.mark.parametrize(
    "name,equality,power",
    [("z3_pair", "yes", "yes"), ("z2", "yes", "yes"), ("basilica", "no", "no"), ("z2_z3", "no", "no")],
)
def test_verify_inequality_examples(name, equality, power):
    F = family(name)
    rep = verify_inequality(F, n_max=min(depth_for(F), 12), n_samples=2000, n_words=200, seed=3)
    assert rep.inequality == "pass"
    assert rep.equality == equality and rep.power_form == power
    assert rep.consistent
    if name == "basilica":
        assert rep.delta.delta_hat > 2
