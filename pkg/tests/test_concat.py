import itertools

import pytest

from polyprog.concat import (
    SubgroupFamily, concat_deg1_check, concat_main_check, monomial_det_zero_fraction, monomial_exponents,
    polynomial_concat_check, zero_set_count,
)
from polyprog.counting import BoundViolation
from polyprog.field_core import FieldConfig, GroupFunction, random_one_bounded, subgroup_span, whole_group
from polyprog.norms import box_norm_power
from polyprog.pet import MultiPoly

F5_2 = FieldConfig(5, 2)
F3_2 = FieldConfig(3, 2)


def hpoly(terms):
    """Scalar polynomial in h from {exponents of h: coefficient}."""
    return MultiPoly.from_dict(1, {(0, *e): (c,) for e, c in terms.items()})


def test_concat_deg1_examples():
    one = GroupFunction.constant(F5_2)
    fam = SubgroupFamily.build(F5_2, [[(1, 0)], [(0, 1)]])
    lhs, rhs, ok = concat_deg1_check(one, fam)
    assert ok and lhs == pytest.approx(1) and rhs == pytest.approx(1)
    f = random_one_bounded(F5_2, 2)
    single = SubgroupFamily.build(F5_2, [[(1, 1)]])
    lhs, rhs, ok = concat_deg1_check(f, single)
    assert ok and lhs == pytest.approx(box_norm_power(f, [(1, 1)]) ** 2)


@pytest.mark.parametrize("seed", range(3))
def test_concat_deg1_full_plane_family(seed):
    f = random_one_bounded(F5_2, seed)
    entries = {h: [subgroup_span(F5_2, [h])] for h in itertools.product(range(5), repeat=2)}
    res = concat_deg1_check(f, SubgroupFamily.build(F5_2, entries))
    assert res.ok
    # 145 of the 625 pairs (h, h') are linearly dependent; the rest span the plane
    assert res.rhs <= box_norm_power(f, [whole_group(F5_2)]) + 145 / 625 + 1e-9


def test_concat_main_examples():
    one = GroupFunction.constant(F3_2)
    fam = SubgroupFamily.build(F3_2, [[(1, 0)], [(0, 1)]])
    lhs, rhs, ok = concat_main_check(one, fam, [(1, 1), (1, 2)])
    assert ok and lhs == pytest.approx(1) and rhs == pytest.approx(1)
    f = random_one_bounded(F3_2, 5)
    deg1 = SubgroupFamily.build(F3_2, [[(1, 0)], [(1, 1)]])
    empty = SubgroupFamily(deg1.indices, ((), ()))
    a = concat_main_check(f, empty, [(1, 0), (1, 1)])
    b = concat_deg1_check(f, deg1)
    assert (a.lhs, a.rhs) == pytest.approx((b.lhs, b.rhs))
    for seed in range(3):
        g = random_one_bounded(F3_2, 10 + seed)
        assert concat_main_check(g, fam, [(1, 1), (1, 2)]).ok


def test_family_validation():
    with pytest.raises(ValueError):
        SubgroupFamily.build(F5_2, [[(1, 0)], [(0, 1), (1, 1)]])
    with pytest.raises(ValueError):
        concat_deg1_check(GroupFunction.constant(F5_2), SubgroupFamily.build(F5_2, [[(1, 0), (0, 1)]]))


def test_zero_set_examples():
    assert zero_set_count(hpoly({(1,): 1}), 5) == 1
    det = hpoly({(1, 0, 0, 1): 1, (0, 1, 1, 0): -1})
    assert zero_set_count(det, 3) == 33 == 3 ** 3 + 3 ** 2 - 3
    with pytest.raises(ValueError):
        zero_set_count(hpoly({(): 2}), 5)


def test_zero_set_count_matches_enumeration():
    g = hpoly({(2, 0): 1, (0, 1): 2, (): 1})
    for p in (3, 5, 7):
        brute = sum((a * a + 2 * b + 1) % p == 0 for a, b in itertools.product(range(p), repeat=2))
        assert zero_set_count(g, p) == brute


@pytest.mark.parametrize("p", [3, 5])
def test_zero_set_product_and_disjointness(p):
    g1 = hpoly({(1, 1): 1, (): 1})
    g2 = hpoly({(2, 0): 1, (0, 1): -1})
    prod = hpoly({(3, 1): 1, (1, 2): -1, (2, 0): 1, (0, 1): -1})
    assert zero_set_count(prod, p) >= max(zero_set_count(g1, p), zero_set_count(g2, p))
    shifted = hpoly({(1, 1): 1})
    assert zero_set_count(g1, p) + zero_set_count(shifted, p) <= p ** 2


def test_zero_set_bound_tight_for_split_polynomial():
    # h^2 - h = h (h - 1) meets the bound deg * p^(s-1) = 2 exactly
    assert zero_set_count(hpoly({(2,): 1, (1,): -1}), 5) == 2
    assert issubclass(BoundViolation, AssertionError)


def test_monomial_det_zero_fraction_below_schwartz_zippel():
    assert len(monomial_exponents(2, 2)) == 6
    for p in (5, 7):
        frac = monomial_det_zero_fraction(p, samples=400, seed=1)
        assert frac.degree == 8
        assert frac.fraction <= frac.degree / p


def test_polynomial_concat_constant_directions():
    f = random_one_bounded(F5_2, 3)
    res = polynomial_concat_check(f, [(1, 0)], d=1, s_prime=1)
    assert res.ok and res.exception_fraction == 0
    res2 = polynomial_concat_check(f, [(1, 0), (0, 1)], d=0, s_prime=1)
    assert res2.ok and res2.exponent == 1


def test_polynomial_concat_linear_family():
    f = random_one_bounded(F5_2, 4)
    c = {(0, 0): (1, 1), (1, 0): (1, 0), (0, 1): (0, 1)}
    lhs, rhs, ok, exc = polynomial_concat_check(f, [c], d=1, s_prime=2)
    assert ok
    assert rhs == pytest.approx(box_norm_power(f, [whole_group(F5_2)]), abs=1e-12)
    assert exc <= 5 / 5


def test_polynomial_concat_trivial_function():
    one = GroupFunction.constant(F5_2)
    res = polynomial_concat_check(one, [{(1,): (1, 2)}], d=1, s_prime=1)
    assert res.ok and res.lhs == pytest.approx(1)
    assert res.lhs <= 1 + res.constant / 5 + 1e-9


def test_polynomial_concat_exception_scales_like_one_over_p():
    constants = []
    for p in (3, 5, 7):
        cfg = FieldConfig(p, 2)
        f = random_one_bounded(cfg, 1)
        res = polynomial_concat_check(f, [{(1, 0): (1, 0), (0, 1): (0, 1)}], d=1, s_prime=2)
        assert res.ok
        constants.append(res.constant)
    # C = fraction * p stays bounded as p grows
    assert all(c <= constants[0] + 1e-9 for c in constants)


def test_polynomial_concat_two_directions():
    f = random_one_bounded(F3_2, 6)
    res = polynomial_concat_check(f, [{(1,): (1, 0)}, {(1,): (0, 1)}], d=1, s_prime=1)
    assert res.ok and res.exponent == 256
    assert len(res.steps) == 3


def test_polynomial_concat_rejects_out_of_scope():
    f = random_one_bounded(F3_2, 0)
    with pytest.raises(ValueError):
        polynomial_concat_check(f, [(1, 0)] * 3, d=1, s_prime=1)
    with pytest.raises(ValueError):
        polynomial_concat_check(f, [{(2,): (1, 0)}], d=1, s_prime=1)
