import dataclasses
import itertools
import time

import numpy as np
import pytest

from polyprog.counting import ProgressionConfig, counting_operator
from polyprog.field_core import FieldConfig, GroupFunction, character, random_one_bounded
from polyprog.pet import (
    FamilyCollapsed, MultiPoly, PolyFamily, compute_type, extract_directions, family_from_progression,
    format_poly, is_nice, pet_bound_check, pet_coefficient_audit, pet_run, pet_weight, sigma, type_less,
    vdc_step,
)

NAMES = ["v1", "v2"]
GOLDEN_DIRECTIONS = [
    "2(h2+h3)*(v2-v1) + 2h1*v2",
    "2h2*(v2-v1) + 2h1*v2",
    "2h3*(v2-v1) + 2h1*v2",
    "2h1*v2",
    "2(h2+h3)*(v2-v1)",
    "2h2*(v2-v1)",
    "2h3*(v2-v1)",
]


def example_progression(p=5):
    return ProgressionConfig(FieldConfig(p, 2), [(1, 0), (0, 1)], [(0, 0, 1), (0, 1, 1)])


def example_family():
    return family_from_progression(example_progression(), formal=True)


def family(*members, h_count=0):
    return PolyFamily(tuple(members), tuple(range(1, len(members) + 1)), h_count)


def test_tilde_examples():
    q = MultiPoly.from_scalar([0, 0, 1], (1, 0))
    assert q.tilde() == q
    assert MultiPoly.from_dict(2, {(0, 1): (1, 0)}).tilde().is_zero()
    square = MultiPoly.from_dict(2, {(2,): (1, 0), (1, 1): (2, 0), (0, 2): (1, 0)})
    assert square.tilde() == MultiPoly.from_dict(2, {(2,): (1, 0), (1, 1): (2, 0)})


def test_vdc_step_on_example():
    step = vdc_step(example_family(), 1)
    expected = [
        MultiPoly.from_dict(2, {(1, 1): (2, 0)}),
        MultiPoly.from_dict(2, {(2,): (-1, 1), (1,): (0, 1)}),
        MultiPoly.from_dict(2, {(2,): (-1, 1), (1,): (0, 1), (1, 1): (0, 2)}),
    ]
    assert list(step.members) == expected
    assert step.h_count == 1
    assert step.provenance == (1, 2, 2)


def test_vdc_step_single_linear_member_collapses():
    with pytest.raises(FamilyCollapsed, match="family collapsed"):
        vdc_step(family(MultiPoly.from_scalar([0, 1], (1,))), 1)


def test_three_steps_give_seven_linear_members():
    F = example_family()
    for _ in range(3):
        F = vdc_step(F, 1)
    assert len(F) == 7
    assert max(F.degrees()) == 1


def test_is_nice_examples():
    assert is_nice(example_family())
    v = (1, 0)
    assert not is_nice(family(MultiPoly.from_scalar([0, 1], v), MultiPoly.from_scalar([1, 1], v)))
    assert not is_nice(family(MultiPoly.from_scalar([0, 0, 1], v), MultiPoly.from_scalar([0, 1], v)))


def test_golden_pet_run():
    start = time.perf_counter()
    result = pet_run(example_family())
    assert result.steps == (1, 1, 1)
    assert result.s_prime == 3 and result.s == 7
    assert [format_poly(c, NAMES) for c in result.directions] == GOLDEN_DIRECTIONS
    audit = pet_coefficient_audit(result, example_progression(), formal=True)
    assert audit.ok
    assert audit.by_variable == {"h1": [0, 2], "h2": [1, 2], "h3": [1, 2]}
    assert time.perf_counter() - start < 1.0


def test_pet_weight_decreases_each_step():
    result = pet_run(example_family())
    weights = [pet_weight(F) for F in result.history]
    for a, b in zip(weights, weights[1:]):
        width = max(len(a), len(b))
        assert (0,) * (width - len(b)) + b < (0,) * (width - len(a)) + a
    for F, G in zip(result.history, result.history[1:]):
        assert len(G) <= 2 * len(F)


def test_linear_family_needs_no_steps():
    F = family(MultiPoly.from_scalar([0, 1], (1, 0)), MultiPoly.from_scalar([0, 2], (0, 1)))
    result = pet_run(F)
    assert result.s_prime == 0
    assert [format_poly(c, NAMES) for c in result.directions] == ["2v2", "2v2 - v1"] or \
        [c.as_dict()[(0,)] for c in result.directions] == [(0, 2), (-1, 2)]
    assert pet_coefficient_audit(result, ProgressionConfig(FieldConfig(5, 2), [(1, 0), (0, 1)],
                                                           [(0, 1), (0, 2)]), formal=True).ok


def test_single_quadratic_member_gives_multiples_of_v():
    v = (1, 2)
    result = pet_run(family(MultiPoly.from_scalar([0, 0, 1], v)))
    for c in result.directions:
        for _, coeff in c.terms:
            k = coeff[0]
            assert coeff == (k * v[0], k * v[1])


def test_audit_rejects_perturbed_direction():
    result = pet_run(example_family())
    first = result.directions[0]
    exp, vec = first.terms[0]
    bumped = MultiPoly.from_dict(2, {**first.as_dict(), exp: (vec[0] + 1, vec[1])})
    tampered = dataclasses.replace(result, directions=(bumped,) + result.directions[1:])
    assert not pet_coefficient_audit(tampered, example_progression(), formal=True).ok


@pytest.mark.parametrize("polys", [
    [(0, 0, 1), (0, 1, 1)],
    [(0, 1), (0, 0, 1), (0, 1, 1)],
    [(0, 0, 1), (0, 0, 2), (0, 1, 1)],
    [(0, 0, 1), (0, 1, 1), (0, 2, 1)],
    [(0, 0, 0, 1)],
])
def test_pet_terminates_on_nice_families(polys):
    vecs = [(1, 0, 0), (0, 1, 0), (0, 0, 1)][: len(polys)]
    pc = ProgressionConfig(FieldConfig(5, 3), vecs, polys)
    result = pet_run(family_from_progression(pc, formal=True))
    assert max(result.final_family.degrees()) == 1
    assert is_nice(result.final_family)
    assert result.final_family.provenance[-1] == len(polys)


def test_pet_reports_family_blowup():
    pc = ProgressionConfig(FieldConfig(5, 3), [(1, 0, 0), (0, 1, 0), (0, 0, 1)], [(0, 1), (0, 0, 1), (0, 0, 0, 1)])
    with pytest.raises(RuntimeError, match="members"):
        pet_run(family_from_progression(pc, formal=True), max_members=512)


def test_extract_directions_examples():
    pc = example_progression()
    ctrl = extract_directions(pc)
    assert [tuple(v) for v in ctrl.vectors] == [(0, 1), (-1, 1)]
    assert ctrl.multiplicity == 7 and ctrl.controlled_index == 2
    single = ProgressionConfig(FieldConfig(5, 2), [(2, 3)], [(0, 0, 1)])
    assert [tuple(v) for v in extract_directions(single).vectors] == [(2, 3)]
    assert extract_directions(pc, multiplicity=2).entries(pc.cfg) == [(0, 1), (0, 1), (4, 1), (4, 1)]


def test_extract_directions_rejects_non_distinct():
    pc = ProgressionConfig(FieldConfig(5, 2), [(1, 0), (1, 0)], [(0, 1), (0, 1)])
    with pytest.raises(ValueError):
        extract_directions(pc)


def test_type_examples():
    cfg = FieldConfig(5, 2)
    vecs = [(1, 0), (0, 1), (1, 1), (1, 2), (1, 3)]
    pc = ProgressionConfig(cfg, vecs, [(0, 0, 1), (0, 1), (0, 1, 1), (0, 2, 1), (0, 1, 2)], eta=(1, 2, 3, 1, 3))
    w = compute_type(pc)
    assert tuple(w) == (2, 0, 2, 0, 0) and w.K == 4 and not w.basic
    distinct = ProgressionConfig(cfg, vecs[:3], [(0, 1), (0, 0, 1), (0, 0, 0, 1)])
    assert tuple(compute_type(distinct)) == (0, 0, 1) and compute_type(distinct).basic
    constant_eta = ProgressionConfig(cfg, vecs[:3], [(0, 0, 1), (0, 1, 1), (0, 2, 1)], eta=(1, 1, 1))
    assert tuple(compute_type(constant_eta)) == (3, 0, 0) and compute_type(constant_eta).basic


def test_sigma_and_order():
    assert tuple(sigma((2, 3, 7), 1, 2)) == (1, 4, 7)
    with pytest.raises(ValueError):
        sigma((0, 3, 7), 1, 2)
    for chain in ([(4, 0, 0), (3, 1, 0), (2, 2, 0), (2, 1, 1)], [(0, 4, 0), (1, 3, 0), (2, 2, 0), (2, 1, 1)]):
        for a, b in zip(chain, chain[1:]):
            assert type_less(a, b)
            assert not type_less(b, a)
        assert type_less(chain[0], chain[-1])
    assert not type_less((2, 1, 1), (2, 1, 1))


def test_pet_bound_examples():
    pc = example_progression(3)
    ones = [GroupFunction.constant(pc.cfg)] * 3
    lhs, rhs, ok = pet_bound_check(pc, ones)
    assert ok and lhs == pytest.approx(1) and rhs == pytest.approx(1)
    fs = [random_one_bounded(pc.cfg, 10 + j) for j in range(3)]
    assert pet_bound_check(pc, fs).ok
    chi = character(pc.cfg, (1, 1))
    assert pet_bound_check(pc, [fs[0], fs[1], chi]).ok


def test_pet_bound_lhs_is_power_of_count():
    pc = example_progression(3)
    fs = [random_one_bounded(pc.cfg, 20 + j) for j in range(3)]
    res = pet_bound_check(pc, fs)
    assert res.lhs == pytest.approx(abs(counting_operator(pc, fs)) ** 8, abs=1e-12)
