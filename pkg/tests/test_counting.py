import itertools

import numpy as np
import pytest

from polyprog.counting import (
    BoundViolation, DualSpec, ProgressionConfig, counting_operator, dual_difference_interchange_check,
    dual_replacement_check, linear_averages_check, linearly_independent, low_complexity_check,
    pairwise_independent, progression_count, rational_rank, removing_duals_check, structured_count,
    tcount_gap, tilde_dual, weil_gap,
)
from polyprog.field_core import (
    FieldConfig, GroupFunction, IntVecPoly, character, conditional_expectation, random_one_bounded,
    subgroup_span,
)
from polyprog.norms import dual_function, gowers_norm_power

F5 = FieldConfig(5, 1)
F5_2 = FieldConfig(5, 2)


def deg2_progression(p=5):
    return ProgressionConfig(FieldConfig(p, 2), [(1, 0), (0, 1)], [(0, 0, 1), (0, 1, 1)])


def gauss_pair(p):
    cfg = FieldConfig(p, 1)
    pc = ProgressionConfig(cfg, [(1,)], [(0, 0, 1)])
    return pc, [character(cfg, (-1,)), character(cfg, (1,))]


def brute_lambda(pc, fs):
    cfg, p = pc.cfg, pc.cfg.prime
    total = 0j
    for x in range(cfg.order):
        xp = np.array(cfg.point(x))
        for n in range(p):
            val = fs[0].values[x]
            for j in range(1, pc.length + 1):
                shift = np.array(pc.vector_of(j)) * sum(a * n ** i for i, a in enumerate(pc.polys[j - 1]))
                val *= fs[j](tuple(xp + shift))
            total += val
    return total / (cfg.order * p)


def random_fs(pc, seed, kind="unit-phase"):
    return [random_one_bounded(pc.cfg, seed * 31 + j, kind) for j in range(pc.length + 1)]


def test_rank_and_independence():
    assert rational_rank([[0, 1, 0], [0, 2, 0]]) == 1
    assert linearly_independent([(0, 0, 1), (0, 1, 1)])
    assert not linearly_independent([(0, 1), (0, 2)])
    assert pairwise_independent([(0, 1), (0, 0, 1), (0, 1, 1)])
    assert not linearly_independent([(0, 1), (0, 0, 1), (0, 1, 1)])


def test_progression_config_validation():
    with pytest.raises(ValueError):
        ProgressionConfig(F5_2, [(0, 0)], [(0, 1)])
    with pytest.raises(ValueError):
        ProgressionConfig(F5_2, [(1, 0)], [(1, 1)])
    ProgressionConfig(F5_2, [(1, 0)], [(1, 1)], theorem_mode=False)


def test_counting_operator_examples():
    pc = deg2_progression()
    ones = [GroupFunction.constant(pc.cfg)] * 3
    assert counting_operator(pc, ones) == pytest.approx(1, abs=1e-12)
    gpc, gfs = gauss_pair(5)
    assert abs(counting_operator(gpc, gfs)) == pytest.approx(5 ** -0.5, abs=1e-9)
    assert abs(counting_operator(gpc, [GroupFunction.constant(F5), gfs[1]])) < 1e-12
    with pytest.raises(ValueError):
        counting_operator(pc, ones[:2])


@pytest.mark.parametrize("seed", [0, 1])
def test_counting_operator_matches_brute_force(seed):
    pc = deg2_progression(3)
    fs = random_fs(pc, seed, "disk")
    assert counting_operator(pc, fs) == pytest.approx(brute_lambda(pc, fs), abs=1e-9)


def test_counting_operator_is_multilinear():
    pc = deg2_progression()
    fs = random_fs(pc, 2)
    g = random_one_bounded(pc.cfg, 99)
    a, b = 0.3 - 0.2j, 0.5j
    mix = GroupFunction(pc.cfg, a * fs[1].values + b * g.values)
    lhs = counting_operator(pc, [fs[0], mix, fs[2]])
    rhs = a * counting_operator(pc, fs) + b * counting_operator(pc, [fs[0], g, fs[2]])
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_structured_count_examples():
    pc = deg2_progression()
    assert structured_count(pc, [GroupFunction.constant(pc.cfg)] * 3) == pytest.approx(1, abs=1e-12)
    gpc, gfs = gauss_pair(5)
    assert abs(structured_count(gpc, gfs)) < 1e-12
    fs = [random_one_bounded(pc.cfg, 40 + j, "indicator", density=0.5) for j in range(3)]
    lines = [None] + [conditional_expectation(fs[j], subgroup_span(pc.cfg, [pc.vector_of(j)])) for j in (1, 2)]
    brute = 0j
    for x in range(pc.cfg.order):
        brute += fs[0].values[x] * lines[1].values[x] * lines[2].values[x]
    assert structured_count(pc, fs) == pytest.approx(brute / pc.cfg.order, abs=1e-12)


def test_tcount_gap_examples():
    pc = deg2_progression()
    assert tcount_gap(pc, [GroupFunction.constant(pc.cfg)] * 3) == 0
    g5 = tcount_gap(*gauss_pair(5))
    g13 = tcount_gap(*gauss_pair(13))
    assert g5 == pytest.approx(5 ** -0.5, abs=1e-9)
    assert g13 < g5
    dependent = ProgressionConfig(F5_2, [(1, 0), (0, 1)], [(0, 1), (0, 2)])
    with pytest.raises(ValueError, match="not linearly independent"):
        tcount_gap(dependent, [GroupFunction.constant(F5_2)] * 3)


def test_tilde_dual_examples():
    pc = deg2_progression()
    ones = [GroupFunction.constant(pc.cfg)] * 3
    for m in range(3):
        assert np.allclose(tilde_dual(pc, ones, m).values, 1)
    gpc, _ = gauss_pair(5)
    f0 = random_one_bounded(F5, 3)
    t = tilde_dual(gpc, [f0, random_one_bounded(F5, 4)], 1)
    direct = [np.mean([f0.values[(x - n * n) % 5] for n in range(5)]) for x in range(5)]
    # conjugate convention: Lambda = E_x f_m(x) conj(tilde f_m(x))
    assert np.allclose(t.values, np.conj(direct))
    fs = random_fs(pc, 5)
    lam = brute_lambda(pc, fs)
    for m in range(3):
        t = tilde_dual(pc, fs, m)
        assert np.mean(fs[m].values * np.conj(t.values)) == pytest.approx(lam, abs=1e-9)
    with pytest.raises((ValueError, IndexError)):
        tilde_dual(pc, fs, 3)


def test_dual_replacement_examples():
    pc = deg2_progression()
    fs = random_fs(pc, 6)
    zero = GroupFunction(pc.cfg, np.zeros(pc.cfg.order))
    assert dual_replacement_check(pc, fs, 1, zero).identity_gap < 1e-12
    for m in range(3):
        tilde = tilde_dual(pc, fs, m)
        res = dual_replacement_check(pc, fs, m, tilde.conj())
        assert res.ok, res.parts
        assert res.parts["i"]["value"] >= abs(counting_operator(pc, fs)) ** 2 - 1e-9
    res = dual_replacement_check(pc, fs, 2, random_one_bounded(pc.cfg, 8), s=2)
    assert res.ok
    tilde = tilde_dual(pc, fs, 2)
    D = dual_function(tilde, pc.vector_of(2), 2)
    replaced = counting_operator(pc, [fs[0], fs[1], D.conj()])
    assert replaced.real >= gowers_norm_power(tilde, pc.vector_of(2), 2) - 1e-9


def brute_progression_count(S, pc):
    cfg, p = pc.cfg, pc.cfg.prime
    count = 0
    for x in range(cfg.order):
        for n in range(1, p):
            pts = [np.array(cfg.point(x))]
            for j in range(1, pc.length + 1):
                pts.append(pts[0] + np.array(pc.vector_of(j)) * sum(a * n ** i for i, a in enumerate(pc.polys[j - 1])))
            count += all(S(tuple(pt)).real == 1 for pt in pts)
    return count


def test_progression_count_examples():
    pc = deg2_progression()
    full = GroupFunction.constant(pc.cfg)
    assert progression_count(full, pc) == 25 * 4
    assert progression_count(GroupFunction(pc.cfg, np.zeros(25)), pc) == 0
    line = GroupFunction.from_callable(pc.cfg, lambda x: (x[:, 0] == 0).astype(float))
    assert progression_count(line, pc) == brute_progression_count(line, pc)
    with pytest.raises(ValueError):
        progression_count(random_one_bounded(pc.cfg, 0), pc)


@pytest.mark.parametrize("seed", range(4))
def test_progression_count_relation(seed):
    pc = deg2_progression()
    S = random_one_bounded(pc.cfg, seed, "indicator", density=0.6)
    lam = counting_operator(pc, [S] * 3)
    scaled = round((lam * pc.cfg.order * pc.cfg.prime).real)
    assert scaled == progression_count(S, pc) + int(S.values.real.sum())
    assert progression_count(S, pc) == brute_progression_count(S, pc)


def test_weil_gap_examples():
    pc = ProgressionConfig(F5, [(1,)], [(0, 0, 1)])
    assert weil_gap(pc, [0]) == 0
    assert weil_gap(pc, [1]) == pytest.approx(5 ** -0.5, abs=1e-9)
    pc7 = ProgressionConfig(FieldConfig(7, 1), [(1,), (1,)], [(0, 0, 1), (0, 1, 1)])
    assert weil_gap(pc7, [1, 6]) <= 7 ** -0.5 + 1e-9
    big = ProgressionConfig(FieldConfig(3, 1), [(1,)], [(0, 0, 0, 1)])
    with pytest.raises(ValueError, match="Weil hypothesis"):
        weil_gap(big, [1])


@pytest.mark.parametrize("p", [5, 7])
def test_weil_gap_exhaustive(p):
    pc = ProgressionConfig(FieldConfig(p, 1), [(1,), (1,)], [(0, 1, 1), (0, 0, 1, 2)])
    for phis in itertools.product(range(p), repeat=2):
        weil_gap(pc, phis)


def test_removing_duals_examples():
    cfg = F5_2
    lhs, rhs, ok = removing_duals_check(np.ones((25, 5)), [], cfg, s=1)
    assert ok and lhs == pytest.approx(1) and rhs == pytest.approx(1)
    A = np.tile(np.exp(2j * np.pi * np.arange(5) / 5), (25, 1))
    spec = DualSpec((1, 0), 1, random_one_bounded(cfg, 1))
    assert removing_duals_check(A, [(spec, IntVecPoly.from_scalar([0, 1], (1, 0)))], cfg, s=1).ok
    for seed in (1, 2, 3):
        rng = np.random.default_rng(seed)
        A = np.exp(2j * np.pi * rng.random((25, 5)))
        duals = [(DualSpec((1, 0), 1, random_one_bounded(cfg, seed)), IntVecPoly.from_scalar([0, 1], (1, 0))),
                 (DualSpec((0, 1), 2, random_one_bounded(cfg, seed + 7)), IntVecPoly.from_scalar([0, 0, 1], (0, 1)))]
        assert removing_duals_check(A, duals, cfg, s=2).ok


def test_removing_duals_rhs_matches_brute_force():
    cfg = FieldConfig(3, 1)
    rng = np.random.default_rng(4)
    A = np.exp(2j * np.pi * rng.random((3, 3)))
    res = removing_duals_check(A, [], cfg, s=2)
    total = 0.0
    for h1, h2 in itertools.product(range(3), repeat=2):
        inner = 0j
        for x, n in itertools.product(range(3), repeat=2):
            inner += (A[x, n] * np.conj(A[x, (n + h1) % 3]) * np.conj(A[x, (n + h2) % 3])
                      * A[x, (n + h1 + h2) % 3])
        total += abs(inner / 9)
    assert res.rhs == pytest.approx(total / 9, abs=1e-12)


def test_dual_difference_interchange_examples():
    pc = ProgressionConfig(F5, [(1,), (2,)], [(0, 1), (0, 0, 1)])
    ones = [GroupFunction.constant(F5)] * 3
    res = dual_difference_interchange_check(pc, ones, 1, [(1,)], lambda h: GroupFunction.constant(F5))
    assert res.ok and res.detail["premise"] == pytest.approx(1) and res.detail["conclusion"] == pytest.approx(1)
    fs = random_fs(pc, 3)
    assert dual_difference_interchange_check(pc, fs, 1, [(1,)], lambda h: GroupFunction.constant(F5)).ok
    cfg = FieldConfig(3, 2)
    pc2 = ProgressionConfig(cfg, [(1, 0), (0, 1)], [(0, 1), (0, 0, 1)])
    fs2 = random_fs(pc2, 4)
    phases = {h: random_one_bounded(cfg, 100 + 3 * h[0] + h[1]) for h in itertools.product(range(3), repeat=2)}
    assert dual_difference_interchange_check(pc2, fs2, 2, [(1, 0), (1, 1)], lambda h: phases[tuple(h)]).ok


def test_low_complexity_examples():
    f = random_one_bounded(F5, 2)
    one = lambda h: GroupFunction.constant(F5)
    lhs, rhs, ok = low_complexity_check(f, (1,), 2, [one, one])
    assert ok and lhs == pytest.approx(gowers_norm_power(f, (1,), 2), abs=1e-9)
    zero = GroupFunction(F5, np.zeros(5))
    lhs, rhs, ok = low_complexity_check(zero, (1,), 2, [one, one])
    assert ok and lhs == 0 and rhs == 0
    table = {k: random_one_bounded(F5, 50 + k) for k in range(5)}
    gs = [lambda h: table[h[0]], lambda h: table[(2 * h[0] + 1) % 5]]
    assert low_complexity_check(f, (1,), 2, gs).ok


def test_linear_averages_bound():
    pc = ProgressionConfig(F5_2, [(1, 0), (1, 2), (0, 1)], [(0, 1)] * 3)
    for seed in range(3):
        res = linear_averages_check(pc, random_fs(pc, seed))
        assert res.ok
    with pytest.raises(ValueError):
        linear_averages_check(deg2_progression(), random_fs(deg2_progression(), 0))


def test_bound_violation_is_assertion():
    assert issubclass(BoundViolation, AssertionError)
