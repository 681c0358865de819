"""Seeded identity and inequality suites behind `verify identity` and `verify inequality`.

Every instance is generated from a seed sequence keyed by (seed, suite tag,
prime, instance number), so reruns reproduce the same numbers."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .concat import (
    SubgroupFamily,
    concat_deg1_check,
    concat_main_check,
    polynomial_concat_check,
    zero_set_count,
)
from .counting import (
    BoundViolation,
    DualSpec,
    ProgressionConfig,
    counting_operator,
    dual_difference_interchange_check,
    dual_replacement_check,
    linear_averages_check,
    low_complexity_check,
    progression_count,
    removing_duals_check,
    weil_gap,
)
from .field_core import (
    FieldConfig,
    GroupFunction,
    IntVecPoly,
    character,
    random_one_bounded,
    subgroup_span,
    trivial_subgroup,
    whole_group,
)
from .norms import (
    TOL,
    box_norm,
    box_norm_power,
    eigen_projection_gap,
    gcs_check,
    gowers_norm_power,
    inductive_formula_check,
    make_eigenfunction,
    u2_inverse,
    weak_inverse_check,
)
from .pet import MultiPoly, family_from_progression, pet_bound_check, pet_run

IDENTITY_TAG = 1
INEQUALITY_TAG = 2


def rng_for(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def draw_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2 ** 31 - 1))


def random_vector(rng: np.random.Generator, cfg: FieldConfig) -> tuple[int, ...]:
    while True:
        v = tuple(int(c) for c in rng.integers(0, cfg.prime, cfg.dimension))
        if any(v):
            return v


def random_function(rng: np.random.Generator, cfg: FieldConfig, kind: str = "unit-phase") -> tuple[GroupFunction, dict]:
    seed = draw_seed(rng)
    return random_one_bounded(cfg, seed, kind), {"kind": kind, "seed": seed}


def basis_list(H) -> list[list[int]]:
    return [list(r) for r in H.basis]


@dataclass
class Tally:
    """Running summary of one named check: instance count, failures and the
    worst signed margin (error for identities, lhs - rhs for inequalities)."""

    name: str
    kind: str
    instances: int = 0
    violations: int = 0
    worst: float = float("-inf")
    failures: list = field(default_factory=list)

    def record(self, ok: bool, margin: float, instance: dict) -> None:
        self.instances += 1
        self.worst = max(self.worst, float(margin))
        if not ok:
            self.violations += 1
            self.failures.append(instance)

    def error(self, exc: Exception, instance: dict) -> None:
        self.instances += 1
        self.violations += 1
        self.failures.append({**instance, "error": f"{type(exc).__name__}: {exc}"})

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "instances": self.instances,
            "violations": self.violations,
            "worst": None if self.instances == 0 else self.worst,
            "failures": self.failures,
            "passed": self.passed,
        }


class Tallies(dict):
    def __init__(self, kind: str, names):
        super().__init__((n, Tally(n, kind)) for n in names)

    def run(self, name: str, instance: dict, fn: Callable[[], tuple[bool, float]]) -> None:
        try:
            ok, margin = fn()
        except (BoundViolation, ArithmeticError) as exc:
            self[name].error(exc, instance)
            return
        self[name].record(ok, margin, instance)

    def as_dict(self) -> dict:
        return {k: v.as_dict() for k, v in sorted(self.items()) if v.instances}

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.values())


# ---------------------------------------------------------------- shared progressions

def small_progressions(cfg: FieldConfig) -> ProgressionConfig:
    """x, x + v n, x + v n^2 in dimension 1; the degree 2 corner pattern in dimension 2."""
    if cfg.dimension == 1:
        return ProgressionConfig(cfg, [(1,)], [(0, 1), (0, 0, 1)], eta=(1, 1))
    return ProgressionConfig(cfg, [(1, 0), (0, 1)], [(0, 0, 1), (0, 1, 1)])


def pattern_functions(rng, pc: ProgressionConfig) -> tuple[list[GroupFunction], list[dict]]:
    pairs = [random_function(rng, pc.cfg) for _ in range(pc.length + 1)]
    return [f for f, _ in pairs], [d for _, d in pairs]


# ---------------------------------------------------------------- identity suite

IDENTITY_CHECKS = ("weak_inverse", "inductive_formula", "box_paths", "permutation_invariance",
                   "dual_replacement", "count_relation", "gauss_sum", "eigen_projection")


def identity_suite(p: int, seed: int, per_prime: int = 18) -> Tallies:
    tallies = Tallies("identity", IDENTITY_CHECKS)
    rng = rng_for(seed, IDENTITY_TAG, p)
    for k in range(per_prime):
        D = 1 + k % 2
        s = 1 + (k // 2) % 3
        cfg = FieldConfig(p, D)
        f, fdesc = random_function(rng, cfg, ("unit-phase", "disk")[(k // 6) % 2])
        v = random_vector(rng, cfg)
        base = {"prime": p, "dimension": D, "s": s, "f": fdesc, "instance": k}

        def weak():
            r = weak_inverse_check(f, v, s)
            return r.ok, abs(r.lhs - r.rhs)
        tallies.run("weak_inverse", {**base, "v": list(v)}, weak)

        groups = [subgroup_span(cfg, [random_vector(rng, cfg)]) for _ in range(s)]
        gdesc = {**base, "groups": [basis_list(H) for H in groups]}

        def induct():
            r = inductive_formula_check(f, groups)
            return r.ok, abs(r.lhs - r.rhs)
        tallies.run("inductive_formula", gdesc, induct)

        def paths():
            a = box_norm_power(f, groups, "recursive")
            b = box_norm_power(f, groups, "direct")
            return abs(a - b) <= TOL, abs(a - b)
        tallies.run("box_paths", gdesc, paths)

        def perm():
            a = box_norm_power(f, groups)
            b = box_norm_power(f, groups[::-1])
            return abs(a - b) <= TOL, abs(a - b)
        tallies.run("permutation_invariance", gdesc, perm)

        pc = small_progressions(cfg)
        fs, fdescs = pattern_functions(rng, pc)
        g, gd = random_function(rng, cfg)
        m = k % (pc.length + 1)
        dual_s = 1 + k % 2

        def replace():
            r = dual_replacement_check(pc, fs, m, g, s=dual_s)
            return r.ok, r.identity_gap
        tallies.run("dual_replacement", {**base, "m": m, "dual_degree": dual_s, "functions": fdescs, "g": gd},
                    replace)

        density = float(rng.choice([0.3, 0.5, 0.7, 0.9]))
        S_seed = draw_seed(rng)

        def relation():
            S = random_one_bounded(cfg, S_seed, "indicator", density=density)
            lam = counting_operator(pc, [S] * (pc.length + 1)).real
            size = int(round(S.values.real.sum()))
            exact = (progression_count(S, pc) + size) / (cfg.order * p)
            return abs(lam - exact) <= TOL, abs(lam - exact)
        tallies.run("count_relation", {**base, "density": density, "set_seed": S_seed}, relation)

    cfg1 = FieldConfig(p, 1)
    pc = ProgressionConfig(cfg1, [(1,)], [(0, 0, 1)])

    def gauss():
        lam = counting_operator(pc, [character(cfg1, (-1,)), character(cfg1, (1,))])
        err = abs(abs(lam) - p ** -0.5)
        return err <= TOL, err
    tallies.run("gauss_sum", {"prime": p}, gauss)

    cfg2 = FieldConfig(p, 2)
    for k in range(6):
        v = random_vector(rng, cfg2)
        phi = rng.integers(0, p, cfg2.order)
        psi = rng.random(cfg2.order) * p
        support = rng.random(cfg2.order) < 0.8 if k % 2 else None
        inst = {"prime": p, "v": list(v), "instance": k, "support": support is not None}

        def projection():
            eig = make_eigenfunction(cfg2, v, phi, psi, support=support)
            gap = eigen_projection_gap(eig)
            return gap <= TOL, gap
        tallies.run("eigen_projection", inst, projection)
    return tallies


# ---------------------------------------------------------------- inequality suite

INEQUALITY_CHECKS = ("gowers_cauchy_schwarz", "monotonicity", "subgroup_property", "triangle",
                     "linear_averages", "concat_deg1", "concat_main", "polynomial_concat",
                     "removing_duals", "dual_difference_interchange", "low_complexity",
                     "u2_inverse", "weil_bound", "zero_sets", "pet_bound")


def _lhs_rhs(r) -> tuple[bool, float]:
    lhs, rhs, ok = tuple(r)[:3]
    return ok, lhs - rhs


def _random_subgroup(rng, cfg: FieldConfig):
    if cfg.dimension > 1 and rng.random() < 0.3:
        return whole_group(cfg)
    return subgroup_span(cfg, [random_vector(rng, cfg)])


def _scalar_product(a: MultiPoly, b: MultiPoly) -> MultiPoly:
    acc: dict = {}
    for (ea, va), (eb, vb) in itertools.product(a.terms, b.terms):
        width = max(len(ea), len(eb))
        e = tuple((ea[i] if i < len(ea) else 0) + (eb[i] if i < len(eb) else 0) for i in range(width))
        acc[e] = [acc.get(e, [0])[0] + va[0] * vb[0]]
    return MultiPoly.from_dict(1, acc)


def _random_h_poly(rng, nvars: int, p: int) -> MultiPoly:
    """Random scalar polynomial of degree <= 2 in h_1..h_nvars with a nonconstant part mod p."""
    while True:
        terms = {}
        for e in itertools.product(range(3), repeat=nvars):
            if sum(e) <= 2 and rng.random() < 0.5:
                terms[(0, *e)] = [int(rng.integers(-2, 3))]
        g = MultiPoly.from_dict(1, terms)
        if any(sum(e[1:]) and v[0] % p for e, v in g.terms):
            return g


def inequality_suite(p: int, seed: int, per_prime: int = 10, pet_seeds: int = 2) -> Tallies:
    tallies = Tallies("inequality", INEQUALITY_CHECKS)
    rng = rng_for(seed, INEQUALITY_TAG, p)
    for k in range(per_prime):
        D = 1 + k % 2
        cfg = FieldConfig(p, D)
        base = {"prime": p, "dimension": D, "instance": k}

        s = 1 + (k // 2) % 2
        groups = [subgroup_span(cfg, [random_vector(rng, cfg)]) for _ in range(s)]
        fam = [random_function(rng, cfg) for _ in range(2 ** s)]
        tallies.run("gowers_cauchy_schwarz",
                    {**base, "groups": [basis_list(H) for H in groups], "functions": [d for _, d in fam]},
                    lambda: _lhs_rhs(gcs_check([f for f, _ in fam], groups)))

        f, fd = random_function(rng, cfg, ("unit-phase", "disk")[k % 2])
        chain = [_random_subgroup(rng, cfg) for _ in range(3)]

        def mono():
            n1, n2, n3 = (box_norm(f, chain[:i]) for i in (1, 2, 3))
            margin = max(n1 - n2, n2 - n3)
            return margin <= TOL, margin
        tallies.run("monotonicity", {**base, "f": fd, "groups": [basis_list(H) for H in chain]}, mono)

        big = [_random_subgroup(rng, cfg) for _ in range(1 + k % 3)]
        small = []
        for H in big:
            if H.size == cfg.order and cfg.dimension > 1 and rng.random() < 0.7:
                small.append(subgroup_span(cfg, [random_vector(rng, cfg)]))
            else:
                small.append(H if rng.random() < 0.5 else trivial_subgroup(cfg))

        def sub():
            margin = box_norm(f, big) - box_norm(f, small)
            return margin <= TOL, margin
        tallies.run("subgroup_property", {**base, "f": fd, "groups": [basis_list(H) for H in big],
                                          "subgroups": [basis_list(H) for H in small]}, sub)

        g, gd = random_function(rng, cfg)
        tri_groups = [subgroup_span(cfg, [random_vector(rng, cfg)]) for _ in range(2)]

        def tri():
            margin = box_norm(f.add(g), tri_groups) - box_norm(f, tri_groups) - box_norm(g, tri_groups)
            return margin <= TOL, margin
        tallies.run("triangle", {**base, "f": fd, "g": gd, "groups": [basis_list(H) for H in tri_groups]}, tri)

        # linear averages: l = 2 or 3 distinct vectors
        ell = min(2 + k % 2, cfg.order - 1)
        vecs: list[tuple[int, ...]] = []
        while len(vecs) < ell:
            v = random_vector(rng, cfg)
            if v not in vecs:
                vecs.append(v)
        if True:
            pc_lin = ProgressionConfig(cfg, vecs, [(0, 1)] * ell)
            fs_lin, fds_lin = pattern_functions(rng, pc_lin)
            tallies.run("linear_averages", {**base, "vectors": [list(v) for v in vecs], "functions": fds_lin},
                        lambda: _lhs_rhs(linear_averages_check(pc_lin, fs_lin)))

        fam1 = SubgroupFamily.build(cfg, [[random_vector(rng, cfg)] for _ in range(2 + k % 3)])
        tallies.run("concat_deg1", {**base, "f": fd, "family": [basis_list(g[0]) for g in fam1.groups]},
                    lambda: _lhs_rhs(concat_deg1_check(f, fam1)))

        width = k % 2
        famK = SubgroupFamily.build(cfg, [[random_vector(rng, cfg) for _ in range(width)] for _ in range(2 + k % 2)])
        extra = [random_vector(rng, cfg) for _ in range(len(famK))]
        tallies.run("concat_main", {**base, "f": fd, "s": width,
                                    "K": [[basis_list(H) for H in row] for row in famK.groups],
                                    "H": [list(e) for e in extra]},
                    lambda: _lhs_rhs(concat_main_check(f, famK, extra)))

        cfg2 = FieldConfig(p, 2)
        f2, fd2 = random_function(rng, cfg2)
        shape = k % 3
        u, v1, v2 = (random_vector(rng, cfg2) for _ in range(3))
        if shape == 0:
            direction, d, sp = {(0,): u, (1,): v1}, 1, 1
        elif shape == 1:
            direction, d, sp = {(0, 0): u, (1, 0): v1, (0, 1): v2}, 1, 2
        else:
            direction, d, sp = {(0,): u, (1,): v1, (2,): v2}, 2, 1

        def pconcat():
            r = polynomial_concat_check(f2, [direction], d, sp)
            return r.ok, r.lhs - r.rhs - r.exception_fraction
        tallies.run("polynomial_concat", {"prime": p, "dimension": 2, "instance": k, "f": fd2, "degree": d,
                                          "h_vars": sp,
                                          "direction": {str(e): list(c) for e, c in direction.items()}}, pconcat)

        duals_n = 1 if D == 2 or k % 2 else 2
        dual_deg = 1 + (k // 2) % 2 if duals_n == 1 else 1
        A_seed = draw_seed(rng)
        dual_descs = []
        duals = []
        for _ in range(duals_n):
            dv = random_vector(rng, cfg)
            df, dfd = random_function(rng, cfg)
            qv = random_vector(rng, cfg)
            qpoly = [0] + [int(c) for c in rng.integers(-2, 3, 2)]
            if not any(qpoly):
                qpoly[1] = 1
            duals.append((DualSpec(dv, dual_deg, df), IntVecPoly.from_scalar(qpoly, qv)))
            dual_descs.append({"direction": list(dv), "degree": dual_deg, "base": dfd,
                               "poly": qpoly, "vector": list(qv)})

        def rduals():
            A = np.exp(2j * np.pi * rng_for(A_seed).random((cfg.order, p)))
            return _lhs_rhs(removing_duals_check(A, duals, cfg))
        tallies.run("removing_duals", {**base, "A_seed": A_seed, "duals": dual_descs}, rduals)

        s_dd = 1 + k % 2
        cfg_dd = FieldConfig(p, 1) if (s_dd == 2 and p > 5) else cfg
        pc_dd = small_progressions(cfg_dd)
        fs_dd, fds_dd = pattern_functions(rng, pc_dd)
        m_dd = k % (pc_dd.length + 1)
        betas = [random_vector(rng, cfg_dd) for _ in range(s_dd)]
        u_seed = draw_seed(rng)

        def dd():
            us = lambda h: random_one_bounded(cfg_dd, int(rng_for(u_seed, *h).integers(2 ** 31 - 1)))
            r = dual_difference_interchange_check(pc_dd, fs_dd, m_dd, betas, us)
            return r.ok, r.detail["premise_power"] - r.rhs
        tallies.run("dual_difference_interchange",
                    {"prime": p, "dimension": cfg_dd.dimension, "instance": k, "m": m_dd,
                     "betas": [list(b) for b in betas], "functions": fds_dd, "u_seed": u_seed}, dd)

        s_lc = 1 + k % 3 if D == 1 else 1 + k % 2
        v_lc = random_vector(rng, cfg)
        g_seed = draw_seed(rng)

        def lowc():
            gs = [(lambda j: (lambda h: random_one_bounded(
                cfg, int(rng_for(g_seed, j, *h).integers(2 ** 31 - 1)), "disk")))(j) for j in range(s_lc)]
            return _lhs_rhs(low_complexity_check(f, v_lc, s_lc, gs))
        tallies.run("low_complexity", {**base, "f": fd, "v": list(v_lc), "s": s_lc, "g_seed": g_seed}, lowc)

        kind = ("unit-phase", "quadratic-phase")[k % 2]
        if kind == "quadratic-phase":
            quad = rng.integers(0, p, (2, 2))
            fu = random_one_bounded(cfg2, 0, kind, coeffs=quad.tolist(), linear=random_vector(rng, cfg2))
            fud = {"kind": kind, "coeffs": quad.tolist()}
        else:
            fu, fud = random_function(rng, cfg2)
        vu = random_vector(rng, cfg2)

        def u2():
            eig, corr = u2_inverse(fu, vu)
            bad = eig.violations()
            margin = gowers_norm_power(fu, vu, 2) - corr
            return not bad and margin <= TOL, margin
        tallies.run("u2_inverse", {"prime": p, "dimension": 2, "instance": k, "f": fud, "v": list(vu)}, u2)

    _weil_instances(tallies, p)
    _zero_set_instances(tallies, p, rng)
    if p == 3:
        cfg = FieldConfig(3, 2)
        pc = ProgressionConfig(cfg, [(1, 0), (0, 1)], [(0, 0, 1), (0, 1, 1)])
        result = pet_run(family_from_progression(pc))
        for k in range(pet_seeds):
            fs, fds = pattern_functions(rng, pc)
            tallies.run("pet_bound", {"prime": 3, "instance": k, "functions": fds},
                        lambda: _lhs_rhs(pet_bound_check(pc, fs, result)))
    return tallies


WEIL_PATTERNS = ([(0, 0, 1)], [(0, 1), (0, 0, 1)], [(0, 1, 1), (0, 0, 0, 1)], [(0, 0, 2, 1)])


def _weil_instances(tallies: Tallies, p: int) -> None:
    cfg = FieldConfig(p, 1)
    for polys in WEIL_PATTERNS:
        pc = ProgressionConfig(cfg, [(1,)], polys, eta=(1,) * len(polys))
        if pc.degree >= p:
            continue
        worst = float("-inf")
        ok = True
        try:
            for phis in itertools.product(range(p), repeat=pc.length):
                gap = weil_gap(pc, phis)
                worst = max(worst, gap - (pc.degree - 1) * p ** -0.5)
        except BoundViolation as exc:
            tallies["weil_bound"].error(exc, {"prime": p, "polys": [list(q) for q in polys]})
            continue
        tallies["weil_bound"].record(ok, worst, {"prime": p, "polys": [list(q) for q in polys]})


def _zero_set_instances(tallies: Tallies, p: int, rng) -> None:
    det = MultiPoly.from_dict(1, {(0, 1, 0, 0, 1): [1], (0, 0, 1, 1): [-1]})
    tallies.run("zero_sets", {"prime": p, "poly": "h1*h4 - h2*h3"},
                lambda: (zero_set_count(det, p) == p ** 3 + p ** 2 - p, 0.0))
    for k in range(4):
        nvars = 2 + k % 2
        g1 = _random_h_poly(rng, nvars, p)
        g2 = _random_h_poly(rng, nvars, p)
        inst = {"prime": p, "instance": k, "g1": g1.pretty(["c"]), "g2": g2.pretty(["c"])}

        def props():
            c1 = zero_set_count(g1, p, nvars)
            c2 = zero_set_count(g2, p, nvars)
            c12 = zero_set_count(_scalar_product(g1, g2), p, nvars)
            shifted = g1 - MultiPoly.from_dict(1, {(0,): [1]})
            c1m = zero_set_count(shifted, p, nvars)
            ok = c12 >= max(c1, c2) and c1 + c1m <= p ** nvars
            return ok, float(max(max(c1, c2) - c12, c1 + c1m - p ** nvars))
        tallies.run("zero_sets", inst, props)
