"""Concatenation inequalities for box norms and the polynomial zero-set bound."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cost import check_cost
from .counting import BoundViolation
from .field_core import (
    FieldConfig,
    GroupFunction,
    Subgroup,
    as_subgroup,
    det_mod_p,
    log2_ceil,
    rref_mod_p,
    subgroup_span,
    subgroup_sum,
)
from .norms import TOL, box_cost, box_norm_power
from .pet import MultiPoly


@dataclass(frozen=True)
class SubgroupFamily:
    """Indexed family i -> (H_i1, ..., H_is) of subgroups of one ambient group."""

    indices: tuple
    groups: tuple[tuple[Subgroup, ...], ...]

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.groups) or not self.groups:
            raise ValueError("need one subgroup tuple per index and at least one index")
        widths = {len(g) for g in self.groups}
        if len(widths) != 1:
            raise ValueError("every index needs the same number of subgroups")
        cfgs = {H.cfg for g in self.groups for H in g}
        if len(cfgs) > 1:
            raise ValueError("subgroups live in different ambient groups")

    @classmethod
    def build(cls, cfg: FieldConfig, entries: Mapping | Sequence) -> "SubgroupFamily":
        """From {index: [subgroup or vector, ...]} or a plain list of such lists."""
        items = list(entries.items()) if isinstance(entries, Mapping) else list(enumerate(entries))
        return cls(tuple(i for i, _ in items),
                   tuple(tuple(as_subgroup(cfg, e) for e in row) for _, row in items))

    @property
    def width(self) -> int:
        return len(self.groups[0])

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class ConcatResult:
    lhs: float
    rhs: float
    ok: bool
    detail: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "lhs", float(self.lhs))
        object.__setattr__(self, "rhs", float(self.rhs))
        object.__setattr__(self, "ok", bool(self.ok))

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.ok))


class _NormCache:
    """Box norm powers keyed by the multiset of subgroups (box norms are symmetric)."""

    def __init__(self, f: GroupFunction):
        self.f = f
        self.values: dict[tuple, float] = {}

    def __call__(self, groups: Sequence[Subgroup]) -> float:
        key = tuple(sorted(g.basis for g in groups))
        if key not in self.values:
            if groups:
                self.values[key] = box_norm_power(self.f, list(groups))
            else:
                self.values[key] = float(np.real(self.f.mean()))
        return self.values[key]


def concat_deg1_check(f: GroupFunction, fam: SubgroupFamily) -> ConcatResult:
    """(E_i ||f||^2_{H_i})^2 <= E_{i,i'} ||f||^2_{H_i + H_i'}."""
    if fam.width != 1:
        raise ValueError("degree 1 concatenation needs one subgroup per index")
    return concat_main_check(f, SubgroupFamily(fam.indices, tuple(() for _ in fam.groups)),
                             [g[0] for g in fam.groups])


def concat_main_check(f: GroupFunction, fam: SubgroupFamily, extra: Sequence) -> ConcatResult:
    """(E_i ||f||^{2^{s+1}}_{H_i,K_i})^{2^{2s+1}} <= E_{i,i'} ||f||^{2^{2s+1}}_{K_i,K_i',H_i+H_i'}.

    fam carries the K_i tuples (width s, possibly 0) and extra the H_i."""
    cfg = f.cfg
    if len(extra) != len(fam):
        raise ValueError("need one extra subgroup per index")
    H = [as_subgroup(cfg, e) for e in extra]
    s = fam.width
    worst = max(box_cost(cfg.order, list(fam.groups[i]) * 2 + [subgroup_sum(H[i], H[i])])
                for i in range(len(fam)))
    check_cost(worst * len(fam) ** 2, "concatenation")
    norm = _NormCache(f)
    avg = np.mean([norm([H[i], *fam.groups[i]]) for i in range(len(fam))])
    lhs = avg ** (2 ** (2 * s + 1))
    pair_sum = 0.0
    for i, j in itertools.product(range(len(fam)), repeat=2):
        pair_sum += norm([*fam.groups[i], *fam.groups[j], subgroup_sum(H[i], H[j])])
    rhs = pair_sum / len(fam) ** 2
    return ConcatResult(lhs, rhs, lhs <= rhs + TOL, {"s": s, "indices": len(fam)})


# ---------------------------------------------------------------- zero sets

def _scalar_terms(g: MultiPoly, p: int) -> list[tuple[tuple[int, ...], int]]:
    if g.dim != 1:
        raise ValueError("zero_set_count needs a scalar polynomial")
    if g.n_degree > 0:
        raise ValueError("zero_set_count works on polynomials in the h variables only")
    return [(e, v[0] % p) for e, v in g.terms if v[0] % p]


def zero_set_count(g: MultiPoly, p: int, s: int | None = None) -> int:
    """Exact number of zeros of g on F_p^s; asserts count <= deg(g) p^{s-1}."""
    terms = _scalar_terms(g, p)
    if not any(sum(e[1:]) > 0 for e, _ in terms):
        raise ValueError("polynomial is constant mod p")
    s = g.h_vars if s is None else s
    if s < g.h_vars:
        raise ValueError("polynomial uses more variables than s")
    if s > 6:
        raise ValueError("exhaustive enumeration limited to s <= 6")
    check_cost(float(p) ** s * max(len(terms), 1), "zero set enumeration")
    values = g.evaluate_h_grid(p, s)[:, 0] if s else np.array([terms[0][1]])
    count = int(np.count_nonzero(values % p == 0))
    degree = max(sum(e[1:]) for e, _ in terms)
    bound = degree * p ** (s - 1)
    if count > bound:
        raise BoundViolation(f"{count} zeros exceeds {degree}*p^{s - 1} = {bound}")
    return count


def monomial_exponents(d: int, s_prime: int) -> list[tuple[int, ...]]:
    """All exponent vectors u in N^{s'} with |u| <= d, highest degree first."""
    out = [u for u in itertools.product(range(d + 1), repeat=s_prime) if sum(u) <= d]
    return sorted(out, key=lambda u: (-sum(u), tuple(-x for x in u)))


def monomial_matrix(points: np.ndarray, exponents: Sequence[Sequence[int]], p: int) -> list[list[int]]:
    """Rows h_j, columns u: the entries h_j^u mod p."""
    rows = []
    for h in np.asarray(points, dtype=np.int64):
        rows.append([int(np.prod([pow(int(x), int(k), p) for x, k in zip(h, u)]) % p) for u in exponents])
    return rows


@dataclass(frozen=True)
class ZeroFraction:
    zeros: int
    samples: int
    prime: int
    degree: int

    @property
    def fraction(self) -> float:
        return self.zeros / self.samples

    @property
    def constant(self) -> float:
        """The measured C in fraction <= C/p."""
        return self.fraction * self.prime


def monomial_det_zero_fraction(p: int, d: int = 2, s_prime: int = 2, samples: int = 2000,
                               seed: int = 0) -> ZeroFraction:
    """Sampled fraction of h in F_p^{s' |A|} where the square monomial matrix is singular."""
    exps = monomial_exponents(d, s_prime)
    rng = np.random.default_rng(seed)
    zeros = 0
    for _ in range(samples):
        pts = rng.integers(0, p, size=(len(exps), s_prime))
        if det_mod_p(monomial_matrix(pts, exps, p), p) == 0:
            zeros += 1
    return ZeroFraction(zeros, samples, p, sum(sum(u) for u in exps))


# ---------------------------------------------------------------- concatenation along polynomials

@dataclass(frozen=True)
class PolyConcatResult:
    lhs: float
    rhs: float
    ok: bool
    exception_fraction: float
    exponent: int
    constant: float
    target_groups: tuple[tuple[tuple[int, ...], ...], ...]
    steps: tuple[str, ...]

    def __post_init__(self) -> None:
        for name in ("lhs", "rhs", "exception_fraction", "constant"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "ok", bool(self.ok))

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.ok, self.exception_fraction))


def _as_direction(cfg: FieldConfig, c) -> MultiPoly:
    if isinstance(c, MultiPoly):
        if c.n_degree > 0:
            raise ValueError("directions are polynomials in h only")
        return c
    if isinstance(c, Mapping):
        return MultiPoly.from_dict(cfg.dimension, {(0, *u): v for u, v in c.items()})
    return MultiPoly.from_dict(cfg.dimension, {(0,): cfg.normalize(c)})


def _line_distribution(cfg: FieldConfig, c: MultiPoly, s_prime: int) -> Counter:
    grid = c.evaluate_h_grid(cfg.prime, s_prime)
    return Counter(rref_mod_p([row], cfg.prime, cfg.dimension) for row in grid)


def _join(cfg: FieldConfig, *keys) -> tuple:
    return rref_mod_p([r for k in keys for r in k], cfg.prime, cfg.dimension)


def _sum_distribution(cfg: FieldConfig, dist: Counter, rounds: int) -> dict[tuple, float]:
    """Law of the sum of 2^rounds independent draws from dist (as probabilities)."""
    total = sum(dist.values())
    law = {k: v / total for k, v in dist.items()}
    for _ in range(rounds):
        nxt: dict[tuple, float] = {}
        for (a, pa), (b, pb) in itertools.product(law.items(), repeat=2):
            key = _join(cfg, a, b)
            nxt[key] = nxt.get(key, 0.0) + pa * pb
        law = nxt
    return law


def polynomial_concat_check(f: GroupFunction, dirs: Sequence, d: int, s_prime: int) -> PolyConcatResult:
    """Bound E_h ||f||^{2^s}_{c_1(h),...,c_s(h)} by a box norm along the spans G_j.

    Each c_j is a MultiPoly in h_1..h_{s'} (no n), a mapping {u: vector}, or a
    constant vector. The exponent comes from replaying the concatenation steps;
    rhs is the target norm power and ok means lhs <= rhs + exception_fraction.
    """
    cfg = f.cfg
    polys = [_as_direction(cfg, c) for c in dirs]
    s = len(polys)
    if not 1 <= s <= 2 or s_prime > 2:
        raise ValueError("desk scale supports s in {1, 2} and s' <= 2")
    for c in polys:
        if c.total_h_degree > d or c.h_vars > s_prime:
            raise ValueError("direction exceeds the declared degree or variable count")
    spans = [_join(cfg, [list(v) for _, v in c.terms]) for c in polys]
    k = log2_ceil(len(monomial_exponents(d, s_prime)))
    norm = _NormCache(f)
    grids = [c.evaluate_h_grid(cfg.prime, s_prime) for c in polys]
    check_cost(float(cfg.prime) ** s_prime * box_cost(cfg.order, [subgroup_span(cfg, g) for g in spans]),
               "polynomial concatenation")
    groups_at = lambda keys: [subgroup_span(cfg, list(kk)) for kk in keys]
    delta = float(np.mean([norm(groups_at([rref_mod_p([g[r]], cfg.prime, cfg.dimension) for g in grids]))
                           for r in range(cfg.prime ** s_prime)]))
    if s == 1:
        law = _sum_distribution(cfg, _line_distribution(cfg, polys[0], s_prime), k)
        middle = sum(pr * norm(groups_at([key])) for key, pr in law.items())
        exc = sum(pr for key, pr in law.items() if key != spans[0])
        exponent = 2 ** k
        target = [spans[0]]
        steps = [f"(E_h ||f||^2_c(h))^2 <= E ||f||^2 over summed groups, applied {k} times"]
    else:
        if k > 1:
            raise ValueError("s = 2 is supported only when |A_{d,s'}| <= 2")
        if k == 0:
            law = {}
            middle = delta
            exc = 0.0
            exponent = 1
            target = spans
            steps = ["constant directions: monotonicity"]
        else:
            middle, exc = _two_direction_chain(cfg, polys, s_prime, norm, delta, spans)
            exponent = 256
            target = [spans[0], spans[0], spans[1], spans[1], spans[1]]
            steps = ["delta^8 <= E ||f||^8_{c2(h),c2(h'),c1(h)+c1(h')}  (main lemma, s=1)",
                     "(previous)^32 <= E ||f||^32 over five groups  (main lemma, s=2)",
                     "monotonicity onto G1 x2, G2 x3 off the degenerate tuples"]
    lhs = delta ** exponent
    rhs = norm(groups_at(target))
    chain_ok = lhs <= middle + TOL and middle <= rhs + exc + TOL
    return PolyConcatResult(lhs, rhs, chain_ok and lhs <= rhs + exc + TOL, exc, exponent,
                            exc * cfg.prime, tuple(target), tuple(steps))


def _two_direction_chain(cfg, polys, s_prime, norm, delta, spans) -> tuple[float, float]:
    """Exact middle term of the two-step chain and its degenerate fraction."""
    p = cfg.prime
    grids = [c.evaluate_h_grid(p, s_prime) for c in polys]
    line = lambda j, r: rref_mod_p([grids[j][r]], p, cfg.dimension)
    rows = range(p ** s_prime)
    # t = (A, B, C) = (c2(h), c2(h'), c1(h) + c1(h')) for a pair (h, h')
    law: Counter = Counter()
    for a, b in itertools.product(rows, repeat=2):
        law[(line(1, a), line(1, b), _join(cfg, line(0, a), line(0, b)))] += 1
    total = sum(law.values())
    probs = {t: c / total for t, c in law.items()}
    groups_at = lambda keys: [subgroup_span(cfg, list(k)) for k in keys]
    first = sum(pr * norm(groups_at(t)) for t, pr in probs.items())
    if first + TOL < delta ** 8:
        raise BoundViolation(f"first concatenation step failed: {delta ** 8} > {first}")
    middle = 0.0
    exc = 0.0
    for (t, pt), (u, pu) in itertools.product(probs.items(), repeat=2):
        keys = [t[1], t[2], u[1], u[2], _join(cfg, t[0], u[0])]
        middle += pt * pu * norm(groups_at(keys))
        if t[2] != spans[0] or u[2] != spans[0] or keys[4] != spans[1]:
            exc += pt * pu
    if middle + TOL < first ** 32:
        raise BoundViolation(f"second concatenation step failed: {first ** 32} > {middle}")
    return middle, exc
