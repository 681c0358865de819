"""Polynomial progression counts, the structured count, dual replacement and
the inequality checks that surround them."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .cost import check_cost
from .field_core import (
    FieldConfig,
    GroupFunction,
    IntVecPoly,
    PointLike,
    conditional_expectation,
    ep_array,
    subgroup_span,
    vec_poly_table,
)
from .norms import TOL, _eps_cube, box_norm, dual_function, gowers_norm, gowers_norm_power

# ---------------------------------------------------------------- exact rank over Q


def rational_rank(rows: Sequence[Sequence[int]]) -> int:
    mat = [[Fraction(c) for c in r] for r in rows]
    rank = 0
    ncols = max((len(r) for r in mat), default=0)
    for col in range(ncols):
        sel = next((r for r in range(rank, len(mat)) if col < len(mat[r]) and mat[r][col] != 0), None)
        if sel is None:
            continue
        mat[rank], mat[sel] = mat[sel], mat[rank]
        for r in range(len(mat)):
            if r != rank and mat[r][col] != 0:
                k = mat[r][col] / mat[rank][col]
                mat[r] = [a - k * b for a, b in zip(mat[r], mat[rank])]
        rank += 1
    return rank


def _pad(polys: Sequence[Sequence[int]]) -> list[list[int]]:
    width = max(len(q) for q in polys)
    return [list(q) + [0] * (width - len(q)) for q in polys]


def linearly_independent(polys: Sequence[Sequence[int]]) -> bool:
    """Are the scalar polynomials (coefficient lists) linearly independent over Q?"""
    return rational_rank(_pad(polys)) == len(polys)


def pairwise_independent(polys: Sequence[Sequence[int]]) -> bool:
    rows = _pad(polys)
    return all(rational_rank([rows[i], rows[j]]) == 2 for i, j in itertools.combinations(range(len(rows)), 2))


def _poly_degree(q: Sequence[int]) -> int:
    d = len(q) - 1
    while d >= 0 and q[d] == 0:
        d -= 1
    return d


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True, eq=False)
class ProgressionConfig:
    """x, x + v_{eta_1} p_1(n), ..., x + v_{eta_l} p_l(n) inside F_p^D.

    polys are coefficient lists (a_0, ..., a_d); eta is 1-based and defaults to
    the identity.
    """

    cfg: FieldConfig
    vectors: tuple[tuple[int, ...], ...]
    polys: tuple[tuple[int, ...], ...]
    eta: tuple[int, ...] | None = None
    theorem_mode: bool = True

    def __post_init__(self) -> None:
        vecs = tuple(tuple(int(c) for c in v) for v in self.vectors)
        polys = tuple(tuple(int(c) for c in q) for q in self.polys)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "polys", polys)
        eta = tuple(range(1, len(polys) + 1)) if self.eta is None else tuple(int(e) for e in self.eta)
        object.__setattr__(self, "eta", eta)
        if not polys:
            raise ValueError("progression needs at least one polynomial")
        if len(eta) != len(polys):
            raise ValueError("eta must have one entry per polynomial")
        for e in eta:
            if not 1 <= e <= len(vecs):
                raise ValueError(f"eta entry {e} does not name a vector")
        for v in vecs:
            if len(v) != self.cfg.dimension:
                raise ValueError(f"vector {v} does not live in dimension {self.cfg.dimension}")
            if self.cfg.is_zero(v):
                raise ValueError(f"vector {v} is zero mod {self.cfg.prime}")
        if self.theorem_mode:
            for q in polys:
                if q and q[0] != 0:
                    raise ValueError("theorem mode requires zero constant terms")

    @property
    def length(self) -> int:
        return len(self.polys)

    @property
    def degree(self) -> int:
        return max(_poly_degree(q) for q in self.polys)

    def vector_of(self, j: int) -> tuple[int, ...]:
        """Direction attached to term j (1-based)."""
        return self.vectors[self.eta[j - 1] - 1]

    def vec_poly(self, j: int) -> IntVecPoly:
        if j == 0:
            return IntVecPoly(self.cfg.dimension, ())
        return IntVecPoly.from_scalar(self.polys[j - 1], self.vector_of(j))

    def linearly_independent(self) -> bool:
        return linearly_independent(self.polys)

    def pairwise_independent(self) -> bool:
        return pairwise_independent(self.polys)

    def with_prime(self, p: int) -> "ProgressionConfig":
        return ProgressionConfig(FieldConfig(p, self.cfg.dimension), self.vectors, self.polys,
                                 self.eta, self.theorem_mode)

    @cached_property
    def offsets(self) -> np.ndarray:
        """(l+1, p, D) array of v_{eta_j} p_j(n) mod p, with row 0 all zero."""
        cfg = self.cfg
        out = np.zeros((self.length + 1, cfg.prime, cfg.dimension), dtype=np.int64)
        for j in range(1, self.length + 1):
            out[j] = vec_poly_table(self.vec_poly(j), cfg)
        return out

    @cached_property
    def shift_tables(self) -> np.ndarray:
        """(l+1, p, order) index array: [j, n, x] -> index(x + v_j p_j(n))."""
        cfg = self.cfg
        pts = cfg.coords[None, None, :, :] + self.offsets[:, :, None, :]
        return cfg.index_array(pts)


def _check_functions(pc: ProgressionConfig, fs: Sequence[GroupFunction]) -> None:
    if len(fs) != pc.length + 1:
        raise ValueError(f"expected {pc.length + 1} functions, got {len(fs)}")
    for f in fs:
        if f.cfg != pc.cfg:
            raise ValueError("function lives on a different field")


def _pattern_product(pc: ProgressionConfig, fs: Sequence[GroupFunction], skip: int | None = None,
                     conj: bool = False) -> np.ndarray:
    """(p, order) array of prod_{j != skip} f_j(x + Q_j(n))."""
    tab = pc.shift_tables
    prod = np.ones((pc.cfg.prime, pc.cfg.order), dtype=np.complex128)
    for j, f in enumerate(fs):
        if j == skip:
            continue
        vals = np.conj(f.values) if conj else f.values
        prod *= vals[tab[j]]
    return prod


def counting_operator(pc: ProgressionConfig, fs: Sequence[GroupFunction]) -> complex:
    """E_x E_n f_0(x) prod_j f_j(x + v_{eta_j} p_j(n)), n ranging over all of F_p."""
    _check_functions(pc, fs)
    return complex(_pattern_product(pc, fs).mean())


def structured_count(pc: ProgressionConfig, fs: Sequence[GroupFunction]) -> complex:
    """E_x f_0(x) prod_j E(f_j | <v_{eta_j}>)(x)."""
    _check_functions(pc, fs)
    acc = fs[0].values.copy()
    for j in range(1, pc.length + 1):
        H = subgroup_span(pc.cfg, [pc.vector_of(j)])
        acc = acc * conditional_expectation(fs[j], H).values
    return complex(acc.mean())


def _require_independent(pc: ProgressionConfig) -> None:
    if not pc.theorem_mode:
        raise ValueError("theorem mode required")
    if not pc.linearly_independent():
        raise ValueError("polynomials not linearly independent")


def tcount_gap(pc: ProgressionConfig, fs: Sequence[GroupFunction]) -> float:
    _require_independent(pc)
    return abs(counting_operator(pc, fs) - structured_count(pc, fs))


def tilde_dual(pc: ProgressionConfig, fs: Sequence[GroupFunction], m: int) -> GroupFunction:
    """tilde f_m(x) = E_n prod_{j != m} conj f_j(x + Q_j(n) - Q_m(n)), where Q_0 = 0.

    With this convention Lambda(fs) = E_x f_m(x) conj(tilde f_m(x)) exactly."""
    _check_functions(pc, fs)
    if not 0 <= m <= pc.length:
        raise ValueError(f"index {m} outside [0, {pc.length}]")
    cfg = pc.cfg
    rel = pc.offsets - pc.offsets[m][None, :, :]
    acc = np.ones((cfg.prime, cfg.order), dtype=np.complex128)
    bound = 1.0
    for j, f in enumerate(fs):
        if j == m:
            continue
        idx = cfg.index_array(cfg.coords[None, :, :] + rel[j][:, None, :])
        acc *= np.conj(f.values)[idx]
        bound *= f.sup_bound
    return GroupFunction(cfg, acc.mean(axis=0), bound)


def _replace(fs: Sequence[GroupFunction], m: int, g: GroupFunction) -> list[GroupFunction]:
    out = list(fs)
    out[m] = g
    return out


@dataclass
class DualReplacementResult:
    identity_gap: float
    ok: bool
    parts: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.identity_gap = float(self.identity_gap)
        self.ok = bool(self.ok)
        for part in self.parts.values():
            for k, v in part.items():
                part[k] = bool(v) if k == "ok" else (int(v) if k == "s" else float(v))

    def __iter__(self):
        return iter((self.identity_gap, self.ok))


def dual_replacement_check(pc: ProgressionConfig, fs: Sequence[GroupFunction], m: int,
                           g: GroupFunction, s: int = 2) -> DualReplacementResult:
    """Checks Lambda(..., conj g, ...) = conj(E_x tilde f_m g) plus the three
    lower bounds obtained from particular choices of g."""
    tilde = tilde_dual(pc, fs, m)
    lhs = counting_operator(pc, _replace(fs, m, g.conj()))
    rhs = np.conj(np.mean(tilde.values * g.values))
    gap = abs(lhs - rhs)
    parts: dict = {}
    ok = gap <= TOL

    lam = counting_operator(pc, fs)
    val_i = counting_operator(pc, _replace(fs, m, tilde))
    l2 = float(np.mean(np.abs(tilde.values) ** 2))
    parts["i"] = {"value": val_i.real, "imag": val_i.imag, "bound": abs(lam) ** 2,
                  "ok": abs(val_i - l2) <= TOL and val_i.real >= abs(lam) ** 2 - TOL}
    if m >= 1:
        v = pc.vector_of(m)
        H = subgroup_span(pc.cfg, [v])
        val_ii = counting_operator(pc, _replace(fs, m, conditional_expectation(tilde, H)))
        b_ii = gowers_norm(tilde, v, 1) ** 2
        parts["ii"] = {"value": val_ii.real, "imag": val_ii.imag, "bound": b_ii,
                       "ok": val_ii.real >= b_ii - TOL and abs(val_ii.imag) <= TOL}
        D = dual_function(tilde, v, s)
        val_iii = counting_operator(pc, _replace(fs, m, D.conj()))
        b_iii = gowers_norm_power(tilde, v, s)
        parts["iii"] = {"value": val_iii.real, "imag": val_iii.imag, "bound": b_iii, "s": s,
                        "ok": val_iii.real >= b_iii - TOL and abs(val_iii.imag) <= TOL}
    ok = ok and all(part["ok"] for part in parts.values())
    return DualReplacementResult(gap, ok, parts)


# ---------------------------------------------------------------- sets and exponential sums


def _require_indicator(S: GroupFunction) -> np.ndarray:
    vals = S.values
    if np.any(np.abs(vals.imag) > 0) or not np.all(np.isin(vals.real, (0.0, 1.0))):
        raise ValueError("set must be given by a {0,1}-valued table")
    return vals.real.astype(bool)


def progression_count(S: GroupFunction, pc: ProgressionConfig) -> int:
    """Number of (x, n) with n != 0 and x, x + Q_1(n), ..., x + Q_l(n) all in S."""
    if not pc.theorem_mode:
        raise ValueError("theorem mode required")
    mask = _require_indicator(S)
    tab = pc.shift_tables[:, 1:, :]
    hit = np.ones(tab.shape[1:], dtype=bool)
    for j in range(pc.length + 1):
        hit &= mask[tab[j]]
    return int(hit.sum())


def progression_instances(S: GroupFunction, pc: ProgressionConfig, limit: int | None = None) -> list[tuple[tuple[int, ...], int]]:
    mask = _require_indicator(S)
    tab = pc.shift_tables
    out = []
    for n in range(1, pc.cfg.prime):
        hit = np.ones(pc.cfg.order, dtype=bool)
        for j in range(pc.length + 1):
            hit &= mask[tab[j, n]]
        for x in np.flatnonzero(hit):
            out.append((pc.cfg.point(int(x)), n))
            if limit is not None and len(out) >= limit:
                return out
    return out


class BoundViolation(AssertionError):
    pass


def combined_degree_mod_p(pc: ProgressionConfig, phis: Sequence[int]) -> int:
    """Degree of sum_j phi_j p_j(n) mod p, -1 for the zero polynomial."""
    p = pc.cfg.prime
    width = max(len(q) for q in pc.polys)
    comb = [0] * width
    for phi, q in zip(phis, pc.polys):
        for i, a in enumerate(q):
            comb[i] = (comb[i] + phi * a) % p
    return _poly_degree(comb)


def weil_gap(pc: ProgressionConfig, phis: Sequence[int]) -> float:
    """|E_n e_p(sum_j phi_j p_j(n)) - 1_{phi = 0}|, with the Weil bound asserted."""
    p = pc.cfg.prime
    if len(phis) != pc.length:
        raise ValueError("need one frequency per polynomial")
    if pc.degree >= p:
        raise ValueError("Weil hypothesis violated: degree >= p")
    phis = [int(x) % p for x in phis]
    width = max(len(q) for q in pc.polys)
    comb = [sum(phi * (q[i] if i < len(q) else 0) for phi, q in zip(phis, pc.polys)) % p for i in range(width)]
    n = np.arange(p, dtype=np.int64)
    phase = np.zeros(p, dtype=np.int64)
    for a in reversed(comb):
        phase = (phase * n + a) % p
    total = complex(ep_array(p, phase).mean())
    value = abs(total - (1.0 if not any(phis) else 0.0))
    deg = combined_degree_mod_p(pc, phis)
    if deg >= 1:
        bound = (deg - 1) * p ** -0.5
        if value > bound + TOL:
            raise BoundViolation(f"Weil bound violated: {value} > {bound} for phis={phis}")
    return value


# ---------------------------------------------------------------- appendix inequality checks


@dataclass(frozen=True)
class CheckResult:
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


@dataclass(frozen=True)
class DualSpec:
    """A dual function D_{s,u} applied to a base function."""

    direction: tuple[int, ...]
    degree: int
    base: GroupFunction

    def realize(self) -> GroupFunction:
        return dual_function(self.base, self.direction, self.degree)


def removing_duals_check(A: np.ndarray, duals: Sequence[tuple[DualSpec | GroupFunction, IntVecPoly]],
                         cfg: FieldConfig, s: int | None = None) -> CheckResult:
    """|E_{x,n} A(x,n) prod_j D_j(x + q_j(n))|^{2^s} <= E_{h in F_p^s} |E_{x,n} prod_eps C^|eps| A(x, n + eps.h)|.

    A is an (order, p) array; each dual is a DualSpec (or an already realised
    table) paired with the vector polynomial q_j that shifts it."""
    p, N = cfg.prime, cfg.order
    A = np.asarray(A, dtype=np.complex128)
    if A.shape != (N, p):
        raise ValueError(f"A must have shape ({N}, {p})")
    if np.max(np.abs(A)) > 1 + 1e-12:
        raise ValueError("A must be 1-bounded")
    if s is None:
        d = max([q.degree for _, q in duals] + [1])
        s = max(1, len(duals) * (d + 1))
    check_cost(float(p ** s) * N * p * 2 ** s, "removing duals")
    twist = np.ones((N, p), dtype=np.complex128)
    for spec, q in duals:
        D = spec.realize() if isinstance(spec, DualSpec) else spec
        tab = vec_poly_table(q, cfg)
        idx = cfg.index_array(cfg.coords[:, None, :] + tab[None, :, :])
        twist *= D.values[idx]
    lhs = abs(np.mean(A * twist)) ** (2 ** s)
    # prod_eps C^|eps| A(x, n + eps.h) is the iterated derivative of A in n
    # along h_1, ..., h_s; expand all but the last step as a batch.
    shifts = (np.arange(p)[:, None] + np.arange(p)[None, :]) % p  # shifts[h, n] = n + h
    batch = A[None, :, :]
    for _ in range(s - 1):
        batch = batch[:, None, :, :] * np.conj(batch[:, :, shifts].transpose(0, 2, 1, 3))
        batch = batch.reshape(-1, N, p)
    total = 0.0
    for h in range(p):
        last = batch * np.conj(batch[:, :, shifts[h]])
        total += float(np.abs(last.mean(axis=(1, 2))).sum())
    rhs = total / p ** s
    return CheckResult(lhs, rhs, lhs <= rhs + TOL, {"s": s})


def _delta_along(f_vals: np.ndarray, cfg: FieldConfig, offsets: Sequence[np.ndarray]) -> np.ndarray:
    """prod_eps C^|eps| f(x + sum_i eps_i offsets_i) as a table."""
    out = np.ones(cfg.order, dtype=np.complex128)
    for eps in _eps_cube(len(offsets)):
        off = sum((e * o for e, o in zip(eps, offsets)), np.zeros(cfg.dimension, dtype=np.int64))
        vals = f_vals[cfg.index_array(cfg.coords + off)]
        out *= np.conj(vals) if sum(eps) % 2 else vals
    return out


def dual_difference_interchange_check(pc: ProgressionConfig, fs: Sequence[GroupFunction], m: int,
                                      betas: Sequence[PointLike],
                                      us: Callable[[tuple[int, ...]], GroupFunction]) -> CheckResult:
    """Premise P = E_h E_x Delta_{beta;h} tilde f_m(x) u_h(x).  Conclusion

        E_{h,h'} E_{x,n} prod_{j != m} conj Delta_{beta;h-h'} f_j(x + Q_j(n))
                 * prod_eps C^|eps| u_{h^eps}(x + Q_m(n) + eps.(h-h')beta)

    where h^eps takes h_i when eps_i = 0 and h'_i otherwise.  Checks
    conclusion >= |P|^{2^s}."""
    _check_functions(pc, fs)
    cfg = pc.cfg
    p, N = cfg.prime, cfg.order
    s = len(betas)
    if s > 3:
        raise ValueError(f"s = {s} beyond desk scale (cost ~ {float(p) ** (2 * s) * N * p:.3g})")
    check_cost(float(p ** (2 * s)) * N * p * (pc.length + 2 ** s), "dual-difference interchange")
    B = np.asarray([cfg.normalize(b) for b in betas], dtype=np.int64)
    tilde = tilde_dual(pc, fs, m)
    hs_all = list(itertools.product(range(p), repeat=s))
    u_tab = {h: us(h) for h in hs_all}
    for u in u_tab.values():
        if u.sup_bound > 1 + 1e-12:
            raise ValueError("u_h must be 1-bounded")

    premise = 0.0 + 0.0j
    for h in hs_all:
        offs = [h[i] * B[i] for i in range(s)]
        premise += np.mean(_delta_along(tilde.values, cfg, offs) * u_tab[h].values)
    premise /= len(hs_all)

    tab = pc.shift_tables  # (l+1, p, N)
    Qm = pc.offsets[m]  # (p, D)
    cube = _eps_cube(s)
    conclusion = 0.0 + 0.0j
    for h in hs_all:
        for hp in hs_all:
            k = [(a - b) % p for a, b in zip(h, hp)]
            offs = [k[i] * B[i] for i in range(s)]
            prod = np.ones((p, N), dtype=np.complex128)
            for j, f in enumerate(fs):
                if j == m:
                    continue
                prod *= np.conj(_delta_along(f.values, cfg, offs))[tab[j]]
            for eps in cube:
                h_eps = tuple(hp[i] if eps[i] else h[i] for i in range(s))
                off = sum((e * o for e, o in zip(eps, offs)), np.zeros(cfg.dimension, dtype=np.int64))
                idx = cfg.index_array(cfg.coords[None, :, :] + (Qm + off)[:, None, :])
                vals = u_tab[h_eps].values[idx]
                prod *= np.conj(vals) if sum(eps) % 2 else vals
            conclusion += prod.mean()
    conclusion /= len(hs_all) ** 2
    target = abs(premise) ** (2 ** s)
    ok = conclusion.real >= target - TOL and abs(conclusion.imag) <= TOL
    return CheckResult(float(abs(premise)), float(conclusion.real), ok,
                       {"premise": premise, "conclusion": conclusion, "premise_power": target, "s": s})


def low_complexity_check(f: GroupFunction, v: PointLike, s: int,
                         gs: Sequence[Callable[[tuple[int, ...]], GroupFunction]]) -> CheckResult:
    """|E_h E_x Delta_{s,v;h} f(x) prod_j g_{j,h}(x)| <= ||f||_{U^s(v)}, where
    gs[j] receives h with its j-th coordinate removed."""
    cfg = f.cfg
    p = cfg.prime
    if len(gs) != s:
        raise ValueError(f"need {s} function families")
    vv = np.asarray(cfg.normalize(v), dtype=np.int64)
    if not vv.any():
        raise ValueError("zero direction")
    check_cost(float(p ** s) * cfg.order * (2 ** s + s), "low complexity")
    total = 0.0 + 0.0j
    for h in itertools.product(range(p), repeat=s):
        vals = _delta_along(f.values, cfg, [hi * vv for hi in h])
        for j, g in enumerate(gs):
            gj = g(h[:j] + h[j + 1:])
            if gj.sup_bound > 1 + 1e-12:
                raise ValueError("g must be 1-bounded")
            vals = vals * gj.values
        total += vals.mean()
    lhs = abs(total / p ** s)
    rhs = gowers_norm(f, v, s)
    return CheckResult(lhs, rhs, lhs <= rhs + TOL)


def linear_averages_check(pc: ProgressionConfig, fs: Sequence[GroupFunction]) -> CheckResult:
    """For linear p_j(n) = n: |Lambda| <= ||f_l||_{v_l, v_l - v_1, ..., v_l - v_{l-1}}."""
    for q in pc.polys:
        if tuple(q[:2]) != (0, 1) or any(q[2:]):
            raise ValueError("linear averages check needs p_j(n) = n for all j")
    lam = abs(counting_operator(pc, fs))
    l = pc.length
    vl = np.asarray(pc.vector_of(l))
    dirs = [tuple(vl)] + [tuple(vl - np.asarray(pc.vector_of(j))) for j in range(1, l)]
    groups = [subgroup_span(pc.cfg, [d]) for d in dirs]
    rhs = box_norm(fs[l], groups)
    return CheckResult(lam, rhs, lam <= rhs + TOL, {"directions": dirs})
