"""Symbolic van der Corput (PET) differencing of vector polynomial families,
the resulting box-norm directions, type tuples, and the numerical check of
the averaged box-norm bound."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cost import check_cost
from .counting import ProgressionConfig, _poly_degree, counting_operator
from .field_core import FieldConfig, GroupFunction, rref_mod_p, subgroup_span
from .norms import TOL, box_norm_power

Exp = tuple[int, ...]
Vec = tuple[int, ...]


def _strip(e: Iterable[int]) -> Exp:
    e = list(e)
    while len(e) > 1 and e[-1] == 0:
        e.pop()
    return tuple(e) if e else (0,)


@dataclass(frozen=True)
class MultiPoly:
    """Vector polynomial in n, h_1, h_2, ... with integer coefficients in Z^D.

    Exponent tuples are (e_n, e_h1, e_h2, ...) with trailing zeros stripped,
    so adding unused h variables never changes a polynomial."""

    dim: int
    terms: tuple[tuple[Exp, Vec], ...] = ()

    @classmethod
    def from_dict(cls, dim: int, terms: Mapping[Sequence[int], Sequence[int]]) -> "MultiPoly":
        acc: dict[Exp, list[int]] = {}
        for e, c in terms.items():
            c = [int(x) for x in c]
            if len(c) != dim:
                raise ValueError("coefficient has the wrong dimension")
            key = _strip(e)
            if key in acc:
                acc[key] = [a + b for a, b in zip(acc[key], c)]
            else:
                acc[key] = c
        items = tuple(sorted((k, tuple(v)) for k, v in acc.items() if any(v)))
        return cls(dim, items)

    @classmethod
    def from_scalar(cls, poly: Sequence[int], v: Sequence[int]) -> "MultiPoly":
        """sum_i a_i n^i times the vector v."""
        return cls.from_dict(len(v), {(i,): [a * c for c in v] for i, a in enumerate(poly) if a})

    @classmethod
    def zero(cls, dim: int) -> "MultiPoly":
        return cls(dim)

    def as_dict(self) -> dict[Exp, Vec]:
        return dict(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "MultiPoly") -> "MultiPoly":
        d = {k: list(v) for k, v in self.terms}
        for k, v in other.terms:
            d[k] = [a + b for a, b in zip(d.get(k, [0] * self.dim), v)]
        return MultiPoly.from_dict(self.dim, d)

    def __neg__(self) -> "MultiPoly":
        return MultiPoly(self.dim, tuple((k, tuple(-c for c in v)) for k, v in self.terms))

    def __sub__(self, other: "MultiPoly") -> "MultiPoly":
        return self + (-other)

    def scale(self, k: int) -> "MultiPoly":
        return MultiPoly.from_dict(self.dim, {e: [k * c for c in v] for e, v in self.terms})

    @property
    def n_degree(self) -> int:
        """Degree in n; -1 for the zero polynomial."""
        return max((e[0] for e, _ in self.terms), default=-1)

    @property
    def h_vars(self) -> int:
        """Number of h variables actually used (highest index)."""
        return max((len(e) - 1 for e, _ in self.terms), default=0)

    @property
    def total_h_degree(self) -> int:
        return max((sum(e[1:]) for e, _ in self.terms), default=-1)

    def n_coefficient(self, i: int) -> "MultiPoly":
        """Coefficient of n^i, a polynomial in the h variables only."""
        return MultiPoly.from_dict(self.dim, {(0,) + e[1:]: v for e, v in self.terms if e[0] == i})

    def tilde(self) -> "MultiPoly":
        """q(n, h) - q(0, h)."""
        return MultiPoly(self.dim, tuple((e, v) for e, v in self.terms if e[0] > 0))

    def shift_n(self, k: int) -> "MultiPoly":
        """Substitute n -> n + h_k (k is 1-based)."""
        out: dict[Exp, list[int]] = {}
        for e, v in self.terms:
            base = list(e) + [0] * max(0, k + 1 - len(e))
            for i in range(e[0] + 1):
                new = list(base)
                new[0] = i
                new[k] += e[0] - i
                key = _strip(new)
                c = math.comb(e[0], i)
                prev = out.get(key, [0] * self.dim)
                out[key] = [a + c * b for a, b in zip(prev, v)]
        return MultiPoly.from_dict(self.dim, out)

    def evaluate(self, n: int, hs: Sequence[int], p: int | None = None) -> Vec:
        acc = [0] * self.dim
        for e, v in self.terms:
            m = n ** e[0]
            for i, x in enumerate(e[1:]):
                m *= hs[i] ** x
            acc = [a + m * c for a, c in zip(acc, v)]
        if p is not None:
            acc = [a % p for a in acc]
        return tuple(acc)

    def evaluate_h_grid(self, p: int, s: int) -> np.ndarray:
        """(p^s, D) array of the (n-free) polynomial evaluated at every h in F_p^s mod p,
        rows in itertools.product order."""
        if self.n_degree > 0:
            raise ValueError("polynomial depends on n")
        if self.h_vars > s:
            raise ValueError("polynomial uses more h variables than supplied")
        grid = np.array(list(itertools.product(range(p), repeat=s)), dtype=np.int64).reshape(-1, s)
        out = np.zeros((grid.shape[0], self.dim), dtype=np.int64)
        for e, v in self.terms:
            mono = np.ones(grid.shape[0], dtype=np.int64)
            for i, x in enumerate(e[1:]):
                mono = mono * np.mod(grid[:, i] ** x, p) % p
            out = (out + mono[:, None] * np.mod(np.asarray(v, dtype=np.int64), p)) % p
        return out

    def pretty(self, names: Sequence[str] | None = None) -> str:
        return format_poly(self, names)


# ---------------------------------------------------------------- pretty printing

def _monomial(e: Exp) -> str:
    parts = []
    for i, x in enumerate(e[1:], start=1):
        if x:
            parts.append(f"h{i}" + (f"^{x}" if x > 1 else ""))
    if e[0]:
        parts.append("n" + (f"^{e[0]}" if e[0] > 1 else ""))
    return "*".join(parts)


def _vector_text(u: Vec, names: Sequence[str] | None) -> str:
    if names is None:
        return "(" + ",".join(str(c) for c in u) + ")"
    parts = []
    for c, name in zip(u, names):
        if c == 0:
            continue
        mag = "" if abs(c) == 1 else f"{abs(c)}"
        sign = "-" if c < 0 else "+"
        parts.append((sign, f"{mag}{name}"))
    # list positive entries first so (v2-v1) reads naturally
    parts.sort(key=lambda t: t[0] == "-")
    text = "".join(("" if i == 0 and s == "+" else s) + body for i, (s, body) in enumerate(parts))
    return f"({text})" if len(parts) > 1 else text


def _scalar_text(terms: list[tuple[Exp, int]]) -> str:
    """Scalar polynomial in n, h with the common integer factor pulled out."""
    g = 0
    for _, c in terms:
        g = math.gcd(g, c)
    if terms[0][1] < 0:
        g = -g
    inner = []
    for i, (e, c) in enumerate(terms):
        k = c // g
        mono = _monomial(e)
        coef = "" if abs(k) == 1 and mono else str(abs(k))
        body = coef + ("*" if coef and mono and len(terms) > 1 else "") + mono if len(terms) > 1 else mono
        sign = "-" if k < 0 else "+"
        inner.append(("" if i == 0 and sign == "+" else sign) + (body or coef))
    prefix = "" if g == 1 else ("-" if g == -1 else str(g))
    if len(terms) == 1:
        mono = _monomial(terms[0][0])
        return (prefix + mono) if mono else str(g)
    return f"{prefix}({''.join(inner)})"


def format_poly(q: MultiPoly, names: Sequence[str] | None = None) -> str:
    """Group terms by primitive coefficient vector, e.g. 2h1*n*(v2-v1) + n*v2."""
    if q.is_zero():
        return "0"
    groups: dict[Vec, list[tuple[Exp, int]]] = {}
    for e, v in q.terms:
        g = 0
        for c in v:
            g = math.gcd(g, c)
        last = next(c for c in reversed(v) if c)
        if last < 0:
            g = -g
        u = tuple(c // g for c in v)
        groups.setdefault(u, []).append((e, g))
    pieces = []
    for u in sorted(groups, key=lambda u: min(groups[u])[0], reverse=False):
        terms = sorted(groups[u], key=lambda t: (-t[0][0], tuple(-x for x in t[0])))
        scal = _scalar_text(terms)
        vec = _vector_text(u, names)
        pieces.append(scal + "*" + vec if scal not in ("", "1") else vec)
    out = " + ".join(pieces)
    return out.replace("+ -", "- ")


# ---------------------------------------------------------------- families


class FamilyCollapsed(RuntimeError):
    pass


@dataclass(frozen=True)
class PolyFamily:
    members: tuple[MultiPoly, ...]
    provenance: tuple[int, ...]
    h_count: int = 0

    def __post_init__(self) -> None:
        if len(self.members) != len(self.provenance):
            raise ValueError("provenance must tag every member")
        used = max((q.h_vars for q in self.members), default=0)
        if used > self.h_count:
            raise ValueError("members use more h variables than h_count")

    def __len__(self) -> int:
        return len(self.members)

    @property
    def dim(self) -> int:
        return self.members[0].dim

    def degrees(self) -> list[int]:
        return [q.n_degree for q in self.members]

    def pretty(self, names: Sequence[str] | None = None) -> list[str]:
        return [format_poly(q, names) for q in self.members]


def family_from_progression(pc: ProgressionConfig, formal: bool = False) -> PolyFamily:
    """Members v_{eta_j} p_j(n).  With formal=True the vectors are the unit
    vectors e_1, ..., e_k of Z^k (k = number of vectors), so coefficients read
    as combinations of v_1, ..., v_k."""
    members = []
    for j in range(1, pc.length + 1):
        if formal:
            v = [0] * len(pc.vectors)
            v[pc.eta[j - 1] - 1] = 1
        else:
            v = pc.vector_of(j)
        members.append(MultiPoly.from_scalar(pc.polys[j - 1], v))
    return PolyFamily(tuple(members), tuple(range(1, pc.length + 1)), 0)


def vdc_step(F: PolyFamily, m: int) -> PolyFamily:
    """One differencing step along member m (1-based) with a fresh variable.

    Members are emitted in the order q_1 - q_m, T q_1 - q_m, q_2 - q_m, T q_2 - q_m, ...
    (all with constant-in-n parts removed), then zero members and repeats dropped."""
    if not 1 <= m <= len(F):
        raise IndexError(f"member index {m} outside [1, {len(F)}]")
    qm = F.members[m - 1].tilde()
    if qm.n_degree < 1:
        raise ValueError("chosen member is constant in n")
    k = F.h_count + 1
    out: list[MultiPoly] = []
    prov: list[int] = []
    seen: set[MultiPoly] = set()
    for q, tag in zip(F.members, F.provenance):
        tq = q.tilde()
        for cand in (tq - qm, tq.shift_n(k).tilde() - qm):
            if cand.is_zero() or cand in seen:
                continue
            seen.add(cand)
            out.append(cand)
            prov.append(tag)
    if not out:
        raise FamilyCollapsed("family collapsed")
    return PolyFamily(tuple(out), tuple(prov), k)


def is_nice(F: PolyFamily) -> bool:
    """Pairwise differences nonconstant in n and the last member of maximal n-degree."""
    if not len(F):
        return False
    # a - b is constant in n exactly when their n-dependent parts coincide
    if len({q.tilde() for q in F.members}) < len(F):
        return False
    degs = F.degrees()
    return degs[-1] == max(degs)


def pet_weight(F: PolyFamily) -> tuple[int, ...]:
    """Per n-degree (highest first) the number of distinct leading coefficients."""
    top = max(F.degrees())
    classes: dict[int, set[MultiPoly]] = {}
    for q in F.members:
        d = q.n_degree
        classes.setdefault(d, set()).add(q.n_coefficient(d))
    return tuple(len(classes.get(d, ())) for d in range(top, 0, -1))


def _weight_less(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    width = max(len(a), len(b))
    a = (0,) * (width - len(a)) + a
    b = (0,) * (width - len(b)) + b
    return a < b


def choose_member(F: PolyFamily, last_tag: int) -> int | None:
    """1-based index to difference along, or None when every member is linear."""
    degs = F.degrees()
    if max(degs) <= 1:
        return None
    last = len(F) - 1
    others_nonlinear = any(d >= 2 for i, d in enumerate(degs) if i != last)
    best = None
    for i, d in enumerate(degs):
        if d < 1:
            continue
        if i == last and F.provenance[i] == last_tag and others_nonlinear:
            continue
        if best is None or d < degs[best]:
            best = i
    return None if best is None else best + 1


@dataclass(frozen=True)
class PetResult:
    steps: tuple[int, ...]
    final_family: PolyFamily
    directions: tuple[MultiPoly, ...]
    history: tuple[PolyFamily, ...] = field(repr=False, default=())

    @property
    def s(self) -> int:
        return len(self.directions)

    @property
    def s_prime(self) -> int:
        return len(self.steps)


def pet_run(F: PolyFamily, max_steps: int = 64, max_members: int = 4096) -> PetResult:
    """Difference until every member is linear in n.

    The family can double at each step, so runs that grow past max_members
    stop with RuntimeError rather than exhausting memory."""
    if not is_nice(F):
        raise ValueError("input family is not nice")
    if min(F.degrees()) < 1:
        raise ValueError("every member must depend on n")
    last_tag = F.provenance[-1]
    steps: list[int] = []
    history = [F]
    while True:
        m = choose_member(F, last_tag)
        if m is None:
            break
        if len(steps) >= max_steps:
            raise RuntimeError(f"PET did not terminate within {max_steps} steps")
        new = vdc_step(F, m)
        if len(new) > max_members:
            raise RuntimeError(f"PET family grew to {len(new)} members after {len(steps) + 1} steps "
                               f"(cap {max_members})")
        if not _weight_less(pet_weight(new), pet_weight(F)):
            raise AssertionError(f"PET weight did not decrease at step {len(steps) + 1}")
        steps.append(m)
        F = new
        history.append(F)
    if F.provenance[-1] != last_tag:
        raise RuntimeError("provenance-l member lost")
    if not is_nice(F):
        raise AssertionError("final family is not nice")
    betas = [q.n_coefficient(1) for q in F.members]
    top = betas[-1]
    directions = [top] + [top - b for b in betas[:-1]]
    if any(c.is_zero() for c in directions):
        raise AssertionError("zero direction produced")
    return PetResult(tuple(steps), F, tuple(directions), tuple(history))


# ---------------------------------------------------------------- coefficient audit


def _multinomial_n_coeff(u: Sequence[int]) -> int:
    """Coefficient of n h^u in (n + h_1 + ... )^(|u|+1)."""
    out = math.factorial(sum(u) + 1)
    for x in u:
        out //= math.factorial(x)
    return out


@dataclass(frozen=True)
class AuditResult:
    ok: bool
    per_direction: tuple[dict, ...]
    by_variable: dict

    def __bool__(self) -> bool:
        return self.ok


def _coefficient_vectors(pc: ProgressionConfig, formal: bool) -> dict[tuple[int, int], Vec]:
    """a[(j, i)] = coefficient vector of n^i in the j-th member; j = 0 is zero."""
    fam = family_from_progression(pc, formal)
    dim = fam.dim
    out: dict[tuple[int, int], Vec] = {}
    for i in range(pc.degree + 1):
        out[(0, i)] = (0,) * dim
        for j, q in enumerate(fam.members, start=1):
            out[(j, i)] = q.n_coefficient(i).as_dict().get((0,), (0,) * dim)
    return out


def pet_coefficient_audit(result: PetResult, pc: ProgressionConfig, formal: bool | None = None) -> AuditResult:
    """Search, per direction and per support class of exponents, the indices w
    for which every coefficient equals c_u (a_{l,|u|+1} - a_{w,|u|+1})."""
    dim = result.directions[0].dim
    if formal is None:
        formal = dim == len(pc.vectors) and dim != pc.cfg.dimension
    a = _coefficient_vectors(pc, formal)
    l, d = pc.length, pc.degree
    s_prime = result.final_family.h_count
    exps = [u for u in itertools.product(range(d), repeat=s_prime) if sum(u) <= d - 1]
    allowed = {(0,) + tuple(u) for u in exps}
    ok = True
    per_direction = []
    by_var: dict[str, set[int]] = {}
    for c in result.directions:
        coeffs = {(0,) + tuple(e[1:]) + (0,) * (s_prime - len(e) + 1): v for e, v in c.terms}
        if any(e[0] != 0 for e, _ in c.terms) or any(k not in allowed for k in coeffs):
            ok = False
            per_direction.append({})
            continue
        classes: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
        for u in exps:
            supp = tuple(i for i, x in enumerate(u) if x)
            classes.setdefault(supp, []).append(u)
        found = {}
        for supp, us in classes.items():
            valid = []
            for w in range(l + 1):
                good = True
                for u in us:
                    got = coeffs.get((0,) + tuple(u), (0,) * dim)
                    cu = _multinomial_n_coeff(u)
                    deg = sum(u) + 1
                    want = tuple(cu * (x - y) for x, y in zip(a[(l, deg)], a[(w, deg)]))
                    if got != want:
                        good = False
                        break
                if good:
                    valid.append(w)
            if not valid:
                ok = False
            found[supp] = valid
            if len(supp) == 1:
                by_var.setdefault(f"h{supp[0] + 1}", set()).update(valid)
        per_direction.append(found)
    return AuditResult(ok, tuple(per_direction), {k: sorted(v) for k, v in sorted(by_var.items())})


# ---------------------------------------------------------------- control directions


@dataclass(frozen=True)
class ControlDirections:
    vectors: tuple[Vec, ...]
    multiplicity: int
    controlled_index: int

    def entries(self, cfg: FieldConfig) -> list[tuple[int, ...]]:
        out = []
        for v in self.vectors:
            pt = cfg.normalize(v)
            if not any(pt):
                raise ValueError(f"direction {v} vanishes mod {cfg.prime}")
            out.extend([pt] * self.multiplicity)
        return out


def essentially_distinct(pc: ProgressionConfig) -> bool:
    fam = family_from_progression(pc)
    members = [MultiPoly.zero(fam.dim)] + list(fam.members)
    return all((a - b).n_degree >= 1 for a, b in itertools.combinations(members, 2))


def extract_directions(pc: ProgressionConfig, multiplicity: int | None = None) -> ControlDirections:
    """Leading coefficient vectors of v_l p_l - v_j p_j for j = 0..l-1 (p_0 = 0)."""
    if not essentially_distinct(pc):
        raise ValueError("not essentially distinct")
    degs = [_poly_degree(q) for q in pc.polys]
    order = sorted(range(pc.length), key=lambda j: degs[j])  # stable: keeps the last max-degree term last
    fam = family_from_progression(pc)
    members = [fam.members[j] for j in order]
    last = members[-1]
    vecs = []
    for q in [MultiPoly.zero(fam.dim)] + members[:-1]:
        diff = last - q
        lead = diff.n_coefficient(diff.n_degree).as_dict()[(0,)]
        if not any(lead):
            raise ValueError("zero direction")
        vecs.append(lead)
    if multiplicity is None:
        sorted_pc = ProgressionConfig(pc.cfg, pc.vectors, [pc.polys[j] for j in order],
                                      [pc.eta[j] for j in order], pc.theorem_mode)
        multiplicity = pet_run(family_from_progression(sorted_pc)).s
    return ControlDirections(tuple(vecs), multiplicity, order[-1] + 1)


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class TypeTuple:
    w: tuple[int, ...]

    @property
    def K(self) -> int:
        return sum(self.w)

    @property
    def basic(self) -> bool:
        return sum(1 for x in self.w if x) <= 1

    def __iter__(self):
        return iter(self.w)


def compute_type(pc: ProgressionConfig) -> TypeTuple:
    """w_t = number of maximal-degree terms j with eta_j = t."""
    d = pc.degree
    w = [0] * pc.length
    for j, q in enumerate(pc.polys):
        if _poly_degree(q) == d:
            w[pc.eta[j] - 1] += 1
    return TypeTuple(tuple(w))


def sigma(w: TypeTuple | Sequence[int], m: int, i: int) -> TypeTuple:
    """Move one unit from slot m to slot i (1-based)."""
    w = list(w)
    if not 1 <= m <= len(w) or not 1 <= i <= len(w):
        raise IndexError("slot out of range")
    if w[m - 1] == 0:
        raise ValueError(f"slot {m} is not in the support")
    if m == i:
        raise ValueError("m and i must differ")
    w[m - 1] -= 1
    w[i - 1] += 1
    return TypeTuple(tuple(w))


def type_less(w_prime: TypeTuple | Sequence[int], w: TypeTuple | Sequence[int]) -> bool:
    """Is w' reachable from w by moves sigma_{mi} with w_m <= w_i at every step?"""
    target = tuple(w_prime)
    start = tuple(w)
    if len(target) != len(start) or sum(target) != sum(start):
        return False
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for m, i in itertools.permutations(range(len(cur)), 2):
            if cur[m] and cur[m] <= cur[i]:
                nxt = list(cur)
                nxt[m] -= 1
                nxt[i] += 1
                nxt = tuple(nxt)
                if nxt == target:
                    return True
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
    return False


# ---------------------------------------------------------------- numerical PET bound


@dataclass(frozen=True)
class PetBoundResult:
    lhs: float
    rhs: float
    ok: bool
    s: int
    s_prime: int

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.ok))


def _subgroup_key(cfg: FieldConfig, vec) -> tuple:
    return rref_mod_p([vec], cfg.prime, cfg.dimension)


def averaged_box_norm(f: GroupFunction, directions: Sequence[MultiPoly], s_prime: int) -> float:
    """E_{h in F_p^{s'}} ||f||^{2^s}_{c_1(h), ..., c_s(h)}, a zero vector giving {0}."""
    cfg = f.cfg
    p = cfg.prime
    grids = [c.evaluate_h_grid(p, s_prime) for c in directions]
    cache: dict[tuple, float] = {}
    total = 0.0
    for row in range(p ** s_prime):
        keys = tuple(sorted(_subgroup_key(cfg, g[row]) for g in grids))
        if keys not in cache:
            groups = [subgroup_span(cfg, list(k)) for k in keys]
            cache[keys] = box_norm_power(f, groups)
        total += cache[keys]
    return total / p ** s_prime


def pet_bound_check(pc: ProgressionConfig, fs: Sequence[GroupFunction],
                    result: PetResult | None = None) -> PetBoundResult:
    """|Lambda|^{2^{s'}} <= E_h ||f_l||^{2^s}_{c_1(h), ..., c_s(h)}."""
    if result is None:
        result = pet_run(family_from_progression(pc))
    if result.directions[0].dim != pc.cfg.dimension:
        raise ValueError("PET result must use the concrete vectors of the progression")
    cfg = pc.cfg
    s, sp = result.s, result.s_prime
    check_cost(float(cfg.prime ** sp) * cfg.order * cfg.prime ** min(s, cfg.dimension * s), "PET bound")
    lhs = abs(counting_operator(pc, fs)) ** (2 ** sp)
    rhs = averaged_box_norm(fs[pc.length], result.directions, sp)
    return PetBoundResult(float(lhs), float(rhs), bool(lhs <= rhs + TOL), s, sp)
