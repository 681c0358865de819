"""Multiplicative derivatives, box and Gowers norms, dual functions and the
constructive U^2 inverse along a direction."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cost import check_cost
from .field_core import (
    FieldConfig,
    GroupFunction,
    PointLike,
    Subgroup,
    _same_cfg,
    as_subgroup,
    coset_average,
    ep_array,
    subgroup_span,
)

TOL = 1e-9

# Upper bound on batch_rows * order before the batched recursion is split.
_BATCH_LIMIT = 1 << 22


def _require_nonzero(cfg: FieldConfig, v: PointLike) -> tuple[int, ...]:
    v = cfg.normalize(v)
    if not any(v):
        raise ValueError("zero direction")
    return v


def direction_spec(cfg: FieldConfig, entries) -> list[Subgroup]:
    """Normalize a list of subgroups and/or points (a point v stands for <v>)."""
    entries = list(entries)
    if not entries:
        raise ValueError("direction list is empty")
    return [as_subgroup(cfg, e) for e in entries]


def mult_derivative(f: GroupFunction, h: PointLike) -> GroupFunction:
    """x -> f(x) conj f(x+h)."""
    shifted = f.values[f.cfg.shift_index(h)]
    return GroupFunction(f.cfg, f.values * np.conj(shifted), f.sup_bound ** 2)


def iterated_derivative(f: GroupFunction, hs: Sequence[PointLike]) -> GroupFunction:
    for h in hs:
        f = mult_derivative(f, h)
    return f


def _eps_cube(s: int) -> list[tuple[int, ...]]:
    return list(itertools.product((0, 1), repeat=s))


# ---------------------------------------------------------------- box norms

def box_cost(order: int, groups: Sequence[Subgroup]) -> float:
    return float(order) * float(np.prod([g.size for g in groups], dtype=float))


def _last_level(batch: np.ndarray, H: Subgroup) -> np.ndarray:
    """Per row: E_x E_{h in H} g(x) conj g(x+h) = E_x |E(g|H)(x)|^2."""
    perm, _ = H.coset_grouping
    grouped = batch[:, perm].reshape(batch.shape[0], -1, H.size)
    m = grouped.mean(axis=-1)
    return np.mean(np.abs(m) ** 2, axis=-1)


def _box_power_batch(batch: np.ndarray, groups: Sequence[Subgroup], shifts: Sequence[np.ndarray]) -> float:
    """Sum over rows of the 2^s-th power of the box norm of each row (s = len(groups))."""
    if len(groups) == 1:
        return float(np.sum(_last_level(batch, groups[0])))
    H, rest = groups[0], groups[1:]
    idx = shifts[0]
    rows_out = batch.shape[0] * idx.shape[0]
    if rows_out * batch.shape[1] > _BATCH_LIMIT and batch.shape[0] > 1:
        half = batch.shape[0] // 2
        return (_box_power_batch(batch[:half], groups, shifts)
                + _box_power_batch(batch[half:], groups, shifts))
    if rows_out * batch.shape[1] > _BATCH_LIMIT:
        total = 0.0
        for k in range(idx.shape[0]):
            total += _box_power_batch(batch * np.conj(batch[:, idx[k]]), rest, shifts[1:])
        return total
    derived = (batch[:, None, :] * np.conj(batch[:, idx])).reshape(rows_out, batch.shape[1])
    return _box_power_batch(derived, rest, shifts[1:])


def box_norm_power(f: GroupFunction, dirs, method: str = "recursive") -> float:
    """The 2^s-th power of the box norm (the raw average, clamped at 0)."""
    cfg = f.cfg
    groups = direction_spec(cfg, dirs)
    for g in groups:
        _same_cfg(cfg, g.cfg)
    check_cost(box_cost(cfg.order, groups) * (2 ** len(groups) if method == "direct" else 1), "box norm")
    if method == "direct":
        val = _box_inner_direct([f] * 2 ** len(groups), groups)
    elif method == "recursive":
        # Reduce over all but the last group; each group contributes its
        # shift table as a permutation array of shape (|H|, order).
        shifts = [cfg.index_array(cfg.coords[None, :, :] + g.element_points()[:, None, :]) for g in groups[:-1]]
        total = _box_power_batch(f.values[None, :], groups, shifts)
        val = complex(total / np.prod([g.size for g in groups[:-1]], dtype=float))
    else:
        raise ValueError(f"unknown method {method!r}")
    re = float(np.real(val))
    return max(re, 0.0)


def box_norm(f: GroupFunction, dirs, method: str = "recursive") -> float:
    s = len(list(dirs)) if not isinstance(dirs, Subgroup) else 1
    if isinstance(dirs, Subgroup):
        dirs = [dirs]
    return box_norm_power(f, dirs, method) ** (1.0 / 2 ** s)


def _box_inner_direct(fs: Sequence[GroupFunction], groups: Sequence[Subgroup]) -> complex:
    """E_x E_{h_i in H_i} prod_eps C^{|eps|} f_eps(x + eps.h), functions indexed by eps in
    lexicographic order of {0,1}^s."""
    cfg = fs[0].cfg
    s = len(groups)
    cube = _eps_cube(s)
    coords = cfg.coords
    total = 0.0 + 0.0j
    for hs in itertools.product(*[g.element_points() for g in groups]):
        prod = np.ones(cfg.order, dtype=np.complex128)
        for eps, fe in zip(cube, fs):
            off = sum((e * h for e, h in zip(eps, hs)), np.zeros(cfg.dimension, dtype=np.int64))
            vals = fe.values[cfg.index_array(coords + off)]
            prod *= np.conj(vals) if sum(eps) % 2 else vals
        total += prod.mean()
    n = np.prod([g.size for g in groups], dtype=float)
    return complex(total / n)


def box_inner_product(fs: Mapping[tuple[int, ...], GroupFunction] | Sequence[GroupFunction], dirs) -> complex:
    groups = direction_spec(fs[0].cfg if not isinstance(fs, Mapping) else next(iter(fs.values())).cfg, dirs)
    s = len(groups)
    if isinstance(fs, Mapping):
        ordered = [fs[eps] for eps in _eps_cube(s)]
    else:
        ordered = list(fs)
    if len(ordered) != 2 ** s:
        raise ValueError(f"need {2 ** s} functions, got {len(ordered)}")
    check_cost(box_cost(ordered[0].cfg.order, groups) * 2 ** s, "box inner product")
    return _box_inner_direct(ordered, groups)


def gowers_norm(f: GroupFunction, v: PointLike, s: int) -> float:
    v = _require_nonzero(f.cfg, v)
    if s < 1:
        raise ValueError("degree must be positive")
    return box_norm(f, [v] * s)


def gowers_norm_power(f: GroupFunction, v: PointLike, s: int) -> float:
    v = _require_nonzero(f.cfg, v)
    return box_norm_power(f, [v] * s)


@dataclass(frozen=True)
class InequalityResult:
    lhs: float
    rhs: float
    holds: bool

    def __post_init__(self) -> None:
        object.__setattr__(self, "lhs", float(self.lhs))
        object.__setattr__(self, "rhs", float(self.rhs))
        object.__setattr__(self, "holds", bool(self.holds))

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.holds))


def gcs_check(fs, dirs) -> InequalityResult:
    """Gowers-Cauchy-Schwarz: |<f_eps>_box| <= prod_eps ||f_eps||_box."""
    if isinstance(fs, Mapping):
        cfg = next(iter(fs.values())).cfg
    else:
        cfg = fs[0].cfg
    groups = direction_spec(cfg, dirs)
    s = len(groups)
    ordered = [fs[eps] for eps in _eps_cube(s)] if isinstance(fs, Mapping) else list(fs)
    lhs = abs(box_inner_product(ordered, groups))
    rhs = float(np.prod([box_norm(g, groups) for g in ordered]))
    return InequalityResult(lhs, rhs, lhs <= rhs + TOL)


# ---------------------------------------------------------------- dual functions

def dual_function(f: GroupFunction, v: PointLike, s: int) -> GroupFunction:
    """D_{s,v} f(x) = E_{h in F_p^s} prod_{eps != 0} C^{|eps|} f(x + (eps.h) v)."""
    cfg = f.cfg
    v = np.asarray(_require_nonzero(cfg, v), dtype=np.int64)
    p = cfg.prime
    check_cost(float(p ** s) * cfg.order * (2 ** s - 1), "dual function")
    # shifted[t] = table of f(x + t v) for t in F_p
    shifted = np.stack([f.values[cfg.index_array(cfg.coords + t * v)] for t in range(p)])
    cshift = np.conj(shifted)
    cube = _eps_cube(s)[1:]
    acc = np.zeros(cfg.order, dtype=np.complex128)
    for hs in itertools.product(range(p), repeat=s):
        prod = np.ones(cfg.order, dtype=np.complex128)
        for eps in cube:
            t = sum(e * h for e, h in zip(eps, hs)) % p
            prod *= cshift[t] if sum(eps) % 2 else shifted[t]
        acc += prod
    acc /= p ** s
    return GroupFunction(cfg, acc, f.sup_bound ** (2 ** s - 1))


@dataclass(frozen=True)
class IdentityResult:
    lhs: complex
    rhs: complex
    ok: bool

    def __post_init__(self) -> None:
        object.__setattr__(self, "ok", bool(self.ok))

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.ok))


def inductive_formula_check(f: GroupFunction, dirs) -> IdentityResult:
    """||f||^{2^s}_{H_1..H_s} against E_{h in H_1} ||Delta_h f||^{2^{s-1}}_{H_2..H_s}."""
    groups = direction_spec(f.cfg, dirs)
    lhs = box_norm_power(f, groups)
    first, rest = groups[0], groups[1:]
    total = 0.0 + 0.0j
    for h in first.element_points():
        g = mult_derivative(f, h)
        total += box_norm_power(g, rest) if rest else g.mean()
    rhs = complex(total / first.size)
    return IdentityResult(complex(lhs), rhs, abs(lhs - rhs) <= TOL)


def weak_inverse_check(f: GroupFunction, v: PointLike, s: int) -> IdentityResult:
    """||f||^{2^s}_{U^s(v)} against E_x f(x) D_{s,v} f(x)."""
    lhs = gowers_norm_power(f, v, s)
    D = dual_function(f, v, s)
    rhs = complex(np.mean(f.values * D.values))
    ok = abs(lhs - rhs) <= TOL and abs(rhs.imag) <= TOL
    return IdentityResult(complex(lhs), rhs, ok)


# ---------------------------------------------------------------- eigenfunctions

@dataclass(frozen=True, eq=False)
class Transversal:
    """Coset representatives of <v>: rep[x] is the representative index of x's
    coset and offset[x] the n with x = rep + n v."""

    cfg: FieldConfig
    v: tuple[int, ...]
    rep: np.ndarray
    offset: np.ndarray

    @property
    def representatives(self) -> np.ndarray:
        return np.unique(self.rep)


def transversal(cfg: FieldConfig, v: PointLike) -> Transversal:
    """Lexicographically smallest representative per coset (first coordinate most significant)."""
    v = np.asarray(_require_nonzero(cfg, v), dtype=np.int64)
    p, D = cfg.prime, cfg.dimension
    lex_weights = p ** np.arange(D - 1, -1, -1, dtype=np.int64)
    orbit = np.mod(cfg.coords[None, :, :] + np.arange(p)[:, None, None] * v, p)  # (t, x, D)
    keys = orbit @ lex_weights
    t_best = np.argmin(keys, axis=0)
    rep_pts = orbit[t_best, np.arange(cfg.order)]
    rep = cfg.index_array(rep_pts)
    offset = np.mod(-t_best, p)
    return Transversal(cfg, tuple(int(c) for c in v), rep, offset)


@dataclass(frozen=True, eq=False)
class Eigenfunction:
    chi: GroupFunction
    v: tuple[int, ...]
    phi: np.ndarray

    def violations(self) -> list[str]:
        cfg = self.chi.cfg
        out = []
        mod = np.abs(self.chi.values)
        if not np.all((np.abs(mod) <= 1e-9) | (np.abs(mod - 1) <= 1e-9)):
            out.append("modulus")
        sh = cfg.shift_index(self.v)
        lhs = self.chi.values[sh]
        rhs = ep_array(cfg.prime, self.phi) * self.chi.values
        if np.max(np.abs(lhs - rhs)) > 1e-9:
            out.append("eigenfunction property")
        if not np.array_equal(self.phi[sh], self.phi):
            out.append("invariance")
        return out

    def validate(self) -> "Eigenfunction":
        bad = self.violations()
        if bad:
            raise ValueError(f"eigenfunction invariants violated: {', '.join(bad)}")
        return self


def _table_on_reps(tr: Transversal, table, dtype) -> np.ndarray:
    """Read a per-coset quantity at each point's representative.

    table may be a callable on representative coordinates, a scalar, or an
    array over all points (only entries at representatives are used)."""
    cfg = tr.cfg
    if callable(table):
        reps = tr.representatives
        vals = {int(r): table(cfg.point(int(r))) for r in reps}
        return np.asarray([vals[int(r)] for r in tr.rep], dtype=dtype)
    arr = np.asarray(table, dtype=dtype)
    if arr.ndim == 0:
        return np.full(cfg.order, arr, dtype=dtype)
    if arr.shape != (cfg.order,):
        raise ValueError("per-coset table must cover every point")
    return arr[tr.rep]


def make_eigenfunction(cfg: FieldConfig, v: PointLike, phi, psi=0, lambda_phase: complex = 1.0,
                       support=None) -> Eigenfunction:
    """chi(x' + v n) = 1_E(x') lambda e_p(phi(x') n + psi(x')).

    phi is integer valued; psi may be real (e_p extended to real arguments);
    support is a predicate/table on representatives, default all of them."""
    lam = complex(lambda_phase)
    if abs(abs(lam) - 1) > 1e-12:
        raise ValueError(f"lambda {lam} is not of unit modulus")
    tr = transversal(cfg, v)
    phi_t = np.mod(_table_on_reps(tr, phi, np.int64), cfg.prime)
    psi_t = _table_on_reps(tr, psi, np.float64)
    supp = np.ones(cfg.order, dtype=bool) if support is None else _table_on_reps(tr, support, bool)
    vals = supp * lam * np.exp(2j * np.pi * (phi_t * tr.offset + psi_t) / cfg.prime)
    chi = GroupFunction(cfg, vals)
    return Eigenfunction(chi, tr.v, phi_t).validate()


def u2_inverse(f: GroupFunction, v: PointLike) -> tuple[Eigenfunction, float]:
    """Per-coset Fourier analysis along <v>; returns chi with |chi| = 1 and
    E_x f chi >= ||f||^4_{U^2(v)}."""
    cfg = f.cfg
    p = cfg.prime
    tr = transversal(cfg, v)
    reps = tr.representatives
    vv = np.asarray(tr.v, dtype=np.int64)
    # lines[r, n] = f(rep_r + n v)
    pts = cfg.coords[reps][:, None, :] + np.arange(p)[None, :, None] * vv
    lines = f.values[cfg.index_array(pts)]
    # c[r, phi] = E_n f(rep + n v) e_p(phi n)
    coeffs = np.fft.ifft(lines, axis=1)
    mags = np.abs(coeffs)
    best = np.max(mags, axis=1, keepdims=True)
    phi_r = np.argmax(mags >= best - 1e-12, axis=1)
    c_best = coeffs[np.arange(len(reps)), phi_r]
    psi_r = np.where(np.abs(c_best) > 0, -p * np.angle(c_best) / (2 * np.pi), 0.0)
    phi_full = np.zeros(cfg.order, dtype=np.int64)
    psi_full = np.zeros(cfg.order, dtype=np.float64)
    phi_full[reps] = phi_r
    psi_full[reps] = psi_r
    eig = make_eigenfunction(cfg, tr.v, phi_full, psi_full, 1.0)
    corr = complex(np.mean(f.values * eig.chi.values))
    return eig, float(corr.real)


def eigen_projection_gap(eig: Eigenfunction) -> float:
    """max |E(chi|v) - chi 1_{phi=0}|."""
    cfg = eig.chi.cfg
    H = subgroup_span(cfg, [eig.v])
    proj = coset_average(eig.chi.values, H)
    target = eig.chi.values * (eig.phi == 0)
    return float(np.max(np.abs(proj - target)))
