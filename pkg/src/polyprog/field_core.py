"""Arithmetic in F_p and F_p^D, subgroups, conditional expectations and
function tables.

Points of F_p^D are stored as integer indices with the little-endian
mixed-radix bijection index(x) = sum_i x_i p^(i-1).  Every function on the
group is a dense complex table in that order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

PointLike = Sequence[int]

# Largest table we are willing to allocate for a single function.
MAX_ORDER = 1 << 26


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    k = 3
    while k * k <= n:
        if n % k == 0:
            return False
        k += 2
    return True


@dataclass(frozen=True)
class FieldConfig:
    prime: int
    dimension: int

    def __post_init__(self) -> None:
        if not isinstance(self.prime, (int, np.integer)) or not is_prime(int(self.prime)):
            raise ValueError(f"{self.prime} is not prime")
        if int(self.dimension) < 1:
            raise ValueError("dimension must be at least 1")
        if self.prime ** self.dimension > MAX_ORDER:
            raise ValueError(f"p^D = {self.prime}^{self.dimension} is too large")

    @property
    def p(self) -> int:
        return self.prime

    @property
    def order(self) -> int:
        return self.prime ** self.dimension

    @cached_property
    def radix(self) -> np.ndarray:
        return self.prime ** np.arange(self.dimension, dtype=np.int64)

    @cached_property
    def coords(self) -> np.ndarray:
        """All points as an (order, D) array, row i being the point with index i."""
        idx = np.arange(self.order, dtype=np.int64)
        return (idx[:, None] // self.radix[None, :]) % self.prime

    def normalize(self, x: PointLike) -> tuple[int, ...]:
        if isinstance(x, FpPoint):
            x = x.coords
        vals = tuple(int(c) % self.prime for c in x)
        if len(vals) != self.dimension:
            raise ValueError(f"expected a point with {self.dimension} coordinates, got {len(vals)}")
        return vals

    def index(self, x: PointLike) -> int:
        return int(np.dot(np.asarray(self.normalize(x), dtype=np.int64), self.radix))

    def point(self, idx: int) -> tuple[int, ...]:
        return tuple(int(c) for c in self.coords[idx])

    def index_array(self, pts: np.ndarray) -> np.ndarray:
        """Indices of an (..., D) integer array of points, reducing mod p first."""
        return (np.mod(pts, self.prime) @ self.radix).astype(np.int64)

    def shift_index(self, h: PointLike) -> np.ndarray:
        """Array s with s[i] = index(x_i + h); so values[s] is the table of f(x+h)."""
        h = np.asarray(self.normalize(h), dtype=np.int64)
        return self.index_array(self.coords + h)

    def is_zero(self, x: PointLike) -> bool:
        return not any(self.normalize(x))


@dataclass(frozen=True)
class FpPoint:
    cfg: FieldConfig
    coords: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "coords", self.cfg.normalize(self.coords))

    def __add__(self, other: "FpPoint") -> "FpPoint":
        return FpPoint(self.cfg, tuple(a + b for a, b in zip(self.coords, other.coords)))

    def __neg__(self) -> "FpPoint":
        return FpPoint(self.cfg, tuple(-a for a in self.coords))

    def __sub__(self, other: "FpPoint") -> "FpPoint":
        return self + (-other)

    def __mul__(self, k: int) -> "FpPoint":
        return FpPoint(self.cfg, tuple(k * a for a in self.coords))

    __rmul__ = __mul__

    def __iter__(self):
        return iter(self.coords)

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def index(self) -> int:
        return self.cfg.index(self.coords)


def ep(cfg: FieldConfig, a) -> complex:
    """exp(2 pi i a / p) for a residue a in [0, p)."""
    a = int(a)
    if not 0 <= a < cfg.prime:
        raise ValueError(f"residue {a} outside [0, {cfg.prime})")
    return complex(np.exp(2j * np.pi * a / cfg.prime))


def ep_array(p: int, a) -> np.ndarray:
    """Vectorised e_p for integer or real arrays (no range check, reduces mod p)."""
    a = np.asarray(a)
    if np.issubdtype(a.dtype, np.integer):
        a = np.mod(a, p)
    return np.exp(2j * np.pi * a / p)


@dataclass(frozen=True, eq=False)
class GroupFunction:
    cfg: FieldConfig
    values: np.ndarray
    sup_bound: float = 1.0

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=np.complex128).reshape(-1)
        if vals.shape[0] != self.cfg.order:
            raise ValueError(f"table has {vals.shape[0]} entries, expected {self.cfg.order}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("table contains non-finite values")
        peak = float(np.max(np.abs(vals))) if vals.size else 0.0
        if peak > self.sup_bound + 1e-12:
            raise ValueError(f"|values| reaches {peak}, above declared bound {self.sup_bound}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "sup_bound", float(self.sup_bound))

    @classmethod
    def from_callable(cls, cfg: FieldConfig, fn: Callable[[np.ndarray], np.ndarray],
                      sup_bound: float = 1.0) -> "GroupFunction":
        """Build from a vectorised function of the (order, D) coordinate array."""
        return cls(cfg, np.asarray(fn(cfg.coords)), sup_bound)

    @classmethod
    def constant(cls, cfg: FieldConfig, c: complex = 1.0) -> "GroupFunction":
        return cls(cfg, np.full(cfg.order, c, dtype=np.complex128), max(1.0, abs(c)))

    def __call__(self, x: PointLike) -> complex:
        return complex(self.values[self.cfg.index(x)])

    def conj(self) -> "GroupFunction":
        return GroupFunction(self.cfg, np.conj(self.values), self.sup_bound)

    def shift(self, h: PointLike) -> "GroupFunction":
        """x -> f(x + h)."""
        return GroupFunction(self.cfg, self.values[self.cfg.shift_index(h)], self.sup_bound)

    def __mul__(self, other: "GroupFunction") -> "GroupFunction":
        _same_cfg(self.cfg, other.cfg)
        return GroupFunction(self.cfg, self.values * other.values, self.sup_bound * other.sup_bound)

    def scale(self, c: complex) -> "GroupFunction":
        return GroupFunction(self.cfg, self.values * c, self.sup_bound * abs(c))

    def add(self, other: "GroupFunction") -> "GroupFunction":
        _same_cfg(self.cfg, other.cfg)
        return GroupFunction(self.cfg, self.values + other.values, self.sup_bound + other.sup_bound)

    def mean(self) -> complex:
        return complex(self.values.mean())

    def inner(self, other: "GroupFunction") -> complex:
        """E_x f(x) conj(g(x))."""
        return complex(np.mean(self.values * np.conj(other.values)))

    def tightened(self) -> "GroupFunction":
        """Same table with sup_bound set to the actual maximum modulus (at most the old bound)."""
        peak = float(np.max(np.abs(self.values)))
        return GroupFunction(self.cfg, self.values, min(self.sup_bound, peak) if peak > 0 else 0.0)


def _same_cfg(a: FieldConfig, b: FieldConfig) -> None:
    if a != b:
        raise ValueError(f"field mismatch: {a} vs {b}")


# ---------------------------------------------------------------- linear algebra mod p

def rref_mod_p(rows: Iterable[Sequence[int]], p: int, ncols: int | None = None) -> tuple[tuple[int, ...], ...]:
    """Reduced row echelon form over F_p with zero rows dropped.

    The result is canonical: two generator lists span the same subspace iff
    their RREFs coincide.
    """
    mat = [[int(c) % p for c in r] for r in rows]
    if not mat:
        return ()
    ncols = len(mat[0]) if ncols is None else ncols
    pivot_row = 0
    for col in range(ncols):
        sel = next((r for r in range(pivot_row, len(mat)) if mat[r][col]), None)
        if sel is None:
            continue
        mat[pivot_row], mat[sel] = mat[sel], mat[pivot_row]
        inv = pow(mat[pivot_row][col], -1, p)
        mat[pivot_row] = [(c * inv) % p for c in mat[pivot_row]]
        for r in range(len(mat)):
            if r != pivot_row and mat[r][col]:
                k = mat[r][col]
                mat[r] = [(a - k * b) % p for a, b in zip(mat[r], mat[pivot_row])]
        pivot_row += 1
        if pivot_row == len(mat):
            break
    return tuple(tuple(r) for r in mat[:pivot_row])


def rank_mod_p(rows: Iterable[Sequence[int]], p: int) -> int:
    return len(rref_mod_p(rows, p))


def det_mod_p(matrix: Sequence[Sequence[int]], p: int) -> int:
    """Determinant over F_p by Gaussian elimination."""
    mat = [[int(c) % p for c in r] for r in matrix]
    n = len(mat)
    det = 1
    for col in range(n):
        sel = next((r for r in range(col, n) if mat[r][col]), None)
        if sel is None:
            return 0
        if sel != col:
            mat[col], mat[sel] = mat[sel], mat[col]
            det = -det
        det = det * mat[col][col] % p
        inv = pow(mat[col][col], -1, p)
        for r in range(col + 1, n):
            if mat[r][col]:
                k = mat[r][col] * inv % p
                mat[r] = [(a - k * b) % p for a, b in zip(mat[r], mat[col])]
    return det % p


# ---------------------------------------------------------------- subgroups

@dataclass(frozen=True, eq=False)
class Subgroup:
    cfg: FieldConfig
    generators: tuple[tuple[int, ...], ...]
    elements: np.ndarray = field(repr=False)
    basis: tuple[tuple[int, ...], ...] = ()

    @property
    def size(self) -> int:
        return int(self.elements.shape[0])

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Subgroup) and self.cfg == other.cfg and self.basis == other.basis

    def __hash__(self) -> int:
        return hash((self.cfg, self.basis))

    def contains(self, x: PointLike) -> bool:
        i = self.cfg.index(x)
        j = np.searchsorted(self.elements, i)
        return bool(j < self.size and self.elements[j] == i)

    def issubgroup(self, other: "Subgroup") -> bool:
        return bool(np.all(np.isin(self.elements, other.elements)))

    def element_points(self) -> np.ndarray:
        return self.cfg.coords[self.elements]

    @cached_property
    def coset_labels(self) -> np.ndarray:
        """For each point, the smallest index in its coset x + H."""
        cfg = self.cfg
        pts = self.element_points()
        best = np.full(cfg.order, np.iinfo(np.int64).max, dtype=np.int64)
        for h in pts:
            best = np.minimum(best, cfg.index_array(cfg.coords + h))
        return best

    @cached_property
    def coset_grouping(self) -> tuple[np.ndarray, np.ndarray]:
        """(perm, inverse) with values[perm] grouped into consecutive cosets of size |H|."""
        perm = np.argsort(self.coset_labels, kind="stable")
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(perm.shape[0])
        return perm, inverse


def subgroup_span(cfg: FieldConfig, generators: Iterable[PointLike]) -> Subgroup:
    gens = tuple(cfg.normalize(g) for g in generators)
    basis = rref_mod_p(gens, cfg.prime, cfg.dimension)
    if basis:
        b = np.asarray(basis, dtype=np.int64)
        combos = np.stack(np.meshgrid(*[np.arange(cfg.prime)] * len(basis), indexing="ij"), -1)
        pts = combos.reshape(-1, len(basis)) @ b
        elems = np.unique(cfg.index_array(pts))
    else:
        elems = np.zeros(1, dtype=np.int64)
    elems.setflags(write=False)
    return Subgroup(cfg, gens, elems, basis)


def trivial_subgroup(cfg: FieldConfig) -> Subgroup:
    return subgroup_span(cfg, [])


def whole_group(cfg: FieldConfig) -> Subgroup:
    return subgroup_span(cfg, np.eye(cfg.dimension, dtype=int).tolist())


def subgroup_sum(H: Subgroup, K: Subgroup) -> Subgroup:
    _same_cfg(H.cfg, K.cfg)
    return subgroup_span(H.cfg, list(H.basis) + list(K.basis))


def as_subgroup(cfg: FieldConfig, entry) -> Subgroup:
    """A Subgroup passes through; a point v becomes <v>."""
    if isinstance(entry, Subgroup):
        _same_cfg(cfg, entry.cfg)
        return entry
    return subgroup_span(cfg, [entry])


def coset_average(values: np.ndarray, H: Subgroup) -> np.ndarray:
    """Average a (..., order) array over cosets of H, broadcasting back.

    Every point of a coset receives the same floating point sum, so the
    result is exactly H-invariant.  Cosets that are already constant keep
    their value unrounded, which makes the map an exact projection.
    """
    perm, inverse = H.coset_grouping
    grouped = values[..., perm].reshape(values.shape[:-1] + (-1, H.size))
    means = grouped.mean(axis=-1)
    flat = np.all(grouped == grouped[..., :1], axis=-1)
    means = np.where(flat, grouped[..., 0], means)
    return np.repeat(means, H.size, axis=-1)[..., inverse]


def conditional_expectation(f: GroupFunction, H: Subgroup) -> GroupFunction:
    """E(f|H)(x) = E_{h in H} f(x + h)."""
    _same_cfg(f.cfg, H.cfg)
    return GroupFunction(f.cfg, coset_average(f.values, H), f.sup_bound)


# ---------------------------------------------------------------- integer vector polynomials

@dataclass(frozen=True)
class IntVecPoly:
    """q(n) = sum_i a_i n^i with integer vector coefficients a_i in Z^D."""

    dimension: int
    coeffs: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        cs = [tuple(int(c) for c in a) for a in self.coeffs]
        for a in cs:
            if len(a) != self.dimension:
                raise ValueError("coefficient vector has wrong length")
        while cs and not any(cs[-1]):
            cs.pop()
        object.__setattr__(self, "coeffs", tuple(cs))

    @classmethod
    def from_scalar(cls, poly: Sequence[int], v: Sequence[int]) -> "IntVecPoly":
        """Scalar polynomial (a_0, ..., a_d) times the vector v."""
        v = tuple(int(c) for c in v)
        return cls(len(v), tuple(tuple(int(a) * c for c in v) for a in poly))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def vanishes_mod(self, p: int) -> bool:
        return all(c % p == 0 for a in self.coeffs for c in a)


def eval_vec_poly(q: IntVecPoly, n: int, cfg: FieldConfig) -> tuple[int, ...]:
    """Horner evaluation of q at n with all arithmetic mod p."""
    if q.dimension != cfg.dimension:
        raise ValueError("polynomial dimension does not match the field")
    p = cfg.prime
    if not q.is_zero() and q.vanishes_mod(p):
        warnings.warn(f"polynomial {q.coeffs} is identically zero mod {p}", RuntimeWarning, stacklevel=2)
    acc = [0] * cfg.dimension
    for a in reversed(q.coeffs):
        acc = [(x * n + c) % p for x, c in zip(acc, a)]
    return tuple(acc)


def vec_poly_table(q: IntVecPoly, cfg: FieldConfig) -> np.ndarray:
    """(p, D) array of q(n) mod p for n = 0..p-1."""
    if q.dimension != cfg.dimension:
        raise ValueError("polynomial dimension does not match the field")
    p = cfg.prime
    if not q.is_zero() and q.vanishes_mod(p):
        warnings.warn(f"polynomial {q.coeffs} is identically zero mod {p}", RuntimeWarning, stacklevel=2)
    n = np.arange(p, dtype=np.int64)
    out = np.zeros((p, cfg.dimension), dtype=np.int64)
    for a in reversed(q.coeffs):
        out = (out * n[:, None] + np.mod(np.asarray(a, dtype=np.int64), p)) % p
    return out


# ---------------------------------------------------------------- random and structured tables

FUNCTION_KINDS = ("unit-phase", "disk", "indicator", "character", "quadratic-phase", "constant")


def character(cfg: FieldConfig, freq: PointLike) -> GroupFunction:
    """x -> e_p(<freq, x>)."""
    u = np.asarray(cfg.normalize(freq), dtype=np.int64)
    return GroupFunction(cfg, ep_array(cfg.prime, cfg.coords @ u))


def quadratic_phase(cfg: FieldConfig, quad, linear: PointLike | None = None) -> GroupFunction:
    """x -> e_p(x^T Q x + <b, x>); quad may be a D x D matrix or a scalar when D = 1."""
    Q = np.asarray(quad, dtype=np.int64)
    if Q.ndim == 0:
        Q = Q * np.eye(cfg.dimension, dtype=np.int64)
    if Q.shape != (cfg.dimension, cfg.dimension):
        raise ValueError("quadratic form has the wrong shape")
    x = cfg.coords
    phase = np.einsum("ni,ij,nj->n", x, Q, x)
    if linear is not None:
        phase = phase + x @ np.asarray(cfg.normalize(linear), dtype=np.int64)
    return GroupFunction(cfg, ep_array(cfg.prime, phase))


def random_one_bounded(cfg: FieldConfig, seed: int, kind: str = "unit-phase", **params) -> GroupFunction:
    """Seeded 1-bounded table.

    kind: unit-phase | disk | indicator (density=rho) | character (frequency=...)
    | quadratic-phase (coeffs=..., linear=...) | constant (value=...).
    """
    rng = np.random.default_rng(seed)
    N = cfg.order
    if kind == "unit-phase":
        return GroupFunction(cfg, np.exp(2j * np.pi * rng.random(N)))
    if kind == "disk":
        r = np.sqrt(rng.random(N))
        return GroupFunction(cfg, r * np.exp(2j * np.pi * rng.random(N)))
    if kind == "indicator":
        rho = float(params.get("density", 0.5))
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"density {rho} outside [0, 1]")
        return GroupFunction(cfg, (rng.random(N) < rho).astype(np.complex128))
    if kind == "character":
        return character(cfg, params["frequency"])
    if kind == "quadratic-phase":
        return quadratic_phase(cfg, params["coeffs"], params.get("linear"))
    if kind == "constant":
        c = complex(params.get("value", 1.0))
        if abs(c) > 1 + 1e-12:
            raise ValueError("constant must have modulus at most 1")
        return GroupFunction(cfg, np.full(N, c))
    raise ValueError(f"unknown function kind {kind!r}; expected one of {FUNCTION_KINDS}")


def indicator_of(cfg: FieldConfig, points: Iterable[PointLike]) -> GroupFunction:
    vals = np.zeros(cfg.order, dtype=np.complex128)
    for x in points:
        vals[cfg.index(x)] = 1.0
    return GroupFunction(cfg, vals)


def product_of(fs: Sequence[GroupFunction]) -> GroupFunction:
    out = fs[0]
    for g in fs[1:]:
        out = out * g
    return out


def log2_ceil(n: int) -> int:
    return max(0, math.ceil(math.log2(n))) if n > 1 else 0
