"""Experiment configuration, JSON reports, theorem-level runners and the CLI."""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from . import __version__
from .cost import CostCapExceeded, cost_cap, set_cost_cap
from .counting import (
    ProgressionConfig,
    counting_operator,
    progression_count,
    progression_instances,
    structured_count,
    tcount_gap,
    tilde_dual,
)
from .field_core import (
    FUNCTION_KINDS,
    FieldConfig,
    GroupFunction,
    indicator_of,
    random_one_bounded,
    subgroup_span,
)
from .norms import TOL, box_norm_power, gowers_norm
from .pet import (
    MultiPoly,
    extract_directions,
    family_from_progression,
    format_poly,
    pet_coefficient_audit,
    pet_run,
)
from .suites import identity_suite, inequality_suite

SCHEMA_VERSION = 1
DEFAULT_PRIMES = (3, 5, 7)
RANDOM_KINDS = ("unit-phase", "disk", "indicator")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- configuration schema

_INT_VECTOR = {"type": "array", "items": {"type": "integer"}, "minItems": 1}

_RECIPE = {
    "type": "object",
    "properties": {
        "kind": {"enum": [*FUNCTION_KINDS, "per-function"]},
        "seed": {"type": "integer", "minimum": 0},
        "density": {"type": "number", "minimum": 0, "maximum": 1},
        "frequency": {"oneOf": [{"type": "integer"}, _INT_VECTOR]},
        "coeffs": {"type": "array", "items": _INT_VECTOR},
        "linear": _INT_VECTOR,
        "value": {"type": "number"},
        "functions": {"type": "array", "items": {"$ref": "#/$defs/recipe"}, "minItems": 1},
    },
    "required": ["kind"],
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"enum": list(RANDOM_KINDS)}}},
         "then": {"required": ["seed"]}},
        {"if": {"properties": {"kind": {"const": "character"}}}, "then": {"required": ["frequency"]}},
        {"if": {"properties": {"kind": {"const": "quadratic-phase"}}}, "then": {"required": ["coeffs"]}},
        {"if": {"properties": {"kind": {"const": "per-function"}}}, "then": {"required": ["functions"]}},
    ],
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"recipe": _RECIPE},
    "type": "object",
    "properties": {
        "progression": {
            "type": "object",
            "properties": {
                "primes": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                "dimension": {"type": "integer", "minimum": 1, "maximum": 6},
                "vectors": {"type": "array", "items": _INT_VECTOR, "minItems": 1},
                "polys": {"type": "array", "items": _INT_VECTOR, "minItems": 1},
                "eta": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
            "required": ["dimension", "vectors", "polys"],
            "additionalProperties": False,
        },
        "functions": {"type": "array", "items": {"$ref": "#/$defs/recipe"}},
        "experiment": {
            "type": "object",
            "properties": {
                "name": {"type": "string"},
                "trials": {"type": "integer", "minimum": 1},
                "cost_cap": {"type": "number", "exclusiveMinimum": 0},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "densities": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                "samples": {"type": "integer", "minimum": 1},
                "exhaustive": {"type": "boolean"},
                "m": {"type": "integer", "minimum": 0},
                "max_degree": {"type": "integer", "minimum": 1, "maximum": 6},
            },
            "additionalProperties": False,
        },
        "norm": {
            "type": "object",
            "properties": {
                "prime": {"type": "integer", "minimum": 2},
                "dimension": {"type": "integer", "minimum": 1},
                "function": {"$ref": "#/$defs/recipe"},
                "directions": {"type": "array", "items": {"oneOf": [
                    _INT_VECTOR, {"type": "array", "items": _INT_VECTOR, "minItems": 1}]}, "minItems": 1},
            },
            "required": ["prime", "dimension", "function", "directions"],
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_VALIDATOR = jsonschema.Draft202012Validator(CONFIG_SCHEMA)


def _error_path(err: jsonschema.ValidationError) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)


def validate_config(raw: dict) -> None:
    err = jsonschema.exceptions.best_match(_VALIDATOR.iter_errors(raw))
    if err is not None:
        raise ConfigError(f"config error at {_error_path(err)}: {err.message}")


@dataclass
class ExperimentConfig:
    progression: dict
    functions: list
    experiment: dict
    norm: dict | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        validate_config(raw)
        raw = copy.deepcopy(raw)
        prog = raw.get("progression", dict(DEFAULT_PROGRESSION))
        prog.setdefault("primes", list(DEFAULT_PRIMES))
        return cls(prog, raw.get("functions", []), raw.get("experiment", {}), raw.get("norm"))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config error at $: top level must be an object")
        return cls.from_dict(raw)

    @property
    def primes(self) -> list[int]:
        return list(self.progression["primes"])

    def with_primes(self, primes: Sequence[int] | None) -> "ExperimentConfig":
        if primes is None:
            return self
        out = copy.deepcopy(self)
        out.progression["primes"] = list(primes)
        return out

    def progression_at(self, p: int) -> ProgressionConfig:
        prog = self.progression
        try:
            return ProgressionConfig(FieldConfig(p, prog["dimension"]), prog["vectors"], prog["polys"],
                                     prog.get("eta"))
        except ValueError as exc:
            raise ConfigError(f"progression at p={p}: {exc}") from exc

    @property
    def trials(self) -> int:
        return int(self.experiment.get("trials", 1))

    @property
    def tolerance(self) -> float:
        return float(self.experiment.get("tolerance", TOL))


DEFAULT_PROGRESSION = {"dimension": 2, "vectors": [[1, 0], [0, 1]], "polys": [[0, 0, 1], [0, 1, 1]]}
PROBE_PROGRESSION = {"dimension": 2, "vectors": [[1, 0], [0, 1], [1, 1]],
                     "polys": [[0, 1], [0, 0, 1], [0, 1, 1]]}


def random_phase_recipes(count: int, seed: int) -> list[dict]:
    return [{"kind": "unit-phase", "seed": seed * 1000 + i} for i in range(count)]


def default_config(suite: str, seed: int) -> ExperimentConfig:
    experiments = {
        "tcount": ({"name": "tcount-decay", "trials": 1}, random_phase_recipes(5, seed), DEFAULT_PROGRESSION),
        "control": ({"name": "control-sanity", "trials": 3}, [], DEFAULT_PROGRESSION),
        "bounds": ({"name": "bounds-search", "samples": 10,
                    "densities": [0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0]}, [], DEFAULT_PROGRESSION),
        "probe": ({"name": "degree-lowering-probe", "trials": 2}, [], PROBE_PROGRESSION),
    }
    exp, funcs, prog = experiments[suite]
    return ExperimentConfig.from_dict({"progression": dict(prog), "functions": funcs, "experiment": exp})


# ---------------------------------------------------------------- function recipes

def _derived_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _point_param(cfg: FieldConfig, value) -> tuple[int, ...]:
    if isinstance(value, int):
        value = [value]
    if len(value) != cfg.dimension:
        raise ConfigError(f"vector {value} does not live in dimension {cfg.dimension}")
    return tuple(value)


def make_function(cfg: FieldConfig, recipe: dict, *keys: int) -> GroupFunction:
    """One table from a recipe; random kinds draw a seed keyed by (seed, *keys)."""
    kind = recipe["kind"]
    params = {}
    if kind == "indicator":
        params["density"] = recipe.get("density", 0.5)
    elif kind == "character":
        params["frequency"] = _point_param(cfg, recipe["frequency"])
    elif kind == "quadratic-phase":
        params["coeffs"] = recipe["coeffs"]
        if "linear" in recipe:
            params["linear"] = _point_param(cfg, recipe["linear"])
    elif kind == "constant":
        params["value"] = recipe.get("value", 1.0)
    seed = _derived_seed(recipe["seed"], *keys) if kind in RANDOM_KINDS else 0
    try:
        return random_one_bounded(cfg, seed, kind, **params)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"function recipe {recipe}: {exc}") from exc


def pattern_from_recipe(pc: ProgressionConfig, recipe: dict, trial: int = 0) -> list[GroupFunction]:
    """l + 1 functions: per-function recipes are used as given, others are drawn per index."""
    cfg = pc.cfg
    if recipe["kind"] == "per-function":
        subs = recipe["functions"]
        if len(subs) != pc.length + 1:
            raise ConfigError(f"per-function recipe needs {pc.length + 1} entries, got {len(subs)}")
        return [make_function(cfg, r, cfg.prime, j, trial) for j, r in enumerate(subs)]
    return [make_function(cfg, recipe, cfg.prime, j, trial) for j in range(pc.length + 1)]


# ---------------------------------------------------------------- reports

@dataclass
class Report:
    experiment: str
    seed: int
    primes: list[int]
    records: list[dict]
    passed: bool
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "seed": self.seed,
            "primes": list(self.primes),
            "passed": bool(self.passed),
            "records": self.records,
            "summary": self.summary,
            "environment": environment(),
        }


def environment() -> dict:
    return {"package_version": __version__, "cost_cap": cost_cap(), "schema_version": SCHEMA_VERSION}


def dumps(report: dict) -> str:
    return json.dumps(_plain(report), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _plain(obj):
    """JSON-safe copy: numpy scalars to Python, complex to [re, im], tuples to lists."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def strip_runtime(obj):
    """Drop every runtime_ms field (the only nondeterministic part of a report)."""
    if isinstance(obj, dict):
        return {k: strip_runtime(v) for k, v in obj.items() if k != "runtime_ms"}
    if isinstance(obj, list):
        return [strip_runtime(v) for v in obj]
    return obj


class _Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ms = round((time.perf_counter() - self.start) * 1000.0, 3)


# ---------------------------------------------------------------- theorem-level runners

def _fit_slope(primes: Sequence[int], values: Sequence[float]) -> float | None:
    pts = [(math.log(p), math.log(v)) for p, v in zip(primes, values) if v > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def run_tcount_decay(config: ExperimentConfig, seed: int = 0) -> Report:
    """max over recipes and trials of |Lambda - structured count| per prime, plus its log-log slope."""
    recipes = config.functions or random_phase_recipes(5, seed)
    if len(config.primes) < 2:
        raise ConfigError("tcount decay needs at least two primes")
    records = []
    for p in config.primes:
        pc = config.progression_at(p)
        if not pc.linearly_independent():
            raise ConfigError("polynomials not linearly independent")
        with _Timer() as t:
            gaps = []
            for r, recipe in enumerate(recipes):
                for trial in range(config.trials):
                    gaps.append(tcount_gap(pc, pattern_from_recipe(pc, recipe, trial)))
        records.append({"prime": p, "max_gap": max(gaps), "mean_gap": float(np.mean(gaps)),
                        "instances": len(gaps), "runtime_ms": t.ms})
    maxima = [r["max_gap"] for r in records]
    slope = _fit_slope(config.primes, maxima)
    all_zero = all(g <= 1e-12 for g in maxima)
    endpoint_ok = maxima[-1] <= maxima[0] + config.tolerance
    monotone = all(b <= a + config.tolerance for a, b in zip(maxima, maxima[1:]))
    passed = all_zero or (endpoint_ok and slope is not None and slope < 0)
    return Report(config.experiment.get("name", "tcount-decay"), seed, config.primes, records, passed,
                  {"slope": slope, "all_zero": all_zero, "endpoint_decrease": endpoint_ok,
                   "monotone": monotone, "recipes": len(recipes), "trials": config.trials})


def _control_instances(pc: ProgressionConfig, seed: int, trials: int):
    """(label, functions) pairs: random inputs, a quadratic phase in the last slot, and f_l = 1."""
    cfg = pc.cfg
    l = pc.length
    for t in range(trials):
        fs = [random_one_bounded(cfg, _derived_seed(seed, cfg.prime, t, j)) for j in range(l + 1)]
        yield f"random-{t}", fs
        quad = np.random.default_rng(_derived_seed(seed, cfg.prime, t, 99)).integers(0, cfg.prime, (cfg.dimension,) * 2)
        yield f"quadratic-{t}", fs[:l] + [random_one_bounded(cfg, 0, "quadratic-phase", coeffs=quad.tolist())]
    yield "constant", [GroupFunction.constant(cfg)] * (l + 1)


def run_control_sanity(config: ExperimentConfig, seed: int = 0) -> Report:
    """Pairs (||f_l||_{U^s(v_l)}, |Lambda|) and the character construction against the Weil bound."""
    records = []
    fit_constants = []
    passed = True
    for p in config.primes:
        pc = config.progression_at(p)
        if not pc.pairwise_independent():
            raise ConfigError("polynomials not pairwise independent")
        s = pet_run(family_from_progression(pc)).s
        l = pc.length
        v_l = pc.vector_of(l)
        cfg = pc.cfg
        with _Timer() as t:
            pairs = []
            for label, fs in _control_instances(pc, seed, config.trials):
                norm = gowers_norm(fs[l], v_l, s)
                lam = abs(counting_operator(pc, fs))
                pairs.append({"label": label, "norm": norm, "abs_lambda": lam})
                if norm <= p ** -0.25:
                    fit_constants.append(max(0.0, (lam - math.sqrt(norm)) * p ** 0.25))
            d_l = max(i for i, a in enumerate(pc.polys[l - 1]) if a)
            orth_worst = 0.0
            orth_ok = True
            weil_applicable = d_l < p
            for u in itertools.product(range(p), repeat=cfg.dimension):
                if sum(a * b for a, b in zip(u, v_l)) % p == 0:
                    continue
                chi = random_one_bounded(cfg, 0, "character", frequency=u)
                fs = [chi.conj()] + [GroupFunction.constant(cfg)] * (l - 1) + [chi]
                lam = abs(counting_operator(pc, fs))
                bound = (d_l - 1) * p ** -0.5
                orth_worst = max(orth_worst, lam - bound)
                if weil_applicable and lam > bound + config.tolerance:
                    orth_ok = False
        passed = passed and orth_ok
        records.append({"prime": p, "s": s, "pairs": pairs, "orthogonal_worst_margin": orth_worst,
                        "orthogonal_ok": orth_ok, "weil_applicable": weil_applicable, "runtime_ms": t.ms})
    best_c = max(fit_constants, default=0.0)
    passed = passed and best_c <= 10.0
    return Report(config.experiment.get("name", "control-sanity"), seed, config.primes, records, passed,
                  {"best_fit_constant": best_c, "small_norm_instances": len(fit_constants)})


def _exhaustive_pattern_free(pc: ProgressionConfig) -> dict:
    """Enumerate all subsets of F_p^D (p^D <= 16) by bitmask."""
    cfg = pc.cfg
    tab = pc.shift_tables[:, 1:, :]  # (l+1, p-1, N)
    masks = set()
    for n in range(tab.shape[1]):
        for x in range(cfg.order):
            masks.add(sum(1 << int(i) for i in set(tab[:, n, x].tolist())))
    subsets = np.arange(1 << cfg.order, dtype=np.int64)
    contains = np.zeros(subsets.shape[0], dtype=bool)
    for m in masks:
        contains |= (subsets & m) == m
    sizes = np.array([bin(int(k)).count("1") for k in subsets])
    free = ~contains
    return {"pattern_free_sets": int(free.sum()), "largest_pattern_free": int(sizes[free].max()),
            "subsets": int(subsets.shape[0])}


def run_bounds_search(config: ExperimentConfig, seed: int = 0) -> Report:
    densities = sorted(config.experiment.get("densities", [0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0]))
    samples = int(config.experiment.get("samples", 10))
    exhaustive = bool(config.experiment.get("exhaustive", False))
    records = []
    passed = True
    for p in config.primes:
        pc = config.progression_at(p)
        cfg = pc.cfg
        if exhaustive and cfg.order > 16:
            raise ConfigError(f"exhaustive mode needs p^D <= 16, got {cfg.order}")
        with _Timer() as t:
            rows = []
            for k, rho in enumerate(densities):
                hits = 0
                for r in range(samples):
                    S = random_one_bounded(cfg, _derived_seed(seed, p, k, r), "indicator", density=rho)
                    hits += progression_count(S, pc) > 0
                rows.append({"density": rho, "containing": hits, "samples": samples})
            threshold = None
            for row in reversed(rows):
                if row["containing"] < row["samples"]:
                    break
                threshold = row["density"]
            full = progression_count(GroupFunction.constant(cfg), pc)
            full_ok = full == cfg.order * (p - 1)
            passed = passed and full_ok
            rec = {"prime": p, "densities": rows, "threshold_density": threshold,
                   "full_set_count": full, "full_set_ok": full_ok}
            if exhaustive:
                rec["exhaustive"] = _exhaustive_pattern_free(pc)
        rec["runtime_ms"] = t.ms
        records.append(rec)
    return Report(config.experiment.get("name", "bounds-search"), seed, config.primes, records, passed,
                  {"samples": samples})


def run_degree_lowering_probe(config: ExperimentConfig, seed: int = 0) -> Report:
    """Profile of ||tilde f_m||_{U^k(v_m)} for k = 1..max_degree; asserts monotonicity only."""
    max_k = int(config.experiment.get("max_degree", 4))
    records = []
    passed = True
    for p in config.primes:
        pc = config.progression_at(p)
        if not pc.pairwise_independent():
            raise ConfigError("polynomials not pairwise independent")
        m = int(config.experiment.get("m", pc.length))
        if not 1 <= m <= pc.length:
            raise ConfigError(f"m = {m} must name a nonzero term (1..{pc.length})")
        v_m = pc.vector_of(m)
        cfg = pc.cfg
        with _Timer() as t:
            profiles = []
            inputs = [("constant", [GroupFunction.constant(cfg)] * (pc.length + 1))]
            for trial in range(config.trials):
                inputs.append((f"random-{trial}", [random_one_bounded(cfg, _derived_seed(seed, p, trial, j))
                                                   for j in range(pc.length + 1)]))
            for label, fs in inputs:
                tilde = tilde_dual(pc, fs, m)
                profile = [gowers_norm(tilde, v_m, k) for k in range(1, max_k + 1)]
                mono = all(a <= b + config.tolerance for a, b in zip(profile, profile[1:]))
                passed = passed and mono
                profiles.append({"label": label, "profile": profile, "monotone": mono,
                                 "abs_lambda": abs(counting_operator(pc, fs))})
        records.append({"prime": p, "m": m, "profiles": profiles, "runtime_ms": t.ms})
    return Report(config.experiment.get("name", "degree-lowering-probe"), seed, config.primes, records, passed,
                  {"max_degree": max_k})


def _tallies_report(name: str, seed: int, primes: Sequence[int], suite) -> Report:
    records = []
    passed = True
    for p in primes:
        with _Timer() as t:
            tallies = suite(p, seed)
        passed = passed and tallies.passed
        records.append({"prime": p, "checks": tallies.as_dict(), "passed": tallies.passed, "runtime_ms": t.ms})
    totals: dict[str, dict] = {}
    for rec in records:
        for name_, c in rec["checks"].items():
            agg = totals.setdefault(name_, {"instances": 0, "violations": 0, "worst": None})
            agg["instances"] += c["instances"]
            agg["violations"] += c["violations"]
            if c["worst"] is not None:
                agg["worst"] = c["worst"] if agg["worst"] is None else max(agg["worst"], c["worst"])
    return Report(name, seed, list(primes), records, passed, {"checks": totals})


def run_identity_suite(primes: Sequence[int], seed: int = 0) -> Report:
    return _tallies_report("identity", seed, primes, identity_suite)


def run_inequality_suite(primes: Sequence[int], seed: int = 0) -> Report:
    return _tallies_report("inequality", seed, primes, inequality_suite)


SUITES = ("identity", "inequality", "tcount", "control", "bounds", "probe")
THEOREM_BACKED = ("identity", "inequality")
_RUNNERS = {"tcount": run_tcount_decay, "control": run_control_sanity,
            "bounds": run_bounds_search, "probe": run_degree_lowering_probe}


def run_suite(name: str, seed: int, primes: Sequence[int] | None, config: ExperimentConfig | None = None) -> Report:
    if name in THEOREM_BACKED:
        runner = run_identity_suite if name == "identity" else run_inequality_suite
        return runner(list(primes or (config.primes if config else DEFAULT_PRIMES)), seed)
    cfg = config if config is not None else default_config(name, seed)
    return _RUNNERS[name](cfg.with_primes(primes), seed)


# ---------------------------------------------------------------- CLI

def _parse_primes(text: str) -> list[int]:
    try:
        primes = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad prime list {text!r}") from exc
    if not primes:
        raise argparse.ArgumentTypeError("empty prime list")
    return primes


def _parse_vectors(text: str) -> list[list[int]]:
    try:
        return [[int(c) for c in part.split(",")] for part in text.split(";") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad vector list {text!r}; use e.g. '1,0;0,1'") from exc


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="base seed for every random draw")
    parser.add_argument("--primes", type=_parse_primes, default=None, help="comma separated, e.g. 3,5,7")
    parser.add_argument("--cost-cap", type=float, default=None, help="multiply-add cap (overrides ULAB_COST_CAP)")
    parser.add_argument("--json", metavar="PATH", default=None, help="write the JSON report here")
    parser.add_argument("--config", metavar="PATH", default=None, help="JSON experiment config")


def _progression_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dimension", type=int, default=None)
    parser.add_argument("--vectors", type=_parse_vectors, default=None, help="e.g. '1,0;0,1'")
    parser.add_argument("--polys", type=_parse_vectors, default=None,
                        help="coefficient lists a0,a1,...; e.g. '0,0,1;0,1,1'")
    parser.add_argument("--eta", type=lambda t: [int(c) for c in t.split(",")], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyprog", description="Box norms, polynomial progressions and PET.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    norm = sub.add_parser("norm", help="box or Gowers norm of a function")
    _common(norm)
    norm.add_argument("--dimension", type=int, default=1)
    norm.add_argument("--kind", default="unit-phase", choices=FUNCTION_KINDS)
    norm.add_argument("--function-seed", type=int, default=None)
    norm.add_argument("--coeffs", type=_parse_vectors, default=None, help="quadratic-phase matrix rows")
    norm.add_argument("--frequency", type=lambda t: [int(c) for c in t.split(",")], default=None)
    norm.add_argument("--dirs", type=_parse_vectors, default=None, help="directions, e.g. '1;1' for U^2(1)")

    pet = sub.add_parser("pet", help="PET induction")
    pet_sub = pet.add_subparsers(dest="pet_command", required=True)
    derive = pet_sub.add_parser("derive", help="derive the controlling box-norm directions")
    _common(derive)
    _progression_flags(derive)

    count = sub.add_parser("count", help="counting operator, structured count and their gap")
    _common(count)
    _progression_flags(count)

    search = sub.add_parser("search", help="list progressions inside a set")
    _common(search)
    _progression_flags(search)
    search.add_argument("--set", dest="set_path", required=True,
                        help="JSON array of points, or {\"density\": r, \"seed\": s}")
    search.add_argument("--limit", type=int, default=20)

    verify = sub.add_parser("verify", help="run a verification suite")
    verify.add_argument("suite", choices=(*SUITES, "all"))
    _common(verify)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
    prog = dict(cfg.progression)
    for key in ("dimension", "vectors", "polys", "eta"):
        value = getattr(args, key, None)
        if value is not None:
            prog[key] = value
    if args.vectors is not None and args.dimension is None:
        prog["dimension"] = len(args.vectors[0])
    merged = {"progression": prog, "functions": cfg.functions, "experiment": cfg.experiment}
    if cfg.norm is not None:
        merged["norm"] = cfg.norm
    return ExperimentConfig.from_dict(merged).with_primes(args.primes)


def _emit(report: dict, args) -> None:
    if args.json:
        Path(args.json).write_text(dumps(report), encoding="utf-8")


def _cmd_norm(args, out) -> int:
    cfg_file = ExperimentConfig.load(args.config) if args.config else None
    if cfg_file is not None and cfg_file.norm is not None:
        spec = cfg_file.norm
        p, D = spec["prime"], spec["dimension"]
        recipe = spec["function"]
        dirs = spec["directions"]
    else:
        p = (args.primes or [5])[0]
        D = args.dimension
        recipe = {"kind": args.kind}
        if args.kind in RANDOM_KINDS:
            recipe["seed"] = args.function_seed if args.function_seed is not None else args.seed
        if args.coeffs is not None:
            recipe["coeffs"] = args.coeffs
        if args.frequency is not None:
            recipe["frequency"] = args.frequency
        dirs = args.dirs or [[1] + [0] * (D - 1)] * 2
        validate_config({"norm": {"prime": p, "dimension": D, "function": recipe, "directions": dirs}})
    try:
        field_cfg = FieldConfig(p, D)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    f = make_function(field_cfg, recipe, p)
    entries = []
    for d in dirs:
        if d and isinstance(d[0], list):
            entries.append(subgroup_span(field_cfg, d))
        else:
            entries.append(_point_param(field_cfg, d))
    power = box_norm_power(f, entries)
    value = power ** (1.0 / 2 ** len(entries))
    out.write(f"box norm along {len(entries)} direction(s) over F_{p}^{D}: {value:.12f}\n")
    out.write(f"2^s-th power: {power:.12f}\n")
    _emit({"schema_version": SCHEMA_VERSION, "experiment": "norm", "prime": p, "dimension": D,
           "function": recipe, "directions": dirs, "norm": value, "norm_power": power,
           "passed": True, "environment": environment()}, args)
    return EXIT_PASS


def _cmd_pet(args, out) -> int:
    cfg = _config_from_args(args)
    p = cfg.primes[0]
    pc = cfg.progression_at(p)
    names = [f"v{i}" for i in range(1, len(pc.vectors) + 1)]
    formal = family_from_progression(pc, formal=True)
    try:
        result = pet_run(formal)
    except (ValueError, RuntimeError) as exc:
        raise ConfigError(f"PET derivation failed: {exc}") from exc
    audit = pet_coefficient_audit(result, pc, formal=True)
    out.write(f"family: {', '.join(formal.pretty(names))}\n")
    out.write(f"differencing steps m = {list(result.steps)}\n")
    out.write(f"s' = {result.s_prime}, s = {result.s}\n")
    out.write("directions:\n")
    directions = [format_poly(c, names) for c in result.directions]
    for text in directions:
        out.write(f"  {text}\n")
    out.write(f"coefficient audit: {'ok' if audit.ok else 'FAILED'} {audit.by_variable}\n")
    try:
        ctrl = extract_directions(pc)
        ctrl_text = [format_poly_vector(v, names, pc) for v in ctrl.vectors]
        out.write(f"control directions (x{ctrl.multiplicity}) for f_{ctrl.controlled_index}: {', '.join(ctrl_text)}\n")
        ctrl_dict = {"vectors": [list(v) for v in ctrl.vectors], "multiplicity": ctrl.multiplicity,
                     "controlled_index": ctrl.controlled_index}
    except ValueError as exc:
        out.write(f"control directions unavailable: {exc}\n")
        ctrl_dict = None
    _emit({"schema_version": SCHEMA_VERSION, "experiment": "pet-derive", "progression": cfg.progression,
           "steps": list(result.steps), "s": result.s, "s_prime": result.s_prime, "directions": directions,
           "audit": {"ok": audit.ok, "by_variable": audit.by_variable}, "control": ctrl_dict,
           "passed": bool(audit.ok), "environment": environment()}, args)
    return EXIT_PASS if audit.ok else EXIT_FAIL


def format_poly_vector(v, names, pc) -> str:
    """Concrete vector written through the named vectors when it is an integer combination of them."""
    V = np.asarray(pc.vectors, dtype=float).T
    coef, *_ = np.linalg.lstsq(V, np.asarray(v, dtype=float), rcond=None)
    rounded = np.rint(coef).astype(int)
    if np.allclose(V @ rounded, v) and np.linalg.matrix_rank(V) == V.shape[1]:
        return format_poly(MultiPoly.from_dict(len(names), {(0,): rounded.tolist()}), names)
    return "(" + ",".join(str(c) for c in v) + ")"


def _cmd_count(args, out) -> int:
    cfg = _config_from_args(args)
    recipes = cfg.functions or random_phase_recipes(3, args.seed)
    records = []
    for p in cfg.primes:
        pc = cfg.progression_at(p)
        for r, recipe in enumerate(recipes):
            fs = pattern_from_recipe(pc, recipe)
            lam = counting_operator(pc, fs)
            struct = structured_count(pc, fs)
            gap = abs(lam - struct)
            out.write(f"p={p} recipe {r}: Lambda={lam.real:+.9f}{lam.imag:+.9f}i "
                      f"structured={struct.real:+.9f}{struct.imag:+.9f}i gap={gap:.3e}\n")
            records.append({"prime": p, "recipe": r, "lambda": lam, "structured": struct, "gap": gap})
    _emit({"schema_version": SCHEMA_VERSION, "experiment": "count", "records": records, "passed": True,
           "environment": environment()}, args)
    return EXIT_PASS


def _load_set(path: str, cfg: FieldConfig, seed: int) -> GroupFunction:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read set file {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if isinstance(raw, dict):
        schema = {"type": "object", "properties": {"density": {"type": "number", "minimum": 0, "maximum": 1},
                                                   "seed": {"type": "integer", "minimum": 0}},
                  "required": ["density", "seed"], "additionalProperties": False}
        errs = list(jsonschema.Draft202012Validator(schema).iter_errors(raw))
        if errs:
            raise ConfigError(f"set file error at {_error_path(errs[0])}: {errs[0].message}")
        return random_one_bounded(cfg, _derived_seed(raw["seed"], cfg.prime), "indicator", density=raw["density"])
    schema = {"type": "array", "items": {"type": "array", "items": {"type": "integer"},
                                         "minItems": cfg.dimension, "maxItems": cfg.dimension}}
    errs = list(jsonschema.Draft202012Validator(schema).iter_errors(raw))
    if errs:
        raise ConfigError(f"set file error at {_error_path(errs[0])}: {errs[0].message}")
    return indicator_of(cfg, [tuple(x) for x in raw])


def _cmd_search(args, out) -> int:
    cfg = _config_from_args(args)
    records = []
    for p in cfg.primes:
        pc = cfg.progression_at(p)
        S = _load_set(args.set_path, pc.cfg, args.seed)
        total = progression_count(S, pc)
        found = progression_instances(S, pc, args.limit)
        out.write(f"p={p}: |S|={int(S.values.real.sum())} progressions (n != 0): {total}\n")
        for x, n in found:
            out.write(f"  x={x} n={n}\n")
        records.append({"prime": p, "set_size": int(S.values.real.sum()), "count": total,
                        "instances": [{"x": list(x), "n": n} for x, n in found]})
    _emit({"schema_version": SCHEMA_VERSION, "experiment": "search", "records": records, "passed": True,
           "environment": environment()}, args)
    return EXIT_PASS


def _describe(report: Report, out) -> None:
    status = "PASS" if report.passed else "FAIL"
    out.write(f"[{status}] {report.experiment} (primes {','.join(map(str, report.primes))})\n")
    checks = report.summary.get("checks")
    if checks:
        for name, agg in sorted(checks.items()):
            flag = "ok " if agg["violations"] == 0 else "BAD"
            worst = "n/a" if agg["worst"] is None else f"{agg['worst']:.3e}"
            out.write(f"    {flag} {name}: {agg['instances']} instances, "
                      f"{agg['violations']} violations, worst margin {worst}\n")
    else:
        for key, value in sorted(report.summary.items()):
            out.write(f"    {key}: {value}\n")


def _cmd_verify(args, out) -> int:
    config = ExperimentConfig.load(args.config) if args.config else None
    names = SUITES if args.suite == "all" else (args.suite,)
    reports = {}
    for name in names:
        report = run_suite(name, args.seed, args.primes, config if args.suite != "all" else None)
        reports[name] = report
        _describe(report, out)
    if args.suite == "all":
        theorem_ok = all(reports[n].passed for n in THEOREM_BACKED)
        doc = {"schema_version": SCHEMA_VERSION, "experiment": "verify-all", "seed": args.seed,
               "passed": theorem_ok, "suites": {n: r.to_dict() for n, r in reports.items()},
               "environment": environment()}
        code = EXIT_PASS if theorem_ok else EXIT_FAIL
    else:
        doc = reports[args.suite].to_dict()
        code = EXIT_PASS if reports[args.suite].passed else EXIT_FAIL
    _emit(doc, args)
    return code


_COMMANDS = {"norm": _cmd_norm, "pet": _cmd_pet, "count": _cmd_count, "search": _cmd_search,
             "verify": _cmd_verify}


def cli_dispatch(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_PASS
    overridden = False
    try:
        try:
            cost_cap()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if args.cost_cap is not None:
            if args.cost_cap <= 0:
                raise ConfigError("--cost-cap must be positive")
            set_cost_cap(args.cost_cap)
            overridden = True
        elif args.config:
            cap = ExperimentConfig.load(args.config).experiment.get("cost_cap")
            if cap is not None:
                set_cost_cap(cap)
                overridden = True
        return _COMMANDS[args.command](args, out)
    except (ConfigError, CostCapExceeded) as exc:
        err.write(f"polyprog: error: {exc}\n")
        return EXIT_USAGE
    finally:
        if overridden:
            set_cost_cap(None)


def main() -> None:
    sys.exit(cli_dispatch())
