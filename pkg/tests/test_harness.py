import io
import json

import pytest

from polyprog import cost
from polyprog.harness import (
    EXIT_FAIL, EXIT_PASS, EXIT_USAGE, ConfigError, ExperimentConfig, cli_dispatch, default_config, dumps,
    run_bounds_search, run_control_sanity, run_degree_lowering_probe, run_tcount_decay, strip_runtime,
)

GAUSS = {"kind": "per-function", "functions": [{"kind": "character", "frequency": [-1]},
                                               {"kind": "character", "frequency": [1]}]}
GAUSS_PROGRESSION = {"dimension": 1, "vectors": [[1]], "polys": [[0, 0, 1]]}


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli_dispatch(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def write_json(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj), encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------- configuration

def test_config_defaults():
    cfg = ExperimentConfig.from_dict({})
    assert cfg.primes == [3, 5, 7]
    assert cfg.trials == 1
    assert cfg.tolerance == pytest.approx(1e-9)
    pc = cfg.progression_at(5)
    assert pc.vectors == ((1, 0), (0, 1)) and pc.polys == ((0, 0, 1), (0, 1, 1))


@pytest.mark.parametrize("raw,path", [
    ({"functions": [{"kind": "unit-phase"}]}, "$.functions[0]"),
    ({"progression": {"dimension": 0, "vectors": [[1]], "polys": [[0, 1]]}}, "$.progression.dimension"),
    ({"experiment": {"trials": 0}}, "$.experiment.trials"),
    ({"bogus": 1}, "$"),
])
def test_schema_errors_name_the_path(raw, path):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(raw)
    assert path in str(info.value)


def test_progression_errors_become_config_errors():
    cfg = ExperimentConfig.from_dict({"progression": {"dimension": 1, "vectors": [[5]], "polys": [[0, 1]]}})
    with pytest.raises(ConfigError):
        cfg.progression_at(5)


# ---------------------------------------------------------------- experiments

def test_tcount_constant_functions_give_zero_gap():
    cfg = ExperimentConfig.from_dict({"functions": [{"kind": "constant"}], "progression": {
        **GAUSS_PROGRESSION, "primes": [3, 5]}})
    report = run_tcount_decay(cfg)
    assert report.passed and report.summary["all_zero"]


def test_tcount_gauss_recipe_decays_like_root_p():
    cfg = ExperimentConfig.from_dict({"functions": [GAUSS], "progression": {**GAUSS_PROGRESSION, "primes": [5, 13]}})
    report = run_tcount_decay(cfg)
    gaps = [r["max_gap"] for r in report.records]
    assert gaps == pytest.approx([5 ** -0.5, 13 ** -0.5], abs=1e-9)
    assert report.summary["slope"] == pytest.approx(-0.5, abs=1e-9)
    assert report.passed


def test_tcount_needs_independence_and_two_primes():
    dep = ExperimentConfig.from_dict({"progression": {"dimension": 1, "vectors": [[1], [1]],
                                                      "polys": [[0, 1], [0, 2]], "primes": [3, 5]}})
    with pytest.raises(ConfigError):
        run_tcount_decay(dep)
    with pytest.raises(ConfigError):
        run_tcount_decay(default_config("tcount", 0).with_primes([5]))


def test_control_sanity_default():
    report = run_control_sanity(default_config("control", 0).with_primes([3, 5]))
    assert report.passed
    for rec in report.records:
        assert rec["orthogonal_ok"]
        constant = [pair for pair in rec["pairs"] if pair["label"] == "constant"]
        assert constant and constant[0]["norm"] == pytest.approx(1.0)


def test_bounds_search_full_density_always_contains():
    report = run_bounds_search(default_config("bounds", 0).with_primes([3]))
    rec = report.records[0]
    assert rec["full_set_ok"] and rec["full_set_count"] == 9 * 2
    full = [row for row in rec["densities"] if row["density"] == 1.0][0]
    assert full["containing"] == full["samples"]


def test_degree_lowering_probe_profiles_are_monotone():
    report = run_degree_lowering_probe(default_config("probe", 0).with_primes([3]))
    assert report.passed
    for prof in report.records[0]["profiles"]:
        assert all(a <= b + 1e-9 for a, b in zip(prof["profile"], prof["profile"][1:]))
        if prof["label"] == "constant":
            assert prof["profile"] == pytest.approx([1.0] * 4)


# ---------------------------------------------------------------- reports

def test_report_serialization_is_sorted_and_versioned():
    report = run_degree_lowering_probe(default_config("probe", 0).with_primes([3]))
    text = dumps(report.to_dict())
    doc = json.loads(text)
    assert doc["schema_version"] == 1
    assert doc["environment"]["package_version"]
    assert list(doc) == sorted(doc)
    assert "runtime_ms" in text and "runtime_ms" not in json.dumps(strip_runtime(doc))


def test_reports_are_seed_deterministic():
    a = run_bounds_search(default_config("bounds", 4).with_primes([3]), seed=4).to_dict()
    b = run_bounds_search(default_config("bounds", 4).with_primes([3]), seed=4).to_dict()
    assert dumps(strip_runtime(a)) == dumps(strip_runtime(b))


# ---------------------------------------------------------------- CLI

def test_cli_verify_identity_passes(tmp_path):
    path = tmp_path / "identity.json"
    code, out, _ = run(["verify", "identity", "--primes", "3,5", "--json", str(path)])
    assert code == EXIT_PASS
    assert "[PASS]" in out
    assert json.loads(path.read_text())["passed"] is True


def test_cli_malformed_json_is_usage_error(tmp_path):
    bad = write_json(tmp_path, "bad.json", "{not json")
    code, _, err = run(["verify", "tcount", "--config", bad])
    assert code == EXIT_USAGE and "malformed JSON" in err


def test_cli_schema_error_reports_path(tmp_path):
    bad = write_json(tmp_path, "bad.json", {"experiment": {"trials": "three"}})
    code, _, err = run(["verify", "tcount", "--config", bad])
    assert code == EXIT_USAGE and "$.experiment.trials" in err


def test_cli_usage_errors():
    assert run(["frobnicate"])[0] == EXIT_USAGE
    assert run(["verify", "nonsense"])[0] == EXIT_USAGE
    assert run(["verify", "identity", "--primes", "x"])[0] == EXIT_USAGE
    assert run(["verify", "identity", "--cost-cap", "-1"])[0] == EXIT_USAGE
    assert run(["verify", "identity", "--config", "/nonexistent/config.json"])[0] == EXIT_USAGE


def test_cli_cost_cap_exceeded_is_usage_error():
    code, _, err = run(["norm", "--primes", "7", "--dimension", "2", "--dirs", "1,0;0,1;1,1",
                        "--function-seed", "1", "--cost-cap", "100"])
    assert code == EXIT_USAGE and "exceeds cap 100" in err
    assert cost.cost_cap() == cost.DEFAULT_COST_CAP


def test_cost_cap_environment_override(monkeypatch):
    monkeypatch.setenv(cost.ENV_VAR, "12345")
    assert cost.cost_cap() == 12345
    monkeypatch.setenv(cost.ENV_VAR, "not-a-number")
    with pytest.raises(ValueError):
        cost.cost_cap()
    code, _, err = run(["verify", "identity", "--primes", "3"])
    assert code == EXIT_USAGE and cost.ENV_VAR in err


def test_cli_pet_derive_prints_golden_directions(tmp_path):
    path = tmp_path / "pet.json"
    code, out, _ = run(["pet", "derive", "--json", str(path)])
    assert code == EXIT_PASS
    assert "2(h2+h3)*(v2-v1) + 2h1*v2" in out
    assert "control directions (x7) for f_2: v2, (v2-v1)" in out
    doc = json.loads(path.read_text())
    assert doc["s_prime"] == 3 and doc["s"] == 7 and doc["audit"]["ok"]


def test_cli_pet_derive_reports_blowup():
    code, _, err = run(["pet", "derive", "--vectors", "1,0,0;0,1,0;0,0,1", "--polys", "0,1;0,0,1;0,0,0,1"])
    assert code == EXIT_USAGE and "members" in err


def test_cli_norm_quadratic_phase():
    code, out, _ = run(["norm", "--primes", "5", "--kind", "quadratic-phase", "--coeffs", "1", "--dirs", "1;1"])
    assert code == EXIT_PASS
    assert "0.668740304976" in out


def test_cli_count_gauss(tmp_path):
    cfg = write_json(tmp_path, "gauss.json", {"progression": {**GAUSS_PROGRESSION, "primes": [5]},
                                              "functions": [GAUSS]})
    code, out, _ = run(["count", "--config", cfg])
    assert code == EXIT_PASS
    assert f"gap={5 ** -0.5:.3e}" in out


def test_cli_search_explicit_set(tmp_path):
    pts = [[x, 0] for x in range(3)] + [[0, y] for y in range(3)]
    set_path = write_json(tmp_path, "set.json", pts)
    json_path = tmp_path / "search.json"
    code, out, _ = run(["search", "--primes", "3", "--set", set_path, "--json", str(json_path)])
    assert code == EXIT_PASS
    rec = json.loads(json_path.read_text())["records"][0]
    assert rec["set_size"] == 5
    assert rec["count"] >= len(rec["instances"])
    for inst in rec["instances"]:
        x, n = inst["x"], inst["n"]
        pattern = [x, [(x[0] + n * n) % 3, x[1]], [x[0], (x[1] + n * n + n) % 3]]
        assert all(pt in pts for pt in pattern) and n != 0
    bad = write_json(tmp_path, "bad_set.json", [[1, 2, 3]])
    assert run(["search", "--primes", "3", "--set", bad])[0] == EXIT_USAGE


def test_cli_verify_failure_exit_code(monkeypatch):
    from polyprog import harness
    from polyprog.harness import Report

    monkeypatch.setattr(harness, "run_suite", lambda *a, **k: Report("fake", 0, [3], [], False))
    assert run(["verify", "identity"])[0] == EXIT_FAIL
