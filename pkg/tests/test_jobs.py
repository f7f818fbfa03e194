import dataclasses
import json
import os

import pytest

from obstacle.errors import ConfigError
from obstacle.geometry import beta_number
from obstacle import jobs
from obstacle.jobs import EXIT_FAIL, EXIT_OK, EXIT_USAGE, ScenarioConfig, load_scenario, run_scenario, verify_suite
from obstacle.weighted_grid import make_grid, sample, write_field_dump


def _raw(**overrides):
    raw = {
        "name": "phi2",
        "grid": {"ambient_dim": 2, "spacing": 1 / 64},
        "boundary": {"profile": "Phi", "m": 2},
        "mode": "sample",
    }
    raw.update(overrides)
    return raw


class TestConfig:
    def test_defaults(self):
        config = ScenarioConfig.from_dict(_raw())
        assert config.grid == make_grid(2, 1.0, 1 / 64, 0.0)
        assert config.boundary["profile"].direction == (1.0,)
        assert config.tolerances["frequency"] == pytest.approx(0.03)
        assert config.write_dump

    def test_lambda_selects_profile(self):
        config = ScenarioConfig.from_dict(_raw(boundary={"lambda": 1.5}))
        profile = config.boundary["profile"]
        assert (profile.family, profile.m) == ("Psi", 1)

    def test_angle(self):
        config = ScenarioConfig.from_dict(_raw(
            grid={"ambient_dim": 3, "spacing": 0.25},
            boundary={"profile": "Psi", "m": 1, "angle_deg": 90.0},
        ))
        assert config.boundary["profile"].direction == pytest.approx((0.0, 1.0))

    @pytest.mark.parametrize("overrides", [
        {"grid": None},
        {"grid": {"ambient_dim": 2}},
        {"grid": {"ambient_dim": 2, "spacing": 0.3}},
        {"mode": "guess"},
        {"boundary": {"lambda": 1.75}},
        {"boundary": {"profile": "Phi"}},
        {"boundary": {"profile": "Zeta", "m": 2}},
        {"boundary": {"profile": "Psi", "m": 1, "direction": [1.0], "angle_deg": 10.0}},
        {"boundary": {"dump": "missing.tfb"}},
        {"solver": {"relaxation_factor": 2.5}},
        {"tolerances": {"frequency": -1.0}},
        {"tolerances": {"contact": "tiny"}},
        {"analyses": {"type": "frequency"}},
        {"analyses": [{"type": "fourier"}]},
        {"analyses": [{"type": "frequency"}]},
        {"analyses": [{"type": "blowup", "radii": []}]},
        {"analyses": [{"type": "identities"}]},
        {"analyses": [{"type": "frequency", "radii": [0.2], "tolerance": 0}]},
    ])
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict(_raw(**overrides))

    def test_restricted(self):
        config = ScenarioConfig.from_dict(_raw(analyses=[
            {"type": "frequency", "radii": [0.2]},
            {"type": "geometry"},
        ]))
        assert [a["type"] for a in config.restricted(("geometry",)).analyses] == ["geometry"]
        assert config.restricted(()).analyses == ()

    def test_load_scenario(self, tmp_path):
        path = tmp_path / "phi2.json"
        path.write_text(json.dumps(_raw(output="out")))
        config = load_scenario(str(path))
        assert config.output == os.path.join(str(tmp_path), "out")

    def test_bundled_scenario(self):
        root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        config = load_scenario(os.path.join(root, "scenarios", "psi1_n1.json"))
        assert config.boundary["profile"].lam == pytest.approx(1.5)
        assert [a["type"] for a in config.analyses] == ["frequency", "identities", "blowup", "geometry"]

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(str(tmp_path / "absent.json"))
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_scenario(str(bad))


class TestRunScenario:
    def test_sample_phi2(self, tmp_path):
        config = ScenarioConfig.from_dict(_raw(analyses=[
            {"type": "frequency", "radii": [0.2, 0.4], "expected_lambda": 2.0, "tolerance": 0.05},
            {"type": "geometry", "expected_stratum": "singular"},
        ]))
        summary = run_scenario(config, str(tmp_path))
        assert summary["exit_code"] == EXIT_OK, summary["checks"]
        names = [c["name"] for c in summary["checks"]]
        assert "frequency[0][0].lambda" in names
        assert "geometry[1].stratum" in names
        files = sorted(os.listdir(tmp_path))
        assert "frequency_0_0.csv" in files
        assert "thin_sets.json" in files
        with open(tmp_path / "summary.json", encoding="utf-8") as fh:
            assert json.load(fh)["config"]["tolerances"]["contact_used"] > 0

    def test_solve_phi2(self, tmp_path):
        config = ScenarioConfig.from_dict(_raw(
            grid={"ambient_dim": 2, "spacing": 1 / 16},
            mode="solve",
            solver={"init": "harmonic", "relaxation_factor": 1.8},
        ))
        summary = run_scenario(config, str(tmp_path))
        assert summary["exit_code"] == EXIT_OK, summary["checks"]
        assert summary["solve"]["converged"]
        assert {"energy.csv", "field.tfb", "summary.json"} <= set(os.listdir(tmp_path))

    def test_dump_on_other_grid(self, tmp_path):
        dump = str(tmp_path / "u.tfb")
        write_field_dump(sample(make_grid(2, 1.0, 0.5, 0.0), lambda p: p[..., 0] ** 2), dump)
        config = ScenarioConfig.from_dict(_raw(boundary={"dump": dump}))
        summary = run_scenario(config, str(tmp_path / "out"))
        assert summary["exit_code"] == EXIT_USAGE
        assert os.path.isfile(tmp_path / "out" / "summary.json")

    def test_failing_expectation(self, tmp_path):
        config = ScenarioConfig.from_dict(_raw(analyses=[
            {"type": "frequency", "radii": [0.2, 0.4], "expected_lambda": 3.0},
        ]))
        summary = run_scenario(config, str(tmp_path))
        assert summary["exit_code"] == EXIT_FAIL
        assert not summary["passed"]

    def test_analysis_error_is_a_failed_check(self, tmp_path):
        config = ScenarioConfig.from_dict(_raw(analyses=[{"type": "frequency", "radii": [2.0]}]))
        summary = run_scenario(config, str(tmp_path))
        assert summary["exit_code"] == EXIT_FAIL
        assert summary["checks"][-1]["name"] == "frequency[0]"


class TestVerifySuite:
    def test_unknown_level(self):
        with pytest.raises(ConfigError):
            verify_suite("medium")

    def test_unknown_criterion(self):
        with pytest.raises(ConfigError):
            verify_suite("fast", only=["telepathy"])

    def test_beta_criterion(self):
        summary = verify_suite("fast", only=["beta_numbers"])
        assert summary["exit_code"] == EXIT_OK
        assert [c["name"] for c in summary["criteria"]] == ["beta_numbers"]

    def test_mutated_beta_is_caught(self):
        def skewed(mu, x0, r, k):
            stats = beta_number(mu, x0, r, k)
            return dataclasses.replace(stats, beta=1.01 * stats.beta)

        summary = verify_suite("fast", beta_fn=skewed, only=["beta_numbers"])
        assert summary["exit_code"] == EXIT_FAIL
        failed = [c["name"] for c in summary["criteria"][0]["checks"] if not c["passed"]]
        assert "beta.three_points" in failed

    def test_special_functions_criterion(self):
        summary = verify_suite("fast", only=["special_functions"])
        assert summary["passed"]
        checks = {c["name"]: c for c in summary["criteria"][0]["checks"]}
        assert checks["special.polar_ode"]["threshold"] == 1e-9
        assert checks["special.polar_ode_fd"]["threshold"] == 1e-5

    def test_solved_3d_criteria(self):
        summary = verify_suite("fast", only=["blowup", "jones"])
        checks = {c["name"]: c for crit in summary["criteria"] for c in crit["checks"]}
        assert summary["passed"], checks
        decreasing = checks["blowup.residual_decreasing"]
        assert decreasing["value"] < decreasing["threshold"]
        assert checks["blowup.direction"]["value"] <= 5.0
        decay = checks["jones.solved_decay"]
        assert [row["r"] for row in decay["per_scale"]] == [0.4, 0.2, 0.1]
        assert decay["value"] == [row["excess"] for row in decay["per_scale"]]

    def test_minkowski_on_extracted_sets(self, monkeypatch):
        monkeypatch.setitem(jobs.LEVELS, "fast", 1 / 64)
        summary = verify_suite("fast", only=["minkowski"])
        check = summary["criteria"][0]["checks"][0]
        assert summary["passed"], check
        assert len(check["ratios"]) == 3

    def test_strata_compares_every_nodal_set(self, monkeypatch):
        monkeypatch.setitem(jobs.LEVELS, "fast", 1 / 32)
        summary = verify_suite("fast", only=["strata"])
        checks = {c["name"]: c for c in summary["criteria"][0]["checks"]}
        sets = {name: c for name, c in checks.items() if name.endswith(".sets")}
        assert len(sets) == 18
        assert all(c["passed"] for c in sets.values()), sets
        for s in (0.3, 0.5, 0.75):
            assert checks[f"strata.Pi2.s{s}.sets"]["value"] <= 1 / 32
