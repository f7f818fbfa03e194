import json

import pytest

import main
from obstacle import handlers
from obstacle.handlers import format_checks, format_runs, handle_ledger, handle_scenario


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "phi2.json"
    path.write_text(json.dumps({
        "name": "phi2",
        "grid": {"ambient_dim": 2, "spacing": 1 / 64},
        "boundary": {"profile": "Phi", "m": 2},
        "mode": "sample",
        "analyses": [
            {"type": "frequency", "radii": [0.2, 0.4], "expected_lambda": 2.0, "tolerance": 0.05},
            {"type": "blowup", "radii": [0.5], "expected_lambda": 2.0},
        ],
    }))
    return str(path)


class TestFormatting:
    def test_checks_table(self):
        text = format_checks([
            {"name": "a", "passed": True, "value": 0.5, "threshold": 1.0},
            {"name": "longer", "passed": False, "value": None, "threshold": None, "error": "boom"},
        ])
        lines = text.splitlines()
        assert "OK" in lines[0] and "ÉCHEC" in lines[1]
        assert lines[1].endswith("(boom)")
        assert format_checks([]) == "  (aucun check)"

    def test_empty_ledger(self):
        assert "Aucun run" in format_runs([])


class TestHandlers:
    def test_missing_config(self):
        assert handle_scenario("solve", None) == 2

    def test_invalid_config(self, tmp_path):
        assert handle_scenario("frequency", str(tmp_path / "absent.json")) == 2

    def test_frequency_command_is_restricted(self, ledger_db, scenario_file, tmp_path, capsys):
        out = str(tmp_path / "out")
        assert handle_scenario("frequency", scenario_file, out) == 0
        printed = capsys.readouterr().out
        assert "frequency[0][0].lambda" in printed
        assert "blowup" not in printed
        runs = ledger_db.get_runs()
        assert len(runs) == 1 and runs[0]["command"] == "frequency"

    def test_ledger_disabled(self, ledger_db, scenario_file, tmp_path, monkeypatch):
        monkeypatch.setattr(handlers, "RUN_LEDGER", False)
        assert handle_scenario("solve", scenario_file, str(tmp_path / "out")) == 0
        assert ledger_db.get_runs() == []

    def test_ledger_listing(self, ledger_db, capsys):
        ledger_db.save_run({"command": "verify", "level": "fast", "exit_code": 0})
        assert handle_ledger(5) == 0
        assert "verify" in capsys.readouterr().out


class TestMain:
    def test_unknown_command(self):
        assert main.main(["bogus"]) == 2

    def test_help(self):
        assert main.main(["--help"]) == 0

    def test_verify_bad_level(self, ledger_db):
        assert main.main(["verify", "--level", "medium"]) == 2
