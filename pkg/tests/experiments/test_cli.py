import json
import logging

import pandas as pd
import pytest

from aloha_connectivity import cli, experiments
from aloha_connectivity.experiments import ExperimentKind

LOGGER = logging.getLogger(__name__)

DEGREES = """\
[experiment]
kind = degrees
replications = 3
seed = 1

[network]
lambda = 1
p = 0.2
beta = 1.2
eta = 1
window_half = 6
"""


def test_formulas_prints_json(capsys):
    assert cli.main(["formulas", "--lambda", "1", "--p", "0.125", "--beta", "2"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["eta"] == "inf"
    assert payload["expected_nn_time"] == pytest.approx(16.0)
    assert payload["aloha_cutoff"] == pytest.approx(0.25)


def test_formulas_rejects_out_of_range_values():
    assert cli.main(["formulas", "--lambda", "1", "--p", "1.5", "--beta", "2"]) == cli.EXIT_CONFIG
    assert cli.main(["formulas", "--lambda", "0", "--p", "0.5", "--beta", "2"]) == cli.EXIT_CONFIG


def test_formulas_rejects_non_numbers():
    with pytest.raises(SystemExit) as err:
        cli.main(["formulas", "--lambda", "one", "--p", "0.5", "--beta", "2"])
    assert err.value.code == 2


def test_run_writes_artifacts(experiment, capsys):
    path = experiment.write(DEGREES)
    assert experiment.run(path) == 0
    assert "mean_out_degree" in capsys.readouterr().out
    for suffix in ("raw.csv", "summary.csv", "histogram.csv", "manifest.json"):
        assert experiment.artifact(f"degrees_{suffix}").exists(), suffix
    assert len(pd.read_csv(experiment.artifact("degrees_raw.csv"))) == 3


def test_seed_override_lands_in_manifest(experiment):
    path = experiment.write(DEGREES)
    assert experiment.run(path, "--seed", "9") == 0
    manifest = json.loads(experiment.artifact("degrees_manifest.json").read_text())
    assert manifest["seed"] == 9
    assert manifest["network"]["seed"] == 9


def test_config_errors_exit_with_two(experiment, caplog):
    path = experiment.write(DEGREES.replace("p = 0.2", "p = 2"))
    with caplog.at_level(logging.ERROR):
        assert experiment.run(path) == cli.EXIT_CONFIG
    assert "line 8: p must lie in (0, 1)" in caplog.text
    assert experiment.run(experiment.directory / "missing.ini") == cli.EXIT_CONFIG
    assert experiment.run(experiment.write(DEGREES), "--jobs", "0") == cli.EXIT_CONFIG
    assert experiment.run(experiment.write(DEGREES), "--seed", "-1") == cli.EXIT_CONFIG


def test_formulas_kind_verifies(experiment, capsys):
    path = experiment.write(DEGREES.replace("degrees", "formulas"))
    assert experiment.run(path, "--verify") == 0
    assert "flow identity" in capsys.readouterr().out
    assert not experiment.artifact("formulas_raw.csv").exists()


def test_failed_checks_exit_with_one(experiment, monkeypatch):
    failing = pd.DataFrame([{"check": "mean out-degree", "sweep_value": "base", "observed": 9.0,
                             "reference": 1.0, "slack": 0.1, "passed": False}])
    monkeypatch.setattr(cli, "verify", lambda spec, summary, fits=None: failing)
    assert experiment.run(experiment.write(DEGREES), "--verify") == cli.EXIT_FAILURE


def test_replication_failure_exits_with_one(experiment, monkeypatch, caplog):
    def broken(spec, config, stream, replication):
        raise ZeroDivisionError("boom")

    monkeypatch.setitem(experiments._TASKS, ExperimentKind.DEGREES, broken)
    with caplog.at_level(logging.ERROR):
        assert experiment.run(experiment.write(DEGREES)) == cli.EXIT_FAILURE
    assert "Replication 0 at sweep value base" in caplog.text
