import json
import os

import pytest
import yaml

from src.core.config import ExperimentConfig, effective_scale
from src.core.exceptions import ConfigError, ScenarioError
from src.core.experiment import (
    EPISODES_FILE,
    MANIFEST_FILE,
    cmd_ablate,
    cmd_report,
    cmd_run,
    cmd_sweep,
    cmd_validate,
    read_episodes
)
from src.modules.policy_mod.coefficients import PolicyCoefficients
from tests.conftest import ROOT, WORLD_CONFIG, scenario_path
from tools.cli import EXIT_OK, EXIT_USAGE, main

pytestmark = pytest.mark.harness

DEFAULT_CONFIG = os.path.join(ROOT, "universe", "config.yaml")


def _config(out_dir, scenarios=("readbook",), **overrides) -> ExperimentConfig:
    base = ExperimentConfig.from_yaml(DEFAULT_CONFIG)
    return base.with_overrides(
        world_config=WORLD_CONFIG,
        output_dir=str(out_dir),
        scenarios=list(scenarios),
        repetitions=1,
        seeds=[0],
        **overrides
    )


@pytest.fixture
def config_file(tmp_path):
    """The default experiment YAML pointed at the household world by absolute path."""
    path = tmp_path / "experiment.yaml"
    path.write_text(yaml.safe_dump(_config(tmp_path / "unused").to_dict()))
    return str(path)


def _summary(results):
    return [(r.episode_id, r.status, r.steps, r.executed_actions) for r in results]


# -- configuration -------------------------------------------------------------

def test_default_config_loads():
    config = ExperimentConfig.from_yaml(DEFAULT_CONFIG)
    assert config.seed_list() == [7, 11, 13]
    assert config.l4_mode == "auto-abort"
    assert config.policy() == config.coefficients
    assert len(config.config_hash()) == 64


def test_config_round_trips_through_dict():
    config = _config("/tmp/out")
    again = ExperimentConfig.from_dict(config.to_dict())
    assert again.to_dict() == config.to_dict()
    assert again.config_hash() == config.config_hash()


@pytest.mark.parametrize("data", [
    {"experiment": {"repetitions": 0}},
    {"experiment": {"repetitions": 2, "seeds": [1]}},
    {"experiment": {"variants": ["full", "no_memory"]}},
    {"experiment": {"epsilon_scales": [1.0, -0.5]}},
    {"experiment": {"jobs": 0}},
    {"thresholds": {"epsilon": 0.8, "epsilon_max": 0.5}},
    {"budgets": {"replans": -1}},
    {"correction": {"l4_mode": "panic"}},
    {"retrieval": {"semantic_weight": 0.7, "structural_weight": 0.7}},
    {"environment": {"failure_probability": 1.5}},
    {"policy": {"temperature": 0}},
    {"experiment": {"repetitions": "many"}},
])
def test_invalid_config(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_yaml(str(tmp_path / "missing.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: [unclosed")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_yaml(str(bad))


def test_zero_scale_is_clamped():
    assert effective_scale(0.0) == pytest.approx(1e-3)
    assert effective_scale(0.5) == 0.5
    with pytest.raises(ConfigError):
        effective_scale(-1.0)


# -- commands ------------------------------------------------------------------

def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    assert cmd_run(_config(out)) == 0
    for name in ("metrics.json", "metrics.txt", "metrics.csv", "regimes.csv", EPISODES_FILE, MANIFEST_FILE):
        assert (out / name).exists(), name
    assert (out / "logs" / "readbook__r0.jsonl").exists()
    with open(out / MANIFEST_FILE, encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["seeds"] == [0]
    assert manifest["command"] == "run"
    assert manifest["variant"] == "full"
    assert "numpy" in manifest["versions"]
    assert "soft_precision*" in capsys.readouterr().out


def test_run_reports_unsuccessful_episodes(tmp_path):
    assert cmd_run(_config(tmp_path / "run", scenarios=["setuptable"])) == 1
    [result] = read_episodes(str(tmp_path / "run" / EPISODES_FILE))
    assert result.status == "Escalated"


def test_runs_with_same_seeds_agree(tmp_path):
    cmd_run(_config(tmp_path / "a", scenarios=["readbook", "putfridge"]))
    cmd_run(_config(tmp_path / "b", scenarios=["readbook", "putfridge"], jobs=2))
    first = read_episodes(str(tmp_path / "a" / EPISODES_FILE))
    second = read_episodes(str(tmp_path / "b" / EPISODES_FILE))
    assert _summary(first) == _summary(second)


def test_missing_scenario_leaves_no_output(tmp_path):
    out = tmp_path / "run"
    with pytest.raises(ScenarioError):
        cmd_run(_config(out, scenarios=["nosuchtask"]))
    assert not out.exists()


def test_ablation_compares_variants_on_shared_seeds(tmp_path, capsys):
    out = tmp_path / "ablate"
    assert cmd_ablate(_config(out, variants=["full", "no_risk"])) == 0
    with open(out / "ablation.json", encoding="utf-8") as f:
        summary = json.load(f)
    assert sorted(summary["variants"]) == ["full", "no_risk"]
    assert summary["seeds"] == [0]
    assert (out / "full" / EPISODES_FILE).exists()
    assert (out / "no_risk" / EPISODES_FILE).exists()
    assert capsys.readouterr().out.startswith("variant")


def test_greedy_ablation_separates_risk_and_semantic_terms(tmp_path):
    out = tmp_path / "ablate"
    config = _config(out, scenarios=["putdishwasher", "stowremote"], variants=["full", "no_risk", "no_llm"],
                     coefficients=PolicyCoefficients(temperature=1e-9))
    assert cmd_ablate(config) == 0
    with open(out / "ablation.json", encoding="utf-8") as f:
        rows = json.load(f)["variants"]
    assert rows["full"]["mean_recovery"] == pytest.approx(0.5)
    for variant in ("no_risk", "no_llm"):
        assert rows["full"]["tsr"] >= rows[variant]["tsr"]
        assert rows[variant]["mean_recovery"] == pytest.approx(1.0)
        assert rows["full"]["mean_recovery"] < rows[variant]["mean_recovery"]


def test_ablation_needs_two_variants(tmp_path):
    with pytest.raises(ConfigError):
        cmd_ablate(_config(tmp_path, variants=["full"]))


def test_sweep_clamps_zero_scale(tmp_path):
    out = tmp_path / "sweep"
    cmd_sweep(_config(out, epsilon_scales=[0.0, 1.0]))
    with open(out / "sweep.json", encoding="utf-8") as f:
        rows = json.load(f)["rows"]
    assert [row["scale"] for row in rows] == [0.0, 1.0]
    assert rows[0]["applied_scale"] == pytest.approx(1e-3)
    assert rows[1]["tsr"] == 1.0
    assert (out / "sweep.csv").exists()
    assert (out / "scale_0" / EPISODES_FILE).exists()


def test_sweep_needs_two_scales(tmp_path):
    with pytest.raises(ConfigError):
        cmd_sweep(_config(tmp_path, epsilon_scales=[1.0]))


def test_report_recomputes_the_same_metrics(tmp_path):
    config = _config(tmp_path / "run", scenarios=["readbook", "setuptable"])
    cmd_run(config)
    assert cmd_report(str(tmp_path / "run"), str(tmp_path / "again"), config) == 1
    with open(tmp_path / "run" / "metrics.json", encoding="utf-8") as f:
        original = json.load(f)
    with open(tmp_path / "again" / "metrics.json", encoding="utf-8") as f:
        recomputed = json.load(f)
    assert recomputed == original


def test_report_without_episodes(tmp_path):
    with pytest.raises(ConfigError):
        cmd_report(str(tmp_path))


def test_validate_prints_each_scenario(tmp_path, capsys):
    assert cmd_validate(_config(tmp_path, scenarios=["readbook", scenario_path("preparefood")])) == 0
    assert capsys.readouterr().out.splitlines() == ["readbook: ok", "preparefood: ok"]


# -- command line --------------------------------------------------------------

def test_cli_help_and_usage_errors(capsys):
    assert main(["--help"]) == EXIT_OK
    assert main([]) == EXIT_USAGE
    assert main(["fly"]) == EXIT_USAGE


def test_cli_run(config_file, tmp_path):
    out = tmp_path / "cli"
    assert main(["run", "--config", config_file, "--scenario", "putfridge", "--seed", "5", "--out", str(out)]) == 0
    [result] = read_episodes(str(out / EPISODES_FILE))
    assert result.seed == 5
    assert result.succeeded


def test_cli_missing_scenario_exits_with_usage_error(config_file, tmp_path):
    out = tmp_path / "cli"
    assert main(["run", "--config", config_file, "--scenario", "nosuchtask", "--out", str(out)]) == EXIT_USAGE
    assert not out.exists()


def test_cli_unknown_variant(config_file, tmp_path):
    argv = ["run", "--config", config_file, "--variant", "no_memory", "--out", str(tmp_path / "cli")]
    assert main(argv) == EXIT_USAGE


def test_cli_validate(config_file, capsys):
    assert main(["validate", "--config", config_file, "--scenario", "setuptable"]) == EXIT_OK
    assert "setuptable: ok" in capsys.readouterr().out
