import json

import pytest

from fedrules.cli import main
from fedrules.datasets import default_cub_spec, generate_cub_like, write_dataset
from fedrules.errors import ConfigError, DataIOError
from fedrules.harness import (
    RunConfig,
    compare_modes,
    config_from_mapping,
    format_config,
    load_config,
    parse_config_text,
    run,
)
from fedrules.metrics import format_metrics_table
from fedrules.rules import format_rule

SMALL = RunConfig(n_points=400, rounds_max=3, epochs=20)


# ------------------------------------------------------------------ config


def test_config_validation_names_the_field():
    with pytest.raises(ConfigError, match="mode"):
        RunConfig(mode="median")
    with pytest.raises(ConfigError, match="clients"):
        RunConfig(clients=0)
    with pytest.raises(ConfigError, match="hetero_clients"):
        RunConfig(dataset="mnist_like", hetero_clients=2)
    with pytest.raises(ConfigError, match="confidence_mix"):
        RunConfig(confidence_mix="sure:1")


def test_config_text_roundtrip(tmp_path):
    cfg = SMALL.replace(mode="fedavg", seed=7)
    path = tmp_path / "run.cfg"
    path.write_text("# comment\n" + format_config(cfg))
    assert load_config(path) == cfg
    assert load_config(path, {"seed": 8}).seed == 8


def test_config_parse_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config_text("rounds_max 3")
    with pytest.raises(ConfigError):
        config_from_mapping({"roundz": "3"})
    with pytest.raises(ConfigError):
        config_from_mapping({"rounds_max": "three"})
    with pytest.raises(DataIOError):
        load_config(tmp_path / "nope.cfg")


# --------------------------------------------------------------------- run


def test_zero_rounds_reports_untrained_model():
    report = run(SMALL.replace(rounds_max=0))
    assert report.rounds == [] and report.final_rules == {}
    assert report.metrics.missing_rules == [0, 1, 2, 3]
    assert report.metrics.rule_uncertainty == 0.0


def test_run_respects_round_budget_and_weights():
    report = run(SMALL.replace(target_accuracy=1.0))
    assert 1 <= len(report.rounds) <= 3
    for gr in report.rounds:
        assert abs(sum(gr.weights.values()) - 1.0) <= 1e-9


def test_noiseless_run_stops_at_target():
    report = run(RunConfig(noise_rate=0.0, seed=4))
    assert len(report.rounds) < 30
    assert report.rounds[-1].validation_model_accuracy >= 0.95


def test_run_is_deterministic_and_parallel_safe():
    a, b = run(SMALL), run(SMALL.replace(workers=4))
    assert a.to_json() == b.to_json().replace('"workers": 4', '"workers": 1')


def test_run_writes_report_files(tmp_path):
    report = run(SMALL.replace(output_dir=str(tmp_path / "out")))
    record = json.loads((tmp_path / "out" / "report.json").read_text())
    assert record["final_rules"]["text"] == [
        format_rule(report.final_rules[c], report.schema) for c in sorted(report.final_rules)
    ]
    assert "duration" not in (tmp_path / "out" / "report.json").read_text()
    assert (tmp_path / "out" / "metrics.txt").read_text().startswith("metric")


def test_run_from_dataset_file(tmp_path):
    spec = default_cub_spec(n_points=300, seed=1)
    path = tmp_path / "d.csv"
    write_dataset(path, spec.schema, generate_cub_like(spec))
    report = run(RunConfig(dataset=str(path), rounds_max=2, epochs=10))
    assert report.schema == spec.schema and report.planted_rules == ()
    with pytest.raises(DataIOError):
        run(RunConfig(dataset=str(tmp_path / "missing.csv")))


def test_mnist_like_run():
    report = run(RunConfig(dataset="mnist_like", n_points=600, rounds_max=2, epochs=20))
    assert report.schema.class_names == ("even", "odd")
    assert 0.0 <= report.metrics.rule_accuracy <= 1.0


def test_hetero_clients_are_recorded():
    report = run(SMALL.replace(hetero_clients=3, rounds_max=1))
    assert len(report.hetero_client_ids) == 3


def test_single_mode_single_seed_comparison_matches_run():
    cmp = compare_modes(SMALL, ["uncertainty"], [0])
    single = run(SMALL)
    assert cmp.table() == format_metrics_table({"uncertainty": single.metrics.to_record()})


# --------------------------------------------------------------------- cli


def test_cli_generate_and_eval_rule(tmp_path, capsys):
    data, rules = tmp_path / "d.csv", tmp_path / "rules.txt"
    assert (
        main(["generate", "--n-points", "200", "--noise-rate", "0", "--out", str(data), "--rules-out", str(rules)]) == 0
    )
    assert main(["eval-rule", "--rules", str(rules), "--data", str(data)]) == 0
    out = capsys.readouterr().out
    assert "mean rule accuracy 1.0000 over 200 points" in out


def test_cli_run_and_compare(tmp_path, capsys):
    assert main(["run", "--n-points", "300", "--rounds-max", "1", "--epochs", "5"]) == 0
    assert "model accuracy" in capsys.readouterr().out
    out = tmp_path / "cmp"
    args = [
        "compare",
        "--n-points",
        "300",
        "--rounds-max",
        "1",
        "--epochs",
        "5",
        "--seeds",
        "0,1",
        "--output-dir",
        str(out),
    ]
    assert main(args) == 0
    assert json.loads((out / "comparison.json").read_text())["seeds"] == [0, 1]


def test_cli_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n_points = 300\nrounds_max = 1\nepochs = 5\n")
    assert main(["run", "--config", str(cfg), "--mode", "fedavg"]) == 0
    assert "fedavg" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--mode", "median"]) == 2
    assert main(["eval-rule", "--rules", str(tmp_path / "r"), "--data", str(tmp_path / "d")]) == 3
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["bogus"])
