#!/usr/bin/env python3
"""
Tests for the command-line entry point: argument handling and exit codes.
"""

import pandas as pd
import pytest
import yaml

from main import build_parser, load_config, main


@pytest.fixture
def synthetic_dir(tmp_path):
    out = tmp_path / "synthetic"
    code = main(["synth", "--students", "10", "--weeks", "2", "--locations", "5", "--seed", "4", "--out", str(out)])
    assert code == 0
    return out


def test_no_command_is_a_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 1


def test_bad_flag_value_is_a_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        main(["run", "--replicates", "many"])
    assert excinfo.value.code == 1


def test_synth_writes_cohort_and_config(synthetic_dir):
    assert len(list((synthetic_dir / "dining").glob("*.csv"))) == 10
    assert (synthetic_dir / "scores.csv").exists()
    assert (synthetic_dir / "ground_truth.yaml").exists()

    config = yaml.safe_load((synthetic_dir / "pipeline.yaml").read_text())
    assert config["calendar"]["n_weeks"] == 2
    assert config["analysis"]["anchor_week"] == 1
    assert config["output"]["directory"] == str(synthetic_dir / "report")


def test_synth_then_run(synthetic_dir):
    config = str(synthetic_dir / "pipeline.yaml")
    code = main(["run", "-c", config, "--replicates", "3", "--rounds-multiplier", "1"])
    report = synthetic_dir / "report"

    assert code == 0
    manifest = yaml.safe_load((report / "manifest.yaml").read_text())
    assert manifest["null_model"]["replicates"] == 3
    assert manifest["config"]["null_model"]["swap_rounds_multiplier"] == 1
    assert (report / "correlation_table.txt").read_text().strip().endswith("*** P < 0.01")


def test_single_stage_commands(synthetic_dir, tmp_path):
    config = str(synthetic_dir / "pipeline.yaml")
    out = str(tmp_path / "staged")

    assert main(["ingest", "-c", config, "-o", out]) == 0
    assert main(["build", "-c", config, "-o", out, "--cumulative-from", "1", "--weeks", "all"]) == 0
    assert main(["nullmodel", "-c", config, "-o", out, "--replicates", "2", "--multiplier", "1", "--seed", "9"]) == 0
    assert main(["correlate", "-c", config, "-o", out, "--kinds", "dc"]) == 0

    correlations = pd.read_csv(tmp_path / "staged" / "correlations.csv")
    assert set(correlations["kind"]) == {"degree"}


def test_metrics_on_one_graph_file(tmp_path):
    graph = tmp_path / "week_03.edges"
    graph.write_text("a b\nb c\nc a\n")
    out = tmp_path / "out"
    code = main(["metrics", "-c", str(tmp_path / "none.yaml"), "-o", str(out), "--graph", str(graph), "--measures", "dc,bc"])

    assert code == 0
    table = pd.read_csv(out / "centrality" / "week_03.csv")
    assert list(table.columns) == ["node_id", "dc", "bc"]


def test_missing_input_exits_with_data_error(tmp_path):
    code = main(["ingest", "-c", str(tmp_path / "none.yaml"), "-o", str(tmp_path / "out"), "-i", str(tmp_path / "absent")])
    assert code == 2
    assert (tmp_path / "out" / "FAILED").exists()


def test_infeasible_cohort_spec_exits_with_data_error(tmp_path):
    code = main(["synth", "--p-core", "0.01", "--p-peri", "0.5", "-o", str(tmp_path / "bad")])
    assert code == 2


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("cooccurrence:\n  threshold_seconds: 900\nanalysis:\n  anchor_week: 4\n")
    args = build_parser().parse_args(["build", "-c", str(path), "--threshold", "600", "--exclude-weeks", "3,5"])
    config = load_config(args)

    assert config.get_threshold() == 600
    assert config.get_anchor_week() == 4
    assert config.get("calendar.excluded_weeks") == [3, 5]


def test_unrepresentable_timestamp_is_rejected_not_fatal(tmp_path):
    dining = tmp_path / "dining"
    dining.mkdir()
    (dining / "s01.csv").write_text("1357452010,hall\ninf,hall\n1e400,hall\n1357452020,hall\n")
    out = tmp_path / "out"
    code = main(["ingest", "-c", str(tmp_path / "none.yaml"), "-o", str(out), "-i", str(dining)])

    assert code == 0
    manifest = yaml.safe_load((out / "ingest_manifest.yaml").read_text())
    assert manifest["input_lines"] == 4
    assert manifest["accepted"] == 2
    assert manifest["rejected"] == 2
    assert sorted(r["line"] for r in manifest["rejections"]) == [2, 3]


def test_witnesses_flag_takes_an_optional_directory(synthetic_dir, tmp_path):
    config = str(synthetic_dir / "pipeline.yaml")
    assert build_parser().parse_args(["build", "--witnesses"]).witnesses is True
    assert build_parser().parse_args(["build"]).witnesses is None

    out = tmp_path / "out"
    witness_dir = tmp_path / "audit"
    assert main(["ingest", "-c", config, "-o", str(out)]) == 0
    assert main(["build", "-c", config, "-o", str(out), "--witnesses", str(witness_dir)]) == 0
    assert (witness_dir / "week_01_witnesses.csv").exists()
    assert not list((out / "graphs").glob("*_witnesses.csv"))

    assert main(["build", "-c", config, "-o", str(out), "--witnesses"]) == 0
    assert (out / "graphs" / "week_01_witnesses.csv").exists()
