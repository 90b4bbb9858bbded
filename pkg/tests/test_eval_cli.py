import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import pytest

from adasiam.errors import ConfigError
from adasiam.eval_cli import (
    average_rows,
    load_experiment,
    main,
    parse_experiment,
    run_table,
    sweep_to_csv,
    sweep_update_rate,
    write_sequence,
)
from adasiam.sequence_io import load_otb_sequence

FIXTURES = Path(__file__).parent / "fixtures"

SMALL = {
    "name": "small",
    "seed": 3,
    "sequences": [{"synthetic": "slow_pan"}],
    "policies": ["none", "periodic:40", "adaptive"],
    "detector": {"mode": "noisy", "target_iou_mean": 0.7, "target_iou_std": 0.05, "false_positive_rate": 0.1},
    "cusum": {"beta_high": 2.0},
    "sweep": {"beta_grid": [[1, 2], ["inf", "inf"]], "periods": [25, 50]},
}


def write_config(tmp_path, doc=SMALL, name="exp.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def outputs(out: Path) -> dict:
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


# -- parsing and errors


@pytest.mark.parametrize(
    "patch",
    [
        {"seed": "seven"},
        {"policies": ["sometimes"]},
        {"sequences": []},
        {"detector": {"mode": "psychic"}},
        {"cusum": {"beta_low": 3.0, "beta_high": 1.0}},
        {"detector": {"mode": "external"}},
        {"unknown_key": 1},
    ],
)
def test_bad_experiments_are_config_errors(tmp_path, patch):
    doc = {**SMALL, **patch}
    with pytest.raises(ConfigError):
        parse_experiment(doc)
    assert main(["run", "--config", write_config(tmp_path, doc), "--out", str(tmp_path / "o")]) == 1


def test_exit_codes(tmp_path, capsys):
    assert main([]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["run", "--config", write_config(tmp_path), "--policy", "sometimes"]) == 1
    assert main(["run", "--config", write_config(tmp_path), "--jobs", "0"]) == 1
    # a missing OTB directory is a data error
    otb = {**SMALL, "sequences": [{"otb": {"frames": "nowhere/img", "groundtruth": "nowhere/gt.txt"}}]}
    assert main(["run", "--config", write_config(tmp_path, otb), "--out", str(tmp_path / "o")]) == 2
    # an external detector that dies is a runtime failure
    dead = {**SMALL, "detector": {"mode": "external", "command": [sys.executable, "-c", "pass"]}, "policies": ["periodic:5"]}
    assert main(["run", "--config", write_config(tmp_path, dead), "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "config error" in err and "data error" in err and "runtime failure" in err


def test_shipped_experiments_load():
    exp = load_experiment("experiment_drift")
    assert exp.template.seed == 7 and exp.template.cusum.beta_high == 2.0
    assert [c.policy for c in exp.configs()] == ["none", "periodic:60", "periodic:30", "adaptive"]
    assert (math.inf, math.inf) in exp.beta_grid
    suite = load_experiment("experiment_suite")
    assert len(suite.configs()) == 9


# -- tables


def test_average_rows_match_recomputation(tmp_path):
    doc = {**SMALL, "sequences": [{"synthetic": "slow_pan"}, {"synthetic": "slow_pan", "seed": 11}]}
    exp = parse_experiment(doc)
    report = run_table(exp.configs())
    assert len(report.rows) == 6
    for avg in report.average:
        sel = [r for r in report.rows if r.policy == avg.policy]
        assert abs(avg.average_overlap - sum(r.average_overlap for r in sel) / 2) <= 1e-12
        assert abs(avg.success_rate - sum(r.success_rate for r in sel) / 2) <= 1e-12
        assert avg.detector_calls == sum(r.detector_calls for r in sel) / 2
    assert average_rows(report.rows) == report.average


def test_parallel_table_matches_serial():
    exp = parse_experiment(SMALL)
    assert run_table(exp.configs(), jobs=2).to_csv() == run_table(exp.configs(), jobs=1).to_csv()


def test_ideal_ground_truth_run_scores_one():
    doc = {**SMALL, "detector": {"mode": "gt"}, "policies": ["periodic:1"]}
    report = run_table(parse_experiment(doc).configs())
    assert report.rows[0].average_overlap == 1.0


# -- sweep


def test_sweep_points():
    exp = parse_experiment(SMALL)
    cfg = replace(exp.template, source=exp.sources[0])
    points = sweep_update_rate(cfg, exp.beta_grid, exp.periods)
    periodic = [p for p in points if p.strategy == "periodic"]
    assert [p.update_rate for p in periodic] == [1 / 25, 1 / 50]
    never = next(p for p in points if p.strategy == "adaptive" and math.isinf(p.beta_high))
    none = run_table([replace(cfg, policy="none")]).rows[0]
    assert never.update_rate == 0.0 and never.average_overlap == none.average_overlap
    text = sweep_to_csv(points)
    assert text.splitlines()[0].startswith("sequence,strategy")
    assert ",inf,inf," in text


# -- CLI outputs


@pytest.mark.parametrize("cmd", ["run", "sweep", "trace"])
def test_cli_is_byte_identical(tmp_path, cmd):
    cfg = write_config(tmp_path)
    runs = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        assert main([cmd, "--config", cfg, "--out", str(out)]) == 0
        runs.append(outputs(out))
    assert runs[0] and runs[0] == runs[1]


def test_cli_outputs(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--out", str(out), "--policy", "adaptive", "--seed", "5"]) == 0
    table = (out / "table.csv").read_text().splitlines()
    assert table[0].split(",")[:3] == ["sequence", "policy", "frames"]
    assert [line.split(",")[1] for line in table[1:]] == ["adaptive", "adaptive"]
    assert main(["trace", "--config", cfg, "--out", str(out), "--policy", "adaptive"]) == 0
    trace = (out / "trace_slow_pan_adaptive.csv").read_text().splitlines()
    assert trace[0] == "frame,iou,quality,g,alarm,detector_called"
    assert len(trace) == 151


def test_synth_round_trip(tmp_path, shipped_sequences):
    assert main(["synth", "--config", "slow_pan", "--seed", "7", "--out", str(tmp_path)]) == 0
    first = outputs(tmp_path / "slow_pan")
    loaded = load_otb_sequence(tmp_path / "slow_pan" / "img", tmp_path / "slow_pan" / "groundtruth_rect.txt")
    seq = shipped_sequences["slow_pan"]
    assert len(loaded) == len(seq)
    for a, b in zip(loaded.ground_truth, seq.ground_truth):
        assert a.as_tuple() == pytest.approx(b.as_tuple(), abs=1e-6)
    for a, b in zip(loaded.frames[:5], seq.frames[:5]):
        assert abs(a.pixels - b.pixels).max() <= 0.5 / 255 + 1e-6
    write_sequence(seq, tmp_path / "again")
    assert outputs(tmp_path / "again") == first


def test_golden_suite_table(tmp_path):
    # regression fixture for the shipped suite at its committed seed
    assert main(["run", "--config", "experiment_suite", "--out", str(tmp_path)]) == 0
    golden = FIXTURES / "suite_table.csv"
    assert (tmp_path / "table.csv").read_bytes() == golden.read_bytes()
