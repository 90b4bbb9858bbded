"""Experiment harness: overlap tables, update-rate sweeps and per-frame traces.

An experiment file is a JSON document naming one or more sequences and the
policies to run on them; every tracker, CUSUM, correlation and detector-noise
parameter can be set by key. All outputs are CSV (UTF-8, LF line endings)
with fixed float formatting, so reruns with the same config and seed give
byte-identical files.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence as Seq

import jsonschema
import numpy as np
from PIL import Image

from .changedetect import CusumParams
from .detector_sim import DetectorNoiseConfig, KalmanParams
from .embedder import CorrelationConfig
from .errors import ConfigError, DataError
from .sequence_io import Sequence, SyntheticConfig, generate_synthetic, load_otb_sequence
from .tracker import TrackerConfig, TrackRecord, UpdatePolicy, run_sequence

log = logging.getLogger(__name__)

# CLI detector names -> tracker detector modes
DETECTOR_NAMES = {"ideal": "ideal", "noisy": "simulated", "external": "external", "gt": "ground_truth"}

TABLE_HEADER = [
    "sequence",
    "policy",
    "frames",
    "average_overlap",
    "success_rate",
    "detector_calls",
    "gradual_adaptations",
    "abrupt_resets",
    "periodic_updates",
]
SWEEP_HEADER = ["sequence", "strategy", "beta_low", "beta_high", "period", "update_rate", "average_overlap", "detector_calls", "gradual_adaptations"]
TRACE_HEADER = ["frame", "iou", "quality", "g", "alarm", "detector_called"]

_NUM_OR_INF = {"anyOf": [{"type": "number"}, {"enum": ["inf", "Infinity"]}]}


def _obj(props: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props}


EXPERIMENT_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["sequences"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "jobs": {"type": "integer", "minimum": 1},
        "init": {"enum": ["ground_truth", "detector"]},
        "policies": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "sequences": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {
                        "type": "object",
                        "required": ["synthetic"],
                        "additionalProperties": False,
                        "properties": {"synthetic": {"type": ["string", "object"]}, "seed": {"type": "integer", "minimum": 0}},
                    },
                    {
                        "type": "object",
                        "required": ["otb"],
                        "additionalProperties": False,
                        "properties": {
                            "otb": {
                                "type": "object",
                                "required": ["frames", "groundtruth"],
                                "additionalProperties": False,
                                "properties": {
                                    "frames": {"type": "string"},
                                    "groundtruth": {"type": "string"},
                                    "name": {"type": "string"},
                                },
                            }
                        },
                    },
                ]
            },
        },
        "detector": _obj(
            {
                "mode": {"enum": sorted(DETECTOR_NAMES)},
                "target_iou_mean": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "target_iou_std": {"type": "number", "minimum": 0},
                "miss_rate": {"type": "number", "minimum": 0, "maximum": 1},
                "false_positive_rate": {"type": "number", "minimum": 0, "maximum": 1},
                "min_visibility": {"type": "number", "minimum": 0, "maximum": 1},
                "command": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            }
        ),
        "cusum": _obj(
            {
                "nu": {"type": "number", "minimum": 0},
                "beta_low": _NUM_OR_INF,
                "beta_high": _NUM_OR_INF,
                "alpha": {"type": "number"},
                "reset_on_gradual": {"type": "boolean"},
            }
        ),
        "correlation": _obj(
            {
                "bias": {"type": "number"},
                "window_weight": {"type": "number", "minimum": 0, "maximum": 1},
                "normalize": {"type": "boolean"},
            }
        ),
        "tracker": _obj(
            {
                "budget": {"type": "integer", "minimum": 1},
                "quality_weighted": {"type": "boolean"},
                "context_margin": {"type": "number", "minimum": 0},
                "template_size": {"type": "integer", "minimum": 8},
                "stride": {"type": "integer", "minimum": 1},
                "gradient_gain": {"type": "number", "minimum": 0},
                "assoc_min_iou": {"type": "number", "minimum": 0, "maximum": 1},
                "min_confidence": {"type": "number", "minimum": 0, "maximum": 1},
                "retry_interval": {"type": "integer", "minimum": 0},
            }
        ),
        "kalman": _obj(
            {
                "process_scale": {"type": "number", "minimum": 0},
                "measurement_noise": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 4, "maxItems": 4},
                "initial_velocity_var": {"type": "number", "minimum": 0},
                "initial_var": {"type": "number", "minimum": 0},
            }
        ),
        "sweep": _obj(
            {
                "beta_grid": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "items": _NUM_OR_INF, "minItems": 2, "maxItems": 2},
                },
                "periods": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
            }
        ),
    },
}


def _num(v) -> float:
    return math.inf if isinstance(v, str) else float(v)


@dataclass(frozen=True)
class SequenceSource:
    """Where a sequence comes from: a synthetic config (inline or file) or an OTB directory."""

    synthetic: Optional[dict] = None
    otb: Optional[dict] = None
    seed: Optional[int] = None
    base_dir: str = "."

    @property
    def label(self) -> str:
        if self.synthetic is not None:
            return self.synthetic.get("name", "synthetic")
        return self.otb.get("name") or Path(self.otb["frames"]).parent.name

    def load(self, seed: int) -> Sequence:
        if self.synthetic is not None:
            return generate_synthetic(SyntheticConfig.from_dict(self.synthetic), self.seed if self.seed is not None else seed)
        base = Path(self.base_dir)
        return load_otb_sequence(base / self.otb["frames"], base / self.otb["groundtruth"], self.otb.get("name"))


def shipped_sequence_names() -> list[str]:
    root = resources.files("adasiam") / "data"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json") and not p.name.startswith("experiment"))


def shipped_path(name: str):
    return resources.files("adasiam") / "data" / f"{name}.json"


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _resolve_synthetic(ref, base_dir: Path) -> dict:
    if isinstance(ref, dict):
        return ref
    if ref in shipped_sequence_names():
        with shipped_path(ref).open(encoding="utf-8") as fh:
            return json.load(fh)
    return _read_json(base_dir / ref)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sequence under one policy, with everything needed to reproduce the run."""

    source: SequenceSource
    policy: str = "adaptive"
    cusum: CusumParams = CusumParams()
    noise: DetectorNoiseConfig = DetectorNoiseConfig()
    correlation: CorrelationConfig = CorrelationConfig()
    tracker: dict = field(default_factory=dict)
    kalman: KalmanParams = KalmanParams()
    detector: str = "noisy"
    command: Optional[tuple[str, ...]] = None
    init: str = "ground_truth"
    seed: int = 0
    out: Optional[str] = None

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(correlation=self.correlation, cusum=self.cusum, kalman=self.kalman, **self.tracker)

    def update_policy(self) -> UpdatePolicy:
        return UpdatePolicy.parse(self.policy, DETECTOR_NAMES[self.detector])

    def run(self, seq: Optional[Sequence] = None) -> TrackRecord:
        seq = seq if seq is not None else self.source.load(self.seed)
        policy = self.update_policy()
        detector = None
        if self.detector == "external":
            from .detector_sim import ExternalDetector

            if not self.command:
                raise ConfigError("external detector needs detector.command")
            detector = ExternalDetector(list(self.command))
        return run_sequence(seq, policy, self.tracker_config(), self.noise, init=self.init, detector=detector)


@dataclass
class Experiment:
    """A parsed experiment file: sequences x policies plus shared parameters."""

    name: str
    template: ExperimentConfig
    sources: list[SequenceSource]
    policies: list[str]
    jobs: int = 1
    beta_grid: list[tuple[float, float]] = field(default_factory=lambda: [(1.0, 3.0)])
    periods: list[int] = field(default_factory=lambda: [30, 60])

    def configs(self) -> list[ExperimentConfig]:
        return [replace(self.template, source=s, policy=p) for s in self.sources for p in self.policies]


def parse_experiment(doc: dict, base_dir: str | Path = ".") -> Experiment:
    """Validate an experiment document and build its run configurations."""
    try:
        jsonschema.validate(doc, EXPERIMENT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"experiment config: {exc.message} at {list(exc.absolute_path)}") from None
    base_dir = Path(base_dir)
    seed = doc.get("seed", 0)
    det = dict(doc.get("detector", {}))
    mode = det.pop("mode", "noisy")
    command = det.pop("command", None)
    cus = dict(doc.get("cusum", {}))
    for key in ("beta_low", "beta_high"):
        if key in cus:
            cus[key] = _num(cus[key])
    kal = dict(doc.get("kalman", {}))
    if "measurement_noise" in kal:
        kal["measurement_noise"] = tuple(kal["measurement_noise"])
    try:
        template = ExperimentConfig(
            source=SequenceSource(),
            cusum=CusumParams(**cus),
            noise=DetectorNoiseConfig(seed=seed, **det),
            correlation=CorrelationConfig(**doc.get("correlation", {})),
            tracker=dict(doc.get("tracker", {})),
            kalman=KalmanParams(**kal),
            detector=mode,
            command=tuple(command) if command else None,
            init=doc.get("init", "ground_truth"),
            seed=seed,
        )
        template.tracker_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"experiment config: {exc}") from None
    if mode == "external" and not command:
        raise ConfigError("detector.mode 'external' needs detector.command")
    sources = []
    for item in doc["sequences"]:
        if "synthetic" in item:
            sources.append(SequenceSource(synthetic=_resolve_synthetic(item["synthetic"], base_dir), seed=item.get("seed")))
        else:
            sources.append(SequenceSource(otb=item["otb"], base_dir=str(base_dir)))
    policies = doc.get("policies", ["none", "periodic:30", "adaptive"])
    for p in policies:
        UpdatePolicy.parse(p)
    sweep = doc.get("sweep", {})
    grid = [(_num(lo), _num(hi)) for lo, hi in sweep.get("beta_grid", [[1.0, 3.0]])]
    for lo, hi in grid:
        try:
            replace(template.cusum, beta_low=lo, beta_high=hi)
        except ValueError as exc:
            raise ConfigError(f"sweep.beta_grid: {exc}") from None
    return Experiment(doc.get("name", "experiment"), template, sources, policies, doc.get("jobs", 1), grid, sweep.get("periods", [30, 60]))


def load_experiment(path: str | Path) -> Experiment:
    """Read an experiment file, or a shipped one by name (e.g. ``experiment_drift``)."""
    path = Path(path)
    if not path.exists() and str(path) in _shipped_experiments():
        with shipped_path(str(path)).open(encoding="utf-8") as fh:
            return parse_experiment(json.load(fh))
    return parse_experiment(_read_json(path), path.parent)


def _shipped_experiments() -> list[str]:
    root = resources.files("adasiam") / "data"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.startswith("experiment") and p.name.endswith(".json"))


# -- reports -------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    sequence: str
    policy: str
    frames: int
    average_overlap: float
    success_rate: float
    detector_calls: float
    gradual_adaptations: float
    abrupt_resets: float
    periodic_updates: float


@dataclass
class ExperimentReport:
    rows: list[ReportRow]
    average: list[ReportRow]
    records: list[TrackRecord] = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        return _csv([TABLE_HEADER] + [_row_cells(r) for r in self.rows + self.average])

    def to_text(self) -> str:
        """Sequences down, policies across; cells are average overlap in percent and detector calls."""
        policies = list(dict.fromkeys(r.policy for r in self.rows))
        sequences = list(dict.fromkeys(r.sequence for r in self.rows))
        cell = {(r.sequence, r.policy): r for r in self.rows + self.average}
        names = sequences + ["Average"]

        def text(s, p):
            r = cell.get((s, p))
            return "-" if r is None else f"{100 * r.average_overlap:.2f} ({r.detector_calls:.4g})"

        body = {(s, p): text(s, p) for s in names for p in policies}
        width = 2 + max(len(t) for t in list(body.values()) + policies)
        name_w = max(10, *(len(s) for s in names))
        lines = ["sequence".ljust(name_w) + "".join(p.rjust(width) for p in policies)]
        for s in names:
            lines.append(s.ljust(name_w) + "".join(body[s, p].rjust(width) for p in policies))
        lines.append("cells: average overlap % (detector calls)")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _row_cells(r: ReportRow) -> list[str]:
    return [_fmt(getattr(r, f.name)) for f in fields(ReportRow)]


def _csv(rows: Seq[Seq[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerows(rows)
    return buf.getvalue()


def _row(rec: TrackRecord) -> ReportRow:
    s = rec.stats
    return ReportRow(
        rec.name,
        rec.policy,
        len(rec.boxes),
        rec.average_overlap,
        rec.success_rate,
        s.detector_calls,
        s.gradual_adaptations,
        s.abrupt_resets,
        s.periodic_updates,
    )


def average_rows(rows: list[ReportRow]) -> list[ReportRow]:
    """Per-policy arithmetic mean over sequences, each sequence weighted equally."""
    out = []
    for policy in dict.fromkeys(r.policy for r in rows):
        sel = [r for r in rows if r.policy == policy]
        mean = lambda name: math.fsum(getattr(r, name) for r in sel) / len(sel)  # noqa: E731
        out.append(
            ReportRow(
                "Average",
                policy,
                sum(r.frames for r in sel),
                mean("average_overlap"),
                mean("success_rate"),
                mean("detector_calls"),
                mean("gradual_adaptations"),
                mean("abrupt_resets"),
                mean("periodic_updates"),
            )
        )
    return out


def _run_one(cfg: ExperimentConfig) -> TrackRecord:
    return cfg.run()


def _map(fn, items: list, jobs: int) -> list:
    # executor.map keeps input order, so outputs never depend on completion order
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def run_table(configs: list[ExperimentConfig], jobs: int = 1) -> ExperimentReport:
    """One row per sequence x policy, in config order, plus per-policy Average rows."""
    if not configs:
        raise ConfigError("run_table needs at least one config")
    records = _map(_run_one, configs, jobs)
    rows = [_row(r) for r in records]
    return ExperimentReport(rows, average_rows(rows), records)


# -- update-rate sweep -----------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    sequence: str
    strategy: str
    beta_low: float
    beta_high: float
    period: int
    update_rate: float
    average_overlap: float
    detector_calls: int
    gradual_adaptations: int


def _sweep_one(job) -> SweepPoint:
    cfg, seq, kind, value = job
    if kind == "adaptive":
        lo, hi = value
        run = replace(cfg, policy="adaptive", cusum=replace(cfg.cusum, beta_low=lo, beta_high=hi))
        rec = run.run(seq)
        rate = rec.stats.detector_calls / len(seq)
        return SweepPoint(seq.name, "adaptive", lo, hi, 0, rate, rec.average_overlap, rec.stats.detector_calls, rec.stats.gradual_adaptations)
    rec = replace(cfg, policy=f"periodic:{value}").run(seq)
    return SweepPoint(seq.name, "periodic", math.nan, math.nan, value, 1.0 / value, rec.average_overlap, rec.stats.detector_calls, 0)


def sweep_update_rate(
    cfg: ExperimentConfig,
    beta_grid: list[tuple[float, float]],
    baseline_periods: list[int],
    seq: Optional[Sequence] = None,
    jobs: int = 1,
) -> list[SweepPoint]:
    """Accuracy versus update rate for adaptive thresholds and periodic baselines.

    The adaptive rate is detector calls per frame; a periodic point sits at
    exactly ``1/N``.
    """
    if not beta_grid or not baseline_periods:
        raise ConfigError("sweep needs a non-empty beta grid and period list")
    seq = seq if seq is not None else cfg.source.load(cfg.seed)
    jobs_list = [(cfg, seq, "adaptive", b) for b in beta_grid] + [(cfg, seq, "periodic", n) for n in baseline_periods]
    return _map(_sweep_one, jobs_list, jobs)


def sweep_to_csv(points: list[SweepPoint]) -> str:
    def cell(v):
        if isinstance(v, float) and math.isnan(v):
            return ""
        if isinstance(v, float) and math.isinf(v):
            return "inf"
        return _fmt(v)

    rows = [SWEEP_HEADER] + [[cell(getattr(p, f.name)) for f in fields(SweepPoint)] for p in points]
    for r in rows[1:]:
        if r[SWEEP_HEADER.index("period")] == "0":
            r[SWEEP_HEADER.index("period")] = ""
    return _csv(rows)


# -- traces ----------------------------------------------------------------------


def frame_trace_rows(record: TrackRecord) -> list[list[str]]:
    rows = [TRACE_HEADER]
    for t in range(len(record.boxes)):
        rows.append(
            [
                str(t),
                _fmt(float(record.ious[t])),
                _fmt(float(record.quality[t])),
                _fmt(float(record.g[t])),
                record.alarms[t].value,
                "1" if record.detector_called[t] else "0",
            ]
        )
    return rows


def emit_frame_trace(record: TrackRecord, path: Optional[str | Path] = None) -> str:
    """Per-frame CSV (frame, iou, quality, g, alarm, detector_called); written to ``path`` if given."""
    text = _csv(frame_trace_rows(record))
    if path is not None:
        _write(path, text)
    return text


def _write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in text)


# -- synthetic export ------------------------------------------------------------


def write_sequence(seq: Sequence, out_dir: str | Path) -> Path:
    """Write a sequence in OTB layout: ``img/0001.png ...`` plus ``groundtruth_rect.txt``."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "img"
    img_dir.mkdir(parents=True, exist_ok=True)
    for frame in seq.frames:
        px = np.clip(np.rint(np.asarray(frame.pixels) * 255.0), 0, 255).astype(np.uint8)
        img = Image.fromarray(px[:, :, 0] if px.shape[2] == 1 else px)
        img.save(img_dir / f"{frame.index + 1:04d}.png", optimize=False)
    gt = "".join(f"{b.x:.6f},{b.y:.6f},{b.w:.6f},{b.h:.6f}\n" for b in seq.ground_truth)
    _write(out_dir / "groundtruth_rect.txt", gt)
    meta = {k: v for k, v in seq.metadata.items()}
    _write(out_dir / "meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out_dir


# -- command line ----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adasiam", description="Adaptive Siamese tracking experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, needs_policy: bool = True):
        sp.add_argument("--config", required=True, help="experiment JSON (or a shipped experiment name)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", default="out", help="output directory")
        if needs_policy:
            sp.add_argument("--policy", help="none | periodic:<N> | adaptive (overrides the config list)")
        sp.add_argument("--detector", choices=sorted(DETECTOR_NAMES), help="override the detector mode")
        sp.add_argument("--jobs", type=int, help="parallel worker processes")

    common(sub.add_parser("run", help="overlap table over sequences x policies"))
    common(sub.add_parser("sweep", help="update rate versus overlap"), needs_policy=False)
    common(sub.add_parser("trace", help="per-frame IOU / quality / CUSUM traces"))
    sp = sub.add_parser("synth", help="render a synthetic sequence in OTB layout")
    sp.add_argument("--config", required=True, help="synthetic sequence JSON or a shipped sequence name")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="out")
    return p


def _experiment_from_args(args) -> Experiment:
    exp = load_experiment(args.config)
    tmpl = exp.template
    if args.seed is not None:
        tmpl = replace(tmpl, seed=args.seed, noise=replace(tmpl.noise, seed=args.seed))
    if args.detector is not None:
        if args.detector == "external" and not tmpl.command:
            raise ConfigError("--detector external needs detector.command in the config")
        tmpl = replace(tmpl, detector=args.detector)
    exp.template = replace(tmpl, out=args.out)
    if getattr(args, "policy", None):
        UpdatePolicy.parse(args.policy)
        exp.policies = [args.policy]
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        exp.jobs = args.jobs
    return exp


def cmd_run(args) -> None:
    exp = _experiment_from_args(args)
    report = run_table(exp.configs(), exp.jobs)
    out = Path(args.out)
    _write(out / "table.csv", report.to_csv())
    _write(out / "table.txt", report.to_text())
    sys.stdout.write(report.to_text())


def cmd_sweep(args) -> None:
    exp = _experiment_from_args(args)
    points = []
    for src in exp.sources:
        cfg = replace(exp.template, source=src)
        points += sweep_update_rate(cfg, exp.beta_grid, exp.periods, jobs=exp.jobs)
    text = sweep_to_csv(points)
    _write(Path(args.out) / "sweep.csv", text)
    sys.stdout.write(text)


def cmd_trace(args) -> None:
    exp = _experiment_from_args(args)
    configs = exp.configs()
    records = _map(_run_one, configs, exp.jobs)
    for rec in records:
        path = Path(args.out) / f"trace_{_slug(rec.name)}_{_slug(rec.policy)}.csv"
        emit_frame_trace(rec, path)
        sys.stdout.write(f"{path}\n")


def cmd_synth(args) -> None:
    ref = args.config
    if ref in shipped_sequence_names():
        with shipped_path(ref).open(encoding="utf-8") as fh:
            cfg = SyntheticConfig.from_dict(json.load(fh))
    else:
        cfg = SyntheticConfig.from_file(ref)
    seq = generate_synthetic(cfg, args.seed)
    out = write_sequence(seq, Path(args.out) / _slug(seq.name))
    sys.stdout.write(f"{out}\n")


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "trace": cmd_trace, "synth": cmd_synth}


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # anything else is a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
