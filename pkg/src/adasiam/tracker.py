"""Adaptive Siamese-style tracker and the baseline update policies.

Per frame the tracker correlates its active template with the search
region, scores the tracked crop against the reference appearance, and (under
the adaptive policy) feeds that score to a CUSUM detector. A gradual alarm
re-derives the template from the integrated score of the template memory; an
abrupt alarm calls the detector and re-initialises the track on its box. The
periodic policy instead refreshes the template from the detector every N
frames.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

from .changedetect import CusumParams, CusumState, Signal, accumulate, classify
from .detector_sim import (
    Detection,
    DetectorNoiseConfig,
    ExternalDetector,
    GroundTruthDetector,
    KalmanParams,
    KalmanTrack,
    SimulatedDetector,
    associate,
    kalman_predict,
    kalman_update,
)
from .embedder import CorrelationConfig, Embedder, FeatureMap, HandcraftedEmbedder, cross_correlate, score_to_bbox
from .errors import ConfigError, LostTarget
from .geometry import BoundingBox, average_overlap, iou, success_rate
from .memory import TemplateEntry, TemplateMemory, adapt, admit, crop_template_from_search, enforce_budget
from .quality import NCCQuality, QualityReference
from .sequence_io import CONTEXT_MARGIN, TEMPLATE_SIZE, Frame, Patch, Sequence, crop_search, crop_template

log = logging.getLogger(__name__)

DETECTOR_MODES = ("ideal", "simulated", "external", "ground_truth")

Detector = Callable[[Frame], list[Detection]]


@dataclass(frozen=True)
class UpdatePolicy:
    """Which update mechanisms are active.

    ``period`` enables the periodic refresh every ``period`` frames;
    ``adaptive`` enables change detection. Both may be combined.
    """

    adaptive: bool = False
    period: Optional[int] = None
    detector_mode: str = "simulated"

    def __post_init__(self) -> None:
        if self.period is not None and self.period < 1:
            raise ConfigError(f"periodic update needs N >= 1, got {self.period}")
        if self.detector_mode not in DETECTOR_MODES:
            raise ConfigError(f"unknown detector mode {self.detector_mode!r}")

    @property
    def kind(self) -> str:
        parts = (["adaptive"] if self.adaptive else []) + ([f"periodic:{self.period}"] if self.period else [])
        return "+".join(parts) or "none"

    @classmethod
    def parse(cls, text: str, detector_mode: str = "simulated") -> "UpdatePolicy":
        adaptive, period = False, None
        for part in text.strip().lower().split("+"):
            if part == "none":
                continue
            if part == "adaptive":
                adaptive = True
                continue
            m = re.fullmatch(r"periodic:(\d+)", part)
            if not m:
                raise ConfigError(f"unrecognised policy {text!r}; expected none, periodic:<N>, adaptive")
            period = int(m.group(1))
        return cls(adaptive, period, detector_mode)


@dataclass(frozen=True)
class TrackerConfig:
    correlation: CorrelationConfig = CorrelationConfig()
    cusum: CusumParams = CusumParams()
    budget: int = 5
    quality_weighted: bool = False
    context_margin: float = CONTEXT_MARGIN
    template_size: int = TEMPLATE_SIZE
    stride: int = 4
    gradient_gain: float = 1.0
    assoc_min_iou: float = 0.3
    # detector score threshold; weaker detections are discarded before association
    min_confidence: float = 0.5
    # frames to wait before retrying a detector call that found nothing
    retry_interval: int = 5
    kalman: KalmanParams = KalmanParams()


@dataclass
class TrackStats:
    frames: int = 0
    detector_calls: int = 0
    gradual_adaptations: int = 0
    abrupt_resets: int = 0
    periodic_updates: int = 0
    failed_detections: int = 0


@dataclass
class StepLog:
    frame: int
    box: Optional[BoundingBox] = None
    quality: float = 0.0
    g: float = 0.0
    alarm: Signal = Signal.NONE
    detector_called: bool = False


@dataclass
class TrackState:
    box: BoundingBox
    phi_best: FeatureMap
    memory: TemplateMemory
    cusum: CusumState
    quality_ref: QualityReference
    kalman: KalmanTrack
    stats: TrackStats = field(default_factory=TrackStats)
    lost: bool = False
    next_detector_frame: int = 0
    last: Optional[StepLog] = None


class Tracker:
    def __init__(
        self,
        config: TrackerConfig = TrackerConfig(),
        embedder: Optional[Embedder] = None,
        quality: Optional[NCCQuality] = None,
        detector: Optional[Detector] = None,
    ):
        self.config = config
        self.embedder = embedder or HandcraftedEmbedder(config.stride, config.gradient_gain)
        self.quality = quality or NCCQuality(self.embedder, config.template_size)
        self.detector = detector

    # -- helpers ---------------------------------------------------------

    def _template(self, frame: Frame, box: BoundingBox) -> FeatureMap:
        return self.embedder.embed(crop_template(frame, box, self.config.context_margin, self.config.template_size))

    def _search(self, frame: Frame, anchor: BoundingBox) -> Optional[tuple[Patch, FeatureMap]]:
        try:
            patch = crop_search(frame, anchor, self.config.context_margin, self.config.template_size)
        except LostTarget:
            return None
        return patch, self.embedder.embed(patch)

    def _quality(self, state: TrackState, frame: Frame, box: BoundingBox) -> float:
        try:
            return self.quality.score(state.quality_ref, frame, box).y
        except LostTarget:
            return 0.0

    def _call_detector(self, state: TrackState, frame: Frame) -> Optional[Detection]:
        if self.detector is None:
            raise ConfigError("policy needs a detector but none is attached")
        state.stats.detector_calls += 1
        detections = self.detector(frame)
        return self.pick_detection(detections, state.kalman.box, state.box)

    def pick_detection(
        self, detections: list[Detection], predicted: BoundingBox, last_box: BoundingBox
    ) -> Optional[Detection]:
        """Best IOU match against the motion prediction, else the most confident box nearest ``last_box``.

        Detections below ``min_confidence`` are ignored.
        """
        detections = [d for d in detections if d.confidence >= self.config.min_confidence]
        if not detections:
            return None
        assignment = associate([predicted], detections, self.config.assoc_min_iou)
        if assignment.matches:
            return detections[assignment.matches[0][1]]
        lx, ly = last_box.center

        def rank(d: Detection):
            cx, cy = d.box.center
            return (-d.confidence, (cx - lx) ** 2 + (cy - ly) ** 2)

        return min(detections, key=rank)

    # -- public API --------------------------------------------------------

    def init(self, frame: Frame, init_box: BoundingBox) -> TrackState:
        phi = self._template(frame, init_box)
        state = TrackState(
            box=init_box,
            phi_best=phi,
            memory=TemplateMemory.seeded(TemplateEntry(phi, frame.index), self.config.budget),
            cusum=CusumState.reset(frame.index),
            quality_ref=self.quality.reference(frame, init_box),
            kalman=KalmanTrack.from_box(init_box, self.config.kalman),
            next_detector_frame=frame.index,
        )
        state.last = StepLog(frame.index, init_box, self._quality(state, frame, init_box))
        return state

    def _reinitialize(self, state: TrackState, frame: Frame, box: BoundingBox, phi: FeatureMap) -> None:
        state.box = box
        state.phi_best = phi
        state.memory = TemplateMemory.seeded(TemplateEntry(phi, frame.index), self.config.budget)
        state.quality_ref = self.quality.reference(frame, box)
        state.cusum = CusumState.reset(frame.index)
        state.kalman = kalman_update(state.kalman, box)
        state.lost = False

    def step(self, state: TrackState, frame: Frame, policy: UpdatePolicy) -> tuple[TrackState, Optional[BoundingBox]]:
        cfg = self.config
        stats = state.stats
        stats.frames += 1
        entry = StepLog(frame.index)
        state.kalman = kalman_predict(state.kalman)

        anchor = state.box
        search = self._search(frame, anchor)
        box: Optional[BoundingBox] = None
        updated = False
        want_detector = False

        if search is not None:
            patch, x = search
            box = score_to_bbox(cross_correlate(state.phi_best, x, cfg.correlation), anchor, patch.scale)
            y = self._quality(state, frame, box)
            entry.quality = y
            if policy.adaptive:
                if y > cfg.cusum.alpha:
                    tcells = state.phi_best.values.shape[1:]
                    try:
                        cand = crop_template_from_search(x, box, anchor, tcells, patch.scale, frame.index, y)
                        admit(state.memory, cand, y, cfg.cusum.alpha)
                    except LostTarget:
                        pass
                acc = accumulate(state.cusum, cfg.cusum, y)
                signal = classify(acc.g, cfg.cusum)
                entry.g, entry.alarm = acc.g, signal
                if signal is not Signal.NONE:
                    updated_entry, _ = adapt(
                        state.memory, x, cfg.correlation, anchor, patch.scale, frame.index, cfg.quality_weighted
                    )
                    state.phi_best = updated_entry.features
                    stats.gradual_adaptations += 1
                    updated = True
                if signal is Signal.GRADUAL and cfg.cusum.reset_on_gradual:
                    acc = CusumState(acc.i0, acc.count, acc.theta_hat, 0.0)
                state.cusum = acc
                want_detector = signal is Signal.ABRUPT
        else:
            state.lost = True
            want_detector = policy.adaptive

        if want_detector and frame.index >= state.next_detector_frame:
            entry.detector_called = True
            stats.abrupt_resets += 1
            det = self._call_detector(state, frame)
            if det is not None:
                search = self._search(frame, det.box)
                if search is not None:
                    phi_temp = self._template(frame, det.box)
                    self._reinitialize(state, frame, det.box, phi_temp)
                    anchor = det.box
                    patch, x = search
                    adapted, _ = adapt(state.memory, x, cfg.correlation, anchor, patch.scale, frame.index)
                    state.phi_best = adapted.features
                    updated = True
                else:
                    det = None
            if det is None:
                stats.failed_detections += 1
                state.next_detector_frame = frame.index + cfg.retry_interval

        periodic_box = None
        if policy.period and frame.index % policy.period == 0:
            entry.detector_called = True
            stats.periodic_updates += 1
            det = self._call_detector(state, frame)
            if det is not None:
                self._reinitialize(state, frame, det.box, self._template(frame, det.box))
                periodic_box = det.box
            else:
                stats.failed_detections += 1

        enforce_budget(state.memory)

        if periodic_box is not None:
            box = periodic_box
        elif updated and search is not None:
            patch, x = search
            box = score_to_bbox(cross_correlate(state.phi_best, x, cfg.correlation), anchor, patch.scale)

        if box is not None:
            if not (periodic_box is not None):
                state.kalman = kalman_update(state.kalman, box)
            state.box = box
            state.lost = False
        entry.box = box
        state.last = entry
        return state, box


# -- sequence runner -----------------------------------------------------------


@dataclass
class TrackRecord:
    name: str
    policy: str
    boxes: list[Optional[BoundingBox]]
    ground_truth: list[BoundingBox]
    ious: list[float]
    quality: list[float]
    g: list[float]
    alarms: list[Signal]
    detector_called: list[bool]
    stats: TrackStats

    @property
    def average_overlap(self) -> float:
        return average_overlap(self.ground_truth, self.boxes)

    @property
    def success_rate(self) -> float:
        return success_rate(self.ground_truth, self.boxes)


def make_detector(
    seq: Sequence,
    mode: str,
    noise: DetectorNoiseConfig = DetectorNoiseConfig(),
    command: Optional[list[str]] = None,
) -> Detector:
    if mode == "ideal":
        ideal = DetectorNoiseConfig(seed=noise.seed, min_visibility=noise.min_visibility)
        return SimulatedDetector(seq, ideal)
    if mode == "simulated":
        return SimulatedDetector(seq, noise)
    if mode == "ground_truth":
        return GroundTruthDetector(seq, noise.min_visibility)
    if mode == "external":
        if not command:
            raise ConfigError("external detector mode needs a command")
        return ExternalDetector(command)
    raise ConfigError(f"unknown detector mode {mode!r}")


def run_sequence(
    seq: Sequence,
    policy: UpdatePolicy,
    config: TrackerConfig = TrackerConfig(),
    noise: DetectorNoiseConfig = DetectorNoiseConfig(),
    init: str = "ground_truth",
    detector: Optional[Detector] = None,
    embedder: Optional[Embedder] = None,
) -> TrackRecord:
    """Track a whole sequence and collect everything needed for tables and traces.

    ``init`` is ``"ground_truth"`` or ``"detector"``. With detector
    initialisation, frames before the first detection are reported as lost.
    The initialising call is not counted in ``stats.detector_calls``.
    """
    if len(seq) == 0:
        raise ValueError("cannot track an empty sequence")
    if init not in ("ground_truth", "detector"):
        raise ConfigError(f"init must be 'ground_truth' or 'detector', got {init!r}")
    if detector is None:
        detector = make_detector(seq, policy.detector_mode, noise)
    tracker = Tracker(config, embedder=embedder, detector=detector)

    n = len(seq)
    boxes: list[Optional[BoundingBox]] = [None] * n
    quality = [0.0] * n
    gs = [0.0] * n
    alarms = [Signal.NONE] * n
    called = [False] * n

    state = None
    start = 0
    while state is None and start < n:
        frame = seq.frames[start]
        if init == "ground_truth":
            box0 = seq.ground_truth[start]
        else:
            called[start] = True
            dets = detector(frame)
            box0 = max(dets, key=lambda d: d.confidence).box if dets else None
        if box0 is not None:
            try:
                state = tracker.init(frame, box0)
            except LostTarget:
                state = None
        if state is None:
            start += 1
    if state is None:
        return TrackRecord(seq.name, policy.kind, boxes, list(seq.ground_truth), [0.0] * n, quality, gs, alarms, called, TrackStats())

    boxes[start] = state.box
    quality[start] = state.last.quality
    for t in range(start + 1, n):
        state, box = tracker.step(state, seq.frames[t], policy)
        boxes[t] = box
        quality[t] = state.last.quality
        gs[t] = state.last.g
        alarms[t] = state.last.alarm
        called[t] = state.last.detector_called
    if isinstance(detector, ExternalDetector):
        detector.close()
    ious = [iou(g, b) for g, b in zip(seq.ground_truth, boxes)]
    return TrackRecord(seq.name, policy.kind, boxes, list(seq.ground_truth), ious, quality, gs, alarms, called, state.stats)
