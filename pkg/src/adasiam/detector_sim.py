"""Simulated object detection, Kalman motion model and IOU association.

The simulated detector anchors on ground truth and degrades it in a
controlled way: the emitted box is perturbed until its IOU with the truth
matches a drawn target, detections can be missed, and spurious boxes can be
added. Everything is a pure function of ``(seed, frame_index, ground truth)``.

The motion model follows SORT: state ``[cx, cy, area, aspect, vcx, vcy,
varea]`` with constant velocity on centre and area.
"""

from __future__ import annotations

import logging
import math
import subprocess
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import BoundingBox, iou

log = logging.getLogger(__name__)

IOU_TOLERANCE = 0.02


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    confidence: float = 1.0
    class_id: str = "target"


@dataclass(frozen=True)
class DetectorNoiseConfig:
    target_iou_mean: float = 1.0
    target_iou_std: float = 0.0
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    seed: int = 0
    # targets less visible than this are missed (0 disables the check)
    min_visibility: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.target_iou_mean <= 1.0:
            raise ValueError(f"target_iou_mean must be in (0, 1], got {self.target_iou_mean}")
        if self.target_iou_std < 0:
            raise ValueError("target_iou_std must be >= 0")
        for name in ("miss_rate", "false_positive_rate", "min_visibility"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


# -- noise model -------------------------------------------------------------


def _as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _perturbed(box: BoundingBox, direction: np.ndarray, t: float) -> BoundingBox:
    cx, cy = box.center
    w = box.w * math.exp(t * direction[2])
    h = box.h * math.exp(t * direction[3])
    return BoundingBox.from_center(cx + t * direction[0] * box.w, cy + t * direction[1] * box.h, w, h)


def perturb_box_to_iou(box: BoundingBox, target: float, seed=None, t_max: float = 4.0) -> BoundingBox:
    """Random translation and scaling of ``box`` whose IOU with it is ``target``.

    A random direction in (shift x, shift y, log-scale w, log-scale h) space
    is drawn and the step length along it is found by bisection. If the
    target cannot be reached within ``t_max`` the furthest box is returned and
    a warning is issued.
    """
    if not 0.0 < target <= 1.0:
        raise ValueError(f"target IOU must be in (0, 1], got {target}")
    rng = _as_rng(seed)
    direction = rng.standard_normal(4)
    direction /= np.linalg.norm(direction)
    if target >= 1.0:
        return box
    lo, hi = 0.0, t_max
    if iou(_perturbed(box, direction, hi), box) > target:
        far = _perturbed(box, direction, hi)
        achieved = iou(far, box)
        if achieved > target + IOU_TOLERANCE:
            warnings.warn(f"target IOU {target:.3f} unreachable; achieved {achieved:.3f}", RuntimeWarning)
        return far
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if iou(_perturbed(box, direction, mid), box) > target:
            lo = mid
        else:
            hi = mid
    return _perturbed(box, direction, 0.5 * (lo + hi))


def detect(
    frame_index: int,
    ground_truth: BoundingBox,
    cfg: DetectorNoiseConfig,
    visibility: float = 1.0,
    frame_size: Optional[tuple[int, int]] = None,
) -> list[Detection]:
    """Detections for one frame; deterministic in ``(cfg.seed, frame_index, ground_truth)``.

    ``frame_size`` is ``(width, height)``; false positives are placed
    uniformly inside it, or within a few box sizes of the truth when absent.
    """
    rng = np.random.default_rng([cfg.seed, frame_index])
    missed = rng.random() < cfg.miss_rate or visibility < cfg.min_visibility
    target = float(np.clip(rng.normal(cfg.target_iou_mean, cfg.target_iou_std), 1e-3, 1.0))
    out = []
    if not missed:
        box = perturb_box_to_iou(ground_truth, target, rng)
        out.append(Detection(box, 1.0 - abs(iou(box, ground_truth) - 1.0)))
    n_fp = int(rng.poisson(cfg.false_positive_rate)) if cfg.false_positive_rate > 0 else 0
    for _ in range(n_fp):
        w = ground_truth.w * math.exp(rng.uniform(-0.3, 0.3))
        h = ground_truth.h * math.exp(rng.uniform(-0.3, 0.3))
        if frame_size is not None:
            x = rng.uniform(0, max(frame_size[0] - w, 1.0))
            y = rng.uniform(0, max(frame_size[1] - h, 1.0))
        else:
            cx, cy = ground_truth.center
            x = cx + rng.uniform(-4, 4) * ground_truth.w - w / 2
            y = cy + rng.uniform(-4, 4) * ground_truth.h - h / 2
        out.append(Detection(BoundingBox(x, y, w, h), float(rng.uniform(0.0, 0.5)), "spurious"))
    return out


# -- Kalman motion model -----------------------------------------------------


@dataclass(frozen=True)
class KalmanParams:
    """Noise scales; defaults follow the SORT reference settings."""

    process_scale: float = 1.0
    measurement_noise: tuple[float, float, float, float] = (1.0, 1.0, 10.0, 10.0)
    initial_velocity_var: float = 1e4
    initial_var: float = 10.0


def box_to_z(box: BoundingBox) -> np.ndarray:
    cx, cy = box.center
    return np.array([cx, cy, box.w * box.h, box.w / box.h])


def z_to_box(z: np.ndarray) -> BoundingBox:
    area = max(float(z[2]), 1e-6)
    aspect = max(float(z[3]), 1e-6)
    w = math.sqrt(area * aspect)
    return BoundingBox.from_center(float(z[0]), float(z[1]), w, area / w)


_F = np.eye(7)
_F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
_H = np.eye(4, 7)


def _process_noise(scale: float) -> np.ndarray:
    q = np.eye(7)
    q[6, 6] *= 0.01
    q[4:, 4:] *= 0.01
    return q * scale


@dataclass(frozen=True, eq=False)
class KalmanTrack:
    mean: np.ndarray
    cov: np.ndarray
    params: KalmanParams = field(default_factory=KalmanParams)

    @classmethod
    def from_box(cls, box: BoundingBox, params: KalmanParams = KalmanParams()) -> "KalmanTrack":
        mean = np.zeros(7)
        mean[:4] = box_to_z(box)
        cov = np.eye(7) * params.initial_var
        cov[4:, 4:] = np.eye(3) * params.initial_velocity_var
        return cls(mean, cov, params)

    @property
    def box(self) -> BoundingBox:
        return z_to_box(self.mean[:4])


def kalman_predict(track: KalmanTrack) -> KalmanTrack:
    mean = _F @ track.mean
    if mean[2] + mean[6] <= 0:
        # SORT guard: stop area from collapsing through zero
        mean[6] = 0.0
    mean[2] = max(mean[2], 1e-6)
    cov = _F @ track.cov @ _F.T + _process_noise(track.params.process_scale)
    return replace(track, mean=mean, cov=0.5 * (cov + cov.T))


def kalman_correct(mean: np.ndarray, cov: np.ndarray, z: np.ndarray, H: np.ndarray, R: np.ndarray):
    """Standard Kalman measurement update in Joseph form."""
    innovation = z - H @ mean
    S = H @ cov @ H.T + R
    K = np.linalg.solve(S.T, (cov @ H.T).T).T
    mean = mean + K @ innovation
    I_KH = np.eye(cov.shape[0]) - K @ H
    cov = I_KH @ cov @ I_KH.T + K @ R @ K.T
    return mean, 0.5 * (cov + cov.T)


def kalman_update(track: KalmanTrack, detection: Detection | BoundingBox) -> KalmanTrack:
    box = detection.box if isinstance(detection, Detection) else detection
    R = np.diag(track.params.measurement_noise)
    mean, cov = kalman_correct(track.mean, track.cov, box_to_z(box), _H, R)
    return replace(track, mean=mean, cov=cov)


# -- association -------------------------------------------------------------


@dataclass
class Assignment:
    matches: list[tuple[int, int]]
    unmatched_tracks: list[int]
    unmatched_detections: list[int]

    def total_iou(self, predicted: Sequence[BoundingBox], detections: Sequence[Detection]) -> float:
        return math.fsum(iou(predicted[t], detections[d].box) for t, d in self.matches)


def iou_matrix(predicted: Sequence[BoundingBox], detections: Sequence[Detection]) -> np.ndarray:
    m = np.zeros((len(predicted), len(detections)))
    for i, p in enumerate(predicted):
        for j, d in enumerate(detections):
            m[i, j] = iou(p, d.box)
    return m


def associate(
    predicted: Sequence[BoundingBox],
    detections: Sequence[Detection],
    min_iou: float = 0.3,
    greedy: bool = False,
) -> Assignment:
    """One-to-one matching maximising total IOU over pairs with IOU >= ``min_iou``."""
    if not 0.0 <= min_iou <= 1.0:
        raise ValueError(f"min_iou must be in [0, 1], got {min_iou}")
    n, m = len(predicted), len(detections)
    matches: list[tuple[int, int]] = []
    if n and m:
        ious = iou_matrix(predicted, detections)
        gated = np.where(ious >= min_iou, ious, 0.0)
        if greedy:
            order = sorted(((gated[i, j], i, j) for i in range(n) for j in range(m)), key=lambda t: (-t[0], t[1], t[2]))
            used_t, used_d = set(), set()
            for v, i, j in order:
                if v > 0 and i not in used_t and j not in used_d:
                    matches.append((i, j))
                    used_t.add(i)
                    used_d.add(j)
            matches.sort()
        else:
            rows, cols = linear_sum_assignment(gated, maximize=True)
            matches = [(int(i), int(j)) for i, j in zip(rows, cols) if gated[i, j] > 0]
    matched_t = {i for i, _ in matches}
    matched_d = {j for _, j in matches}
    return Assignment(
        matches,
        [i for i in range(n) if i not in matched_t],
        [j for j in range(m) if j not in matched_d],
    )


# -- detector plug-ins -------------------------------------------------------


def format_detection(det: Detection) -> str:
    b = det.box
    return f"{det.class_id} {det.confidence!r} {b.x!r} {b.y!r} {b.w!r} {b.h!r}"


def parse_detection(line: str) -> Detection:
    parts = line.split()
    if len(parts) != 6:
        raise ValueError(f"expected 'class_id confidence x y w h', got {line!r}")
    cls_id, conf, *coords = parts
    return Detection(BoundingBox(*(float(c) for c in coords)), float(conf), cls_id)


class ExternalDetector:
    """Out-of-process detector speaking a line protocol over stdin/stdout.

    For each request the frame index is written as one line; the process
    answers with zero or more ``class_id confidence x y w h`` lines followed
    by an empty line.
    """

    def __init__(self, command: Sequence[str]):
        self.command = list(command)
        self._proc: Optional[subprocess.Popen] = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
        return self._proc

    def request(self, frame_index: int) -> list[Detection]:
        proc = self._ensure()
        proc.stdin.write(f"{frame_index}\n")
        proc.stdin.flush()
        out = []
        while True:
            line = proc.stdout.readline()
            if line == "":
                raise RuntimeError(f"external detector exited while answering frame {frame_index}")
            if not line.strip():
                return out
            out.append(parse_detection(line))

    def __call__(self, frame) -> list[Detection]:
        return self.request(frame.index)

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=10)
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_detections(source: Callable[[int], Iterable[Detection]], stdin, stdout) -> None:
    """Answer frame-index requests from ``stdin`` until EOF; the server side of :class:`ExternalDetector`."""
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        for det in source(int(line)):
            stdout.write(format_detection(det) + "\n")
        stdout.write("\n")
        stdout.flush()


class SimulatedDetector:
    """Noise-model detector bound to a sequence's ground truth."""

    def __init__(self, sequence, cfg: DetectorNoiseConfig):
        self.sequence = sequence
        self.cfg = cfg

    def __call__(self, frame) -> list[Detection]:
        seq = self.sequence
        f = seq.frames[frame.index]
        return detect(
            frame.index, seq.ground_truth[frame.index], self.cfg, seq.visibility(frame.index), (f.width, f.height)
        )


class GroundTruthDetector:
    """Oracle detector returning the annotated box, optionally blind to occluded targets."""

    def __init__(self, sequence, min_visibility: float = 0.0):
        self.sequence = sequence
        self.min_visibility = min_visibility

    def __call__(self, frame) -> list[Detection]:
        if self.sequence.visibility(frame.index) < self.min_visibility:
            return []
        return [Detection(self.sequence.ground_truth[frame.index], 1.0)]
