"""Frames, sequences and patch extraction.

Crops are square regions centred on a box, resampled bilinearly to a fixed
resolution. Pixels falling outside the frame take the frame's per-channel mean
(the usual SiamFC border fill). Sequences come either from an OTB-style
directory or from the seeded synthetic generator in this module.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError, LostTarget
from .geometry import BoundingBox

TEMPLATE_SIZE = 64
SEARCH_SIZE = 2 * TEMPLATE_SIZE
CONTEXT_MARGIN = 0.5

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff", ".pgm", ".ppm"}


@dataclass(frozen=True, eq=False)
class Frame:
    """One image, stored as float32 ``(height, width, channels)`` in [0, 1]."""

    index: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise DataError(f"frame {self.index}: bad pixel array shape {px.shape}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def mean(self) -> np.ndarray:
        cached = self.__dict__.get("_mean")
        if cached is None:
            cached = self.pixels.mean(axis=(0, 1), dtype=np.float64)
            object.__setattr__(self, "_mean", cached)
        return cached


@dataclass(frozen=True, eq=False)
class Sequence:
    name: str
    frames: tuple[Frame, ...]
    ground_truth: tuple[BoundingBox, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.frames) != len(self.ground_truth):
            raise DataError(
                f"{self.name}: {len(self.frames)} frames but {len(self.ground_truth)} ground-truth boxes"
            )

    def __len__(self) -> int:
        return len(self.frames)

    def visibility(self, index: int) -> float:
        vis = self.metadata.get("visibility")
        return 1.0 if vis is None else float(vis[index])


@dataclass(frozen=True, eq=False)
class Patch:
    """A square crop resampled to ``size x size``.

    ``source_box`` is the square region in frame coordinates; ``pad_fraction``
    the share of that region lying outside the frame.
    """

    pixels: np.ndarray
    source_box: BoundingBox
    pad_fraction: float

    @property
    def size(self) -> int:
        return self.pixels.shape[0]

    @property
    def scale(self) -> float:
        """Frame pixels per patch pixel."""
        return self.source_box.w / self.size


def context_side(box: BoundingBox, context_margin: float) -> float:
    """Side of the square crop around ``box``; ``context_margin * (w + h)`` is added to each dimension."""
    p = context_margin * (box.w + box.h)
    return math.sqrt((box.w + p) * (box.h + p))


def _outside_fraction(frame: Frame, region: BoundingBox) -> float:
    iw = max(0.0, min(region.x2, frame.width) - max(region.x, 0.0))
    ih = max(0.0, min(region.y2, frame.height) - max(region.y, 0.0))
    return 1.0 - (iw * ih) / region.area


def crop_square(frame: Frame, cx: float, cy: float, side: float, out_size: int) -> Patch:
    """Bilinear resample of the square of ``side`` pixels centred at ``(cx, cy)``."""
    region = BoundingBox.from_center(cx, cy, side, side)
    pad = _outside_fraction(frame, region)
    if pad >= 1.0:
        raise LostTarget(f"crop centred at ({cx:.1f}, {cy:.1f}) lies outside frame {frame.index}")
    step = side / out_size
    # pixel k covers [k, k+1); sample at output cell centres
    coords = region.x + (np.arange(out_size) + 0.5) * step - 0.5
    rows = region.y + (np.arange(out_size) + 0.5) * step - 0.5
    rr, cc = np.meshgrid(rows, coords, indexing="ij")
    out = np.empty((out_size, out_size, frame.channels), dtype=np.float64)
    for ch in range(frame.channels):
        out[:, :, ch] = ndimage.map_coordinates(
            frame.pixels[:, :, ch].astype(np.float64),
            (rr, cc),
            order=1,
            mode="grid-constant",
            cval=float(frame.mean[ch]),
        )
    return Patch(out, region, pad)


def crop_template(
    frame: Frame,
    box: BoundingBox,
    context_margin: float = CONTEXT_MARGIN,
    out_size: int = TEMPLATE_SIZE,
) -> Patch:
    cx, cy = box.center
    return crop_square(frame, cx, cy, context_side(box, context_margin), out_size)


def crop_search(
    frame: Frame,
    prev_box: BoundingBox,
    context_margin: float = CONTEXT_MARGIN,
    template_size: int = TEMPLATE_SIZE,
) -> Patch:
    """Search region: twice the template crop's side, at twice its resolution."""
    cx, cy = prev_box.center
    return crop_square(frame, cx, cy, 2.0 * context_side(prev_box, context_margin), 2 * template_size)


# -- OTB loading -------------------------------------------------------------

_SPLIT = re.compile(r"[,\s]+")


def parse_gt_line(line: str, lineno: int = 0) -> BoundingBox:
    fields = [f for f in _SPLIT.split(line.strip()) if f]
    if len(fields) != 4:
        raise DataError(f"line {lineno}: expected 4 fields, got {len(fields)}: {line.strip()!r}")
    try:
        vals = [float(f) for f in fields]
    except ValueError:
        raise DataError(f"line {lineno}: unparseable box {line.strip()!r}") from None
    try:
        return BoundingBox(*vals)
    except ValueError as exc:
        raise DataError(f"line {lineno}: {exc}") from None


def read_ground_truth(gt_file: str | Path) -> list[BoundingBox]:
    boxes = []
    with open(gt_file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            boxes.append(parse_gt_line(line, lineno))
    return boxes


def load_image(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        mode = "RGB" if img.mode == "P" or len(img.getbands()) >= 3 else "L"
        arr = np.asarray(img.convert(mode), dtype=np.float32) / 255.0
    return arr


def load_otb_sequence(frames_dir: str | Path, gt_file: str | Path, name: Optional[str] = None) -> Sequence:
    frames_dir = Path(frames_dir)
    if not frames_dir.is_dir():
        raise DataError(f"not a directory: {frames_dir}")
    files = sorted(p for p in frames_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    boxes = read_ground_truth(gt_file)
    if len(files) != len(boxes):
        raise DataError(f"{frames_dir}: {len(files)} frames but {len(boxes)} ground-truth lines")
    frames = tuple(Frame(i, load_image(p)) for i, p in enumerate(files))
    return Sequence(name or frames_dir.parent.name, frames, tuple(boxes))


# -- synthetic sequences -----------------------------------------------------

SYNTHETIC_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["width", "height", "n_frames", "target"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "width": {"type": "integer", "minimum": 16},
        "height": {"type": "integer", "minimum": 16},
        "n_frames": {"type": "integer", "minimum": 1},
        "target": {
            "type": "object",
            "required": ["size", "start"],
            "additionalProperties": False,
            "properties": {
                "size": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 2, "maxItems": 2},
                "start": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "mean": {"type": "number", "minimum": 0, "maximum": 1},
                "contrast": {"type": "number", "minimum": 0},
                "blob": {"type": "number", "minimum": 0},
            },
        },
        "trajectory": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["frames", "velocity"],
                "additionalProperties": False,
                "properties": {
                    "frames": {"type": "integer", "minimum": 1},
                    "velocity": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                },
            },
        },
        "background": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mean": {"type": "number", "minimum": 0, "maximum": 1},
                "contrast": {"type": "number", "minimum": 0},
                "blob": {"type": "number", "minimum": 0},
            },
        },
        "drift_rate": {"type": "number", "minimum": 0, "maximum": 1},
        "noise_std": {"type": "number", "minimum": 0},
        "events": {
            "type": "array",
            "items": {
                "oneOf": [
                    {
                        "type": "object",
                        "required": ["type", "start", "duration"],
                        "additionalProperties": False,
                        "properties": {
                            "type": {"const": "occlusion"},
                            "start": {"type": "integer", "minimum": 0},
                            "duration": {"type": "integer", "minimum": 1},
                            "box": {"type": "array", "items": {"type": "integer"}, "minItems": 4, "maxItems": 4},
                            "size": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
                            "mean": {"type": "number", "minimum": 0, "maximum": 1},
                            "contrast": {"type": "number", "minimum": 0},
                        },
                    },
                    {
                        "type": "object",
                        "required": ["type", "frame"],
                        "additionalProperties": False,
                        "properties": {
                            "type": {"const": "appearance_switch"},
                            "frame": {"type": "integer", "minimum": 1},
                        },
                    },
                ]
            },
        },
    },
}


@dataclass
class SyntheticConfig:
    """Parameters of a synthetic single-target sequence.

    The target is a smoothed-noise texture moving with piecewise constant
    velocity over a smoothed-noise background. Its texture drifts linearly
    toward a second texture at ``drift_rate`` per frame; ``appearance_switch``
    events swap in a fresh texture, and ``occlusion`` events draw an opaque
    textured rectangle for ``duration`` frames.
    """

    width: int
    height: int
    n_frames: int
    target: dict
    trajectory: list = field(default_factory=list)
    background: dict = field(default_factory=dict)
    drift_rate: float = 0.0
    noise_std: float = 0.0
    events: list = field(default_factory=list)
    name: str = "synthetic"

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticConfig":
        try:
            jsonschema.validate(doc, SYNTHETIC_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"synthetic config: {exc.message} at {list(exc.absolute_path)}") from None
        return cls(**doc)

    @classmethod
    def from_file(cls, path: str | Path) -> "SyntheticConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)


def _texture(rng: np.random.Generator, shape: tuple[int, int], blob: float, mean: float, contrast: float) -> np.ndarray:
    noise = rng.standard_normal(shape)
    if blob > 0:
        noise = ndimage.gaussian_filter(noise, blob, mode="wrap")
    std = noise.std()
    if std > 0:
        noise = noise / std
    return mean + contrast * noise


def _trajectory(cfg: SyntheticConfig) -> np.ndarray:
    """Target centres, one row per frame."""
    centers = np.empty((cfg.n_frames, 2))
    centers[0] = cfg.target["start"]
    velocities = []
    for seg in cfg.trajectory:
        velocities.extend([seg["velocity"]] * seg["frames"])
    last = velocities[-1] if velocities else [0.0, 0.0]
    for t in range(1, cfg.n_frames):
        v = velocities[t - 1] if t - 1 < len(velocities) else last
        centers[t] = centers[t - 1] + v
    return centers


def generate_synthetic(cfg: SyntheticConfig, seed: int) -> Sequence:
    """Render a deterministic sequence from ``(cfg, seed)`` with exact ground truth."""
    tw, th = cfg.target["size"]
    W, H = cfg.width, cfg.height
    centers = _trajectory(cfg)
    boxes = []
    for t, (cx, cy) in enumerate(centers):
        x, y = round(cx - tw / 2.0), round(cy - th / 2.0)
        if x + tw <= 0 or y + th <= 0 or x >= W or y >= H:
            raise ConfigError(f"target leaves the frame entirely at frame {t}")
        boxes.append(BoundingBox(float(x), float(y), float(tw), float(th)))

    rng = np.random.default_rng(seed)
    bg_cfg = cfg.background
    background = _texture(rng, (H, W), bg_cfg.get("blob", 4.0), bg_cfg.get("mean", 0.45), bg_cfg.get("contrast", 0.08))
    tg = cfg.target
    tex_args = (tg.get("blob", 2.0), tg.get("mean", 0.5), tg.get("contrast", 0.2))

    switches = sorted(e["frame"] for e in cfg.events if e["type"] == "appearance_switch")
    n_textures = len(switches) + 1
    base_textures = [_texture(rng, (th, tw), *tex_args) for _ in range(n_textures)]
    drift_texture = _texture(rng, (th, tw), *tex_args)

    occluders = []
    for ev in cfg.events:
        if ev["type"] != "occlusion":
            continue
        if "box" in ev:
            ox, oy, ow, oh = ev["box"]
        else:
            ow, oh = ev.get("size", (tw + 8, th + 8))
            mid = min(ev["start"] + ev["duration"] // 2, cfg.n_frames - 1)
            ccx, ccy = centers[mid]
            ox, oy = round(ccx - ow / 2.0), round(ccy - oh / 2.0)
        tex = _texture(rng, (oh, ow), 2.0, ev.get("mean", 0.5), ev.get("contrast", 0.2))
        occluders.append({"start": ev["start"], "end": ev["start"] + ev["duration"], "box": [ox, oy, ow, oh], "texture": tex})

    frames = []
    visibility = []
    for t in range(cfg.n_frames):
        k = sum(1 for s in switches if s <= t)
        since = t - (switches[k - 1] if k else 0)
        a = min(1.0, cfg.drift_rate * since)
        target_tex = (1.0 - a) * base_textures[k] + a * drift_texture

        img = background.copy()
        x, y = int(boxes[t].x), int(boxes[t].y)
        _paste(img, target_tex, x, y)
        target_mask = np.zeros((H, W), dtype=bool)
        target_mask[max(y, 0):max(y + th, 0), max(x, 0):max(x + tw, 0)] = True
        hidden = np.zeros((H, W), dtype=bool)
        for occ in occluders:
            if occ["start"] <= t < occ["end"]:
                ox, oy, ow, oh = occ["box"]
                _paste(img, occ["texture"], ox, oy)
                hidden[max(oy, 0):max(oy + oh, 0), max(ox, 0):max(ox + ow, 0)] = True
        visibility.append(1.0 - (target_mask & hidden).sum() / (tw * th))

        if cfg.noise_std > 0:
            img = img + cfg.noise_std * np.random.default_rng([seed, 1, t]).standard_normal((H, W))
        frames.append(Frame(t, np.clip(img, 0.0, 1.0)))

    events = []
    for ev in cfg.events:
        if ev["type"] == "occlusion":
            occ = occluders.pop(0)
            events.append({"type": "occlusion", "start": occ["start"], "end": occ["end"], "box": occ["box"]})
        else:
            events.append(dict(ev))
    meta = {"events": events, "visibility": visibility, "seed": seed, "config": cfg.to_dict()}
    return Sequence(cfg.name, tuple(frames), tuple(boxes), meta)


def _paste(img: np.ndarray, tex: np.ndarray, x: int, y: int) -> None:
    H, W = img.shape
    h, w = tex.shape
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, W), min(y + h, H)
    if x1 <= x0 or y1 <= y0:
        return
    img[y0:y1, x0:x1] = tex[y0 - y:y1 - y, x0 - x:x1 - x]
