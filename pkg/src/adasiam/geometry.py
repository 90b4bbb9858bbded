"""Axis-aligned bounding boxes and the overlap metrics used for evaluation.

Boxes follow the OTB convention ``(x, y, w, h)`` with ``(x, y)`` the top-left
corner. A tracker output of ``None`` means the target was declared lost and
scores zero overlap for that frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box coordinates: {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box width and height must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def translate(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    # capped by the sizes: x2 - x can round above w far from the origin
    iw = min(min(a.x2, b.x2) - max(a.x, b.x), a.w, b.w)
    ih = min(min(a.y2, b.y2) - max(a.y, b.y), a.h, b.h)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: Optional[BoundingBox], b: Optional[BoundingBox]) -> float:
    """Intersection over union of two boxes; 0 if either is missing or they are disjoint."""
    if a is None or b is None:
        return 0.0
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return min(inter / (a.area + b.area - inter), 1.0)


def overlap_series(gt: Sequence[BoundingBox], tr: Sequence[Optional[BoundingBox]]) -> list[float]:
    """Per-frame IOU between ground truth and tracker output."""
    if len(gt) != len(tr):
        raise ValueError(f"sequence length mismatch: {len(gt)} ground-truth vs {len(tr)} tracked")
    return [iou(g, t) for g, t in zip(gt, tr)]


def average_overlap(gt: Sequence[BoundingBox], tr: Sequence[Optional[BoundingBox]]) -> float:
    """Mean per-frame IOU over the sequence."""
    phi = overlap_series(gt, tr)
    if not phi:
        raise ValueError("average_overlap needs at least one frame")
    return math.fsum(phi) / len(phi)


def success_rate(
    gt: Sequence[BoundingBox], tr: Sequence[Optional[BoundingBox]], threshold: float = 0.5
) -> float:
    """Fraction of frames whose IOU is strictly above ``threshold``."""
    phi = overlap_series(gt, tr)
    if not phi:
        raise ValueError("success_rate needs at least one frame")
    return sum(1 for p in phi if p > threshold) / len(phi)
