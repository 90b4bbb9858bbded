"""Budgeted template memory and integrated-score adaptation.

Entry 0 is the template from the most recent (re)initialisation and is never
evicted by budget pressure; the others are admitted in chronological order
and evicted oldest first. On a gradual change, every stored template is
correlated against the current search features, the maps are summed, and a
fresh template is cut from the search features at the summed peak.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedder import CorrelationConfig, FeatureMap, ScoreMap, cross_correlate, score_to_bbox
from .errors import LostTarget
from .geometry import BoundingBox


@dataclass(frozen=True, eq=False)
class TemplateEntry:
    features: FeatureMap
    frame_index: int
    quality_at_admit: float = 1.0


@dataclass
class TemplateMemory:
    entries: list[TemplateEntry] = field(default_factory=list)
    budget: int = 5

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def seeded(cls, entry: TemplateEntry, budget: int = 5) -> "TemplateMemory":
        return cls([entry], budget)


def admit(mem: TemplateMemory, entry: TemplateEntry, y: float, alpha: float) -> TemplateMemory:
    """Append ``entry`` when the quality ``y`` strictly exceeds ``alpha``."""
    if y > alpha:
        mem.entries.append(entry)
    return mem


def enforce_budget(mem: TemplateMemory) -> TemplateMemory:
    while len(mem.entries) > mem.budget and len(mem.entries) > 1:
        del mem.entries[1]
    return mem


def crop_template_from_search(
    search_features: FeatureMap,
    box: BoundingBox,
    prev_box: BoundingBox,
    template_cells: tuple[int, int] = (16, 16),
    scale: float = 1.0,
    frame_index: int = 0,
    quality: float = 1.0,
) -> TemplateEntry:
    """Cut a template-sized window from search features, centred on ``box``.

    The search features cover a patch centred on ``prev_box``; ``scale`` is
    frame pixels per patch pixel. The window is clamped to the map.
    """
    th, tw = template_cells
    H, W = search_features.height, search_features.width
    stride = search_features.stride
    (bx, by), (px, py) = box.center, prev_box.center
    dx_px = (bx - px) / scale
    dy_px = (by - py) / scale
    half_w, half_h = W * stride / 2.0, H * stride / 2.0
    if abs(dx_px) > half_w or abs(dy_px) > half_h:
        raise LostTarget(f"box centre offset ({dx_px:.1f}, {dy_px:.1f}) px is outside the search region")
    top = int(np.floor((H - th) / 2.0 + dy_px / stride + 0.5))
    left = int(np.floor((W - tw) / 2.0 + dx_px / stride + 0.5))
    top = min(max(top, 0), H - th)
    left = min(max(left, 0), W - tw)
    window = search_features.values[:, top:top + th, left:left + tw].copy()
    return TemplateEntry(FeatureMap(window, stride), frame_index, quality)


def integrated_score(
    mem: TemplateMemory,
    search_features: FeatureMap,
    cfg: CorrelationConfig = CorrelationConfig(),
    quality_weighted: bool = False,
) -> ScoreMap:
    """Sum of the score maps of every stored template, in stored order."""
    if not mem.entries:
        raise ValueError("integrated_score needs a non-empty memory")
    total = None
    for entry in mem.entries:
        smap = cross_correlate(entry.features, search_features, cfg)
        contrib = smap.values * entry.quality_at_admit if quality_weighted else smap.values
        total = contrib.copy() if total is None else total + contrib
    return ScoreMap(total, smap.stride, smap.origin_offset)


def adapt(
    mem: TemplateMemory,
    search_features: FeatureMap,
    cfg: CorrelationConfig,
    prev_box: BoundingBox,
    scale: float = 1.0,
    frame_index: int = 0,
    quality_weighted: bool = False,
) -> tuple[TemplateEntry, BoundingBox]:
    """Refine the box from the integrated score and cut the adapted template there."""
    smap = integrated_score(mem, search_features, cfg, quality_weighted)
    refined = score_to_bbox(smap, prev_box, scale)
    shape = mem.entries[0].features.values.shape[1:]
    updated = crop_template_from_search(search_features, refined, prev_box, shape, scale, frame_index)
    return updated, refined
