"""Track-quality score: similarity of the tracked crop to the initial target.

The score is a deterministic stand-in for a learned similarity network:
normalised correlation of the two crops' feature vectors, mapped from
[-1, 1] to [0, 1]. Crops are taken tight on the box, without context.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .embedder import Embedder, FeatureMap, HandcraftedEmbedder
from .geometry import BoundingBox
from .sequence_io import TEMPLATE_SIZE, Frame, Patch, crop_template


@dataclass(frozen=True, eq=False)
class QualityReference:
    reference_patch: Patch
    reference_features: FeatureMap


@dataclass(frozen=True)
class QualityScore:
    y: float
    frame_index: int


class QualityScorer(Protocol):
    def reference(self, frame: Frame, box: BoundingBox) -> QualityReference: ...

    def score(self, ref: QualityReference, frame: Frame, box: BoundingBox) -> QualityScore: ...


def feature_ncc(a: np.ndarray, b: np.ndarray) -> float | None:
    """Correlation of two feature arrays after per-channel centring; ``None`` if either is flat."""
    a = a - a.mean(axis=(1, 2), keepdims=True)
    b = b - b.mean(axis=(1, 2), keepdims=True)
    na = np.sqrt((a * a).sum())
    nb = np.sqrt((b * b).sum())
    if na <= 1e-12 or nb <= 1e-12:
        return None
    return float(np.clip((a * b).sum() / (na * nb), -1.0, 1.0))


class NCCQuality:
    """Normalised-correlation surrogate for the learned similarity network."""

    def __init__(self, embedder: Embedder | None = None, crop_size: int = TEMPLATE_SIZE):
        self.embedder = embedder if embedder is not None else HandcraftedEmbedder()
        self.crop_size = crop_size

    def crop(self, frame: Frame, box: BoundingBox) -> Patch:
        return crop_template(frame, box, context_margin=0.0, out_size=self.crop_size)

    def reference(self, frame: Frame, box: BoundingBox) -> QualityReference:
        patch = self.crop(frame, box)
        return QualityReference(patch, self.embedder.embed(patch))

    def score_patch(self, ref: QualityReference, current_crop: Patch, frame_index: int = 0) -> QualityScore:
        ncc = feature_ncc(ref.reference_features.values, self.embedder.embed(current_crop).values)
        y = 0.5 if ncc is None else 0.5 * (1.0 + ncc)
        return QualityScore(y, frame_index)

    def score(self, ref: QualityReference, frame: Frame, box: BoundingBox) -> QualityScore:
        return self.score_patch(ref, self.crop(frame, box), frame.index)


def track_quality(ref: QualityReference, current_crop: Patch, embedder: Embedder | None = None) -> QualityScore:
    return NCCQuality(embedder).score_patch(ref, current_crop)
