"""Feature embedding and dense cross-correlation scoring.

The response map is ``f(z, x) = phi(z) * phi(x) + b`` evaluated over every
valid (unpadded) placement of the template features inside the search
features. Any object with ``stride``, ``channels`` and ``embed(patch)`` can be
used as an embedder; two are provided here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geometry import BoundingBox
from .sequence_io import Patch

# windows with total centred energy below this are treated as flat
_FLAT_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Feature values shaped ``(channels, height, width)``; ``stride`` is patch pixels per cell."""

    values: np.ndarray
    stride: int

    def __post_init__(self) -> None:
        if self.values.ndim != 3:
            raise ValueError(f"feature map must be 3-D (C, H, W), got shape {self.values.shape}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """Correlation response.

    ``origin_offset`` is the ``(dy, dx)`` displacement, in search-patch pixels,
    that cell ``(0, 0)`` encodes relative to the search-patch centre.
    """

    values: np.ndarray
    stride: int
    origin_offset: tuple[float, float]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def displacement(self, row: int, col: int) -> tuple[float, float]:
        return (self.origin_offset[0] + row * self.stride, self.origin_offset[1] + col * self.stride)


@dataclass(frozen=True)
class CorrelationConfig:
    bias: float = 0.0
    window_weight: float = 0.2
    normalize: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.window_weight <= 1.0:
            raise ValueError(f"window_weight must be in [0, 1], got {self.window_weight}")


class Embedder(Protocol):
    stride: int
    channels: int

    def embed(self, patch: Patch) -> FeatureMap: ...


def _pool(arr: np.ndarray, stride: int) -> np.ndarray:
    c, h, w = arr.shape
    h2, w2 = h // stride, w // stride
    arr = arr[:, : h2 * stride, : w2 * stride]
    return arr.reshape(c, h2, stride, w2, stride).mean(axis=(2, 4))


class HandcraftedEmbedder:
    """Intensity plus absolute horizontal/vertical gradients, average-pooled by ``stride``.

    Gradients are central differences of the grey image (one-sided at the
    borders), multiplied by ``gradient_gain`` so they carry weight comparable
    to intensity under normalised correlation.
    """

    channels = 3

    def __init__(self, stride: int = 4, gradient_gain: float = 1.0):
        self.stride = stride
        self.gradient_gain = gradient_gain

    def embed(self, patch: Patch) -> FeatureMap:
        grey = np.asarray(patch.pixels, dtype=np.float64).mean(axis=2)
        gy, gx = np.gradient(grey)
        stack = np.stack([grey, self.gradient_gain * np.abs(gx), self.gradient_gain * np.abs(gy)])
        return FeatureMap(_pool(stack, self.stride), self.stride)


class IdentityEmbedder:
    """Raw pixels, channels first. Used for oracles and as a reference scorer."""

    def __init__(self, stride: int = 1, channels: int = 1):
        self.stride = stride
        self.channels = channels

    def embed(self, patch: Patch) -> FeatureMap:
        arr = np.moveaxis(np.asarray(patch.pixels, dtype=np.float64), 2, 0)
        return FeatureMap(_pool(arr, self.stride) if self.stride > 1 else arr.copy(), self.stride)


def cosine_window(height: int, width: int) -> np.ndarray:
    win = np.outer(np.hanning(height), np.hanning(width))
    peak = win.max()
    return win / peak if peak > 0 else np.ones((height, width))


def _raw_correlation(template: np.ndarray, search: np.ndarray) -> np.ndarray:
    windows = sliding_window_view(search, template.shape[1:], axis=(1, 2))
    return np.einsum("crsij,cij->rs", windows, template)


def _normalized_correlation(template: np.ndarray, search: np.ndarray) -> np.ndarray:
    c, th, tw = template.shape
    n = th * tw
    t = template - template.mean(axis=(1, 2), keepdims=True)
    t_norm = np.sqrt((t * t).sum())
    windows = sliding_window_view(search, (th, tw), axis=(1, 2))
    num = np.einsum("crsij,cij->rs", windows, t)
    sums = windows.sum(axis=(3, 4))
    sq = (windows * windows).sum(axis=(3, 4))
    energy = (sq - sums * sums / n).sum(axis=0)
    out = np.zeros(num.shape)
    if t_norm * t_norm <= _FLAT_EPS:
        return out
    ok = energy > _FLAT_EPS
    out[ok] = num[ok] / (t_norm * np.sqrt(energy[ok]))
    return np.clip(out, -1.0, 1.0)


def cross_correlate(template: FeatureMap, search: FeatureMap, cfg: CorrelationConfig = CorrelationConfig()) -> ScoreMap:
    """Valid sliding correlation of ``template`` over ``search`` plus bias.

    With ``cfg.normalize`` every window is compared after per-channel mean
    removal and scaling to unit norm, so the score before bias lies in
    [-1, 1]; flat windows score 0. A cosine window weighted by
    ``cfg.window_weight`` multiplies the correlation before the bias is added.
    """
    if template.channels != search.channels:
        raise ValueError(f"channel mismatch: template {template.channels}, search {search.channels}")
    if template.stride != search.stride:
        raise ValueError(f"stride mismatch: template {template.stride}, search {search.stride}")
    if template.height > search.height or template.width > search.width:
        raise ValueError(
            f"template {template.height}x{template.width} does not fit in search {search.height}x{search.width}"
        )
    if cfg.normalize:
        score = _normalized_correlation(template.values, search.values)
    else:
        score = _raw_correlation(template.values, search.values)
    if cfg.window_weight > 0:
        score = score * ((1.0 - cfg.window_weight) + cfg.window_weight * cosine_window(*score.shape))
    score = score + cfg.bias
    h, w = score.shape
    s = search.stride
    origin = (-(h - 1) / 2.0 * s, -(w - 1) / 2.0 * s)
    return ScoreMap(score, s, origin)


def peak(smap: ScoreMap) -> tuple[int, int]:
    """Argmax cell; ties resolve to the smallest row, then column."""
    idx = int(np.argmax(smap.values))
    return divmod(idx, smap.width)


def score_to_bbox(smap: ScoreMap, prev_box: BoundingBox, scale: float = 1.0) -> BoundingBox:
    """Translate ``prev_box`` by the peak's displacement; ``scale`` is frame pixels per patch pixel."""
    row, col = peak(smap)
    dy, dx = smap.displacement(row, col)
    return prev_box.translate(dx * scale, dy * scale)
