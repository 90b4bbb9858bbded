"""Adaptive CUSUM on the track-quality stream.

The running mean is taken over the samples since the last reset and the
statistic accumulates drops below that mean::

    g_i = max(g_{i-1} - (y_i - mean_{i-1}) - nu, 0)

Two thresholds classify an alarm: above ``beta_high`` it is abrupt (and the
state is reset), above ``beta_low`` it is gradual.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple


class Signal(str, enum.Enum):
    NONE = "none"
    GRADUAL = "gradual"
    ABRUPT = "abrupt"


@dataclass(frozen=True)
class CusumParams:
    nu: float = 0.05
    beta_low: float = 1.0
    beta_high: float = 3.0
    alpha: float = 0.8
    # reset g after a gradual alarm instead of letting it keep accumulating
    reset_on_gradual: bool = False

    def __post_init__(self) -> None:
        if not self.nu >= 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if not 0 < self.beta_low:
            raise ValueError(f"beta_low must be > 0, got {self.beta_low}")
        if not (self.beta_low < self.beta_high or (math.isinf(self.beta_low) and math.isinf(self.beta_high))):
            raise ValueError(f"beta_high ({self.beta_high}) must exceed beta_low ({self.beta_low})")


class CusumState(NamedTuple):
    # a tuple rather than a dataclass: it is rebuilt once per sample
    i0: int = 0
    count: int = 0
    theta_hat: float = 0.0
    g: float = 0.0

    @classmethod
    def reset(cls, frame_index: int = 0) -> "CusumState":
        return cls(i0=frame_index)


def accumulate(state: CusumState, params: CusumParams, y: float) -> CusumState:
    """The bare recursion: new statistic from the pre-update mean, then the mean update."""
    if state.count == 0:
        # first sample after a reset defines the mean; nothing to compare against yet
        return CusumState(state.i0, 1, float(y), max(state.g - params.nu, 0.0))
    g = max(state.g - (y - state.theta_hat) - params.nu, 0.0)
    count = state.count + 1
    return CusumState(state.i0, count, state.theta_hat + (y - state.theta_hat) / count, g)


def classify(g: float, params: CusumParams) -> Signal:
    if g > params.beta_high:
        return Signal.ABRUPT
    if g > params.beta_low:
        return Signal.GRADUAL
    return Signal.NONE


def _advance(state: CusumState, params: CusumParams, y: float, i0: int) -> tuple[CusumState, CusumState, Signal]:
    # (pre-reset state, post-alarm state, signal)
    new = accumulate(state, params, y)
    signal = classify(new.g, params)
    if signal is Signal.ABRUPT:
        return new, CusumState.reset(i0), signal
    if signal is Signal.GRADUAL and params.reset_on_gradual:
        return new, CusumState(new.i0, new.count, new.theta_hat, 0.0), signal
    return new, new, signal


def cusum_update(
    state: CusumState, params: CusumParams, y: float, frame_index: int | None = None
) -> tuple[CusumState, Signal]:
    """Feed one quality sample; returns the post-alarm state and the alarm level.

    An abrupt alarm resets the state with ``i0`` moved to ``frame_index``
    (or to the sample's ordinal when not given).
    """
    i0 = state.i0 + state.count + 1 if frame_index is None else frame_index
    _, post, signal = _advance(state, params, y, i0)
    return post, signal


def run_cusum(stream, params: CusumParams) -> tuple[list[float], list[Signal]]:
    """Apply the detector to a whole stream; returns pre-reset ``g`` values and signals."""
    state = CusumState.reset()
    gs, signals = [], []
    for i, y in enumerate(stream, start=1):
        new, state, sig = _advance(state, params, y, i)
        gs.append(new.g)
        signals.append(sig)
    return gs, signals
