"""Adaptive Siamese-style single-object tracking with detector-driven updates."""

from .changedetect import CusumParams, CusumState, Signal, cusum_update, run_cusum
from .detector_sim import (
    Detection,
    DetectorNoiseConfig,
    KalmanParams,
    KalmanTrack,
    associate,
    detect,
    kalman_predict,
    kalman_update,
)
from .embedder import CorrelationConfig, FeatureMap, HandcraftedEmbedder, IdentityEmbedder, ScoreMap, cross_correlate, score_to_bbox
from .errors import ConfigError, DataError, LostTarget
from .geometry import BoundingBox, average_overlap, iou, success_rate
from .memory import TemplateEntry, TemplateMemory, adapt, admit, enforce_budget, integrated_score
from .quality import NCCQuality, track_quality
from .sequence_io import Frame, Patch, Sequence, SyntheticConfig, crop_search, crop_template, generate_synthetic, load_otb_sequence
from .tracker import TrackerConfig, TrackRecord, TrackState, Tracker, UpdatePolicy, run_sequence

__all__ = [
    "BoundingBox",
    "ConfigError",
    "CorrelationConfig",
    "CusumParams",
    "CusumState",
    "DataError",
    "Detection",
    "DetectorNoiseConfig",
    "FeatureMap",
    "Frame",
    "HandcraftedEmbedder",
    "IdentityEmbedder",
    "KalmanParams",
    "KalmanTrack",
    "LostTarget",
    "NCCQuality",
    "Patch",
    "ScoreMap",
    "Sequence",
    "Signal",
    "SyntheticConfig",
    "TemplateEntry",
    "TemplateMemory",
    "TrackRecord",
    "TrackState",
    "Tracker",
    "TrackerConfig",
    "UpdatePolicy",
    "adapt",
    "admit",
    "associate",
    "average_overlap",
    "crop_search",
    "crop_template",
    "cross_correlate",
    "cusum_update",
    "detect",
    "enforce_budget",
    "generate_synthetic",
    "integrated_score",
    "iou",
    "kalman_predict",
    "kalman_update",
    "load_otb_sequence",
    "run_cusum",
    "run_sequence",
    "score_to_bbox",
    "success_rate",
    "track_quality",
]
