"""Appearance-based loop-closure detection from superpixel-grid histograms."""

from .core import (
    ConfigError,
    GrayImage,
    InputError,
    Mode,
    PipelineConfig,
    SegmentationConfig,
    to_grayscale,
)
from .descriptor import Lsgd, extract_lsgd, l1_cell_distance, sim_score
from .nodedb import NodeDatabase, NodeSelection
from .pipeline import DetectionResult, LoopDetector, exhaustive_query
from .segmentation import GridCenter, Segmentation, fuse_distance, init_centers, segment

__all__ = [
    "ConfigError",
    "DetectionResult",
    "GrayImage",
    "GridCenter",
    "InputError",
    "LoopDetector",
    "Lsgd",
    "Mode",
    "NodeDatabase",
    "NodeSelection",
    "PipelineConfig",
    "Segmentation",
    "SegmentationConfig",
    "exhaustive_query",
    "extract_lsgd",
    "fuse_distance",
    "init_centers",
    "l1_cell_distance",
    "segment",
    "sim_score",
    "to_grayscale",
]

__version__ = "0.1.0"
