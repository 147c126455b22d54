"""Python interface to the repose pose-estimation core."""

from ._repose import (
    Model,
    SkeletonGraph,
    build_schedule,
    collision_probability,
    decode_peak,
    default_skeleton,
    desk_config_json,
    paper_config_json,
    partial_mse,
    synth_dataset,
    synth_heatmap,
)

__all__ = [
    "Model",
    "SkeletonGraph",
    "build_schedule",
    "collision_probability",
    "decode_peak",
    "default_skeleton",
    "desk_config_json",
    "paper_config_json",
    "partial_mse",
    "synth_dataset",
    "synth_heatmap",
]

__version__ = "0.1.0"
