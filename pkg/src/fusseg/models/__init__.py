from .nets import ArchConfig, SegmentationNet, build_model, count_parameters
from .training import (FrameWindow, FusSegModel, apply_transform, augment, predict,
                       sample_frame_window, train)

__all__ = ["ArchConfig", "SegmentationNet", "build_model", "count_parameters", "FrameWindow",
           "FusSegModel", "apply_transform", "augment", "predict", "sample_frame_window", "train"]
