from .experiments import (ExperimentReport, Sample, as_samples, compare, config_label, cross_condition,
                          depth_sweep, evaluate_model, make_folds, run_xval, summarize)
from .render import overlay_rgb, png_bytes, render_error_maps, render_overlay
from .store import load_dataset, read_stack, write_phantom

__all__ = ["ExperimentReport", "Sample", "as_samples", "compare", "config_label", "cross_condition",
           "depth_sweep", "evaluate_model", "make_folds", "run_xval", "summarize", "overlay_rgb",
           "png_bytes", "render_error_maps", "render_overlay", "load_dataset", "read_stack",
           "write_phantom"]
