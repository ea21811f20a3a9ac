"""Iterative double-refinement monocular depth estimation at desk scale."""

from drnet._core import (
    DrnetError,
    Model,
    __version__,
    bilinear_upsample,
    concat_channels,
    conv2d,
    depth_loss,
    evaluate_metrics,
    grad_loss,
    load_model,
    maxpool2d,
    normal_loss,
    pixel_shuffle,
    precision_bits,
    relu,
    run_gradcheck,
    sobel_gradients,
    synth_scene,
)

__all__ = [
    "DrnetError",
    "Model",
    "__version__",
    "bilinear_upsample",
    "concat_channels",
    "conv2d",
    "depth_loss",
    "evaluate_metrics",
    "grad_loss",
    "load_model",
    "maxpool2d",
    "normal_loss",
    "pixel_shuffle",
    "precision_bits",
    "relu",
    "run_gradcheck",
    "sobel_gradients",
    "synth_scene",
]
