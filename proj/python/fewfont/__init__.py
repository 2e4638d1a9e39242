"""Few-shot font generation: cross-attention style aggregation over a
compositional glyph dataset, with reference selection and GAN training."""

from fewfont._core import (
    DataError,
    ParseFailure,
    ShapeError,
    TrainingDiverged,
    ValidationError,
    conv2d,
    generate,
    grad_check_sum_squares,
    map_refs,
    matmul,
    pixel_metrics,
    render_glyph,
    search_components,
    select_refs,
    softmax_rows,
    ssim,
    synth_dataset,
    train,
)

__all__ = [
    "DataError",
    "ParseFailure",
    "ShapeError",
    "TrainingDiverged",
    "ValidationError",
    "conv2d",
    "generate",
    "grad_check_sum_squares",
    "map_refs",
    "matmul",
    "pixel_metrics",
    "render_glyph",
    "search_components",
    "select_refs",
    "softmax_rows",
    "ssim",
    "synth_dataset",
    "train",
]
