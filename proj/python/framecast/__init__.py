"""Conditional-diffusion video prediction and PSNR-based anomaly scoring."""

from ._core import (
    DiffusionSchedule,
    FramecastError,
    classify,
    ddpm_step,
    estimate_x0,
    forward_sample,
    make_linear_schedule,
    plan_windows,
    psnr,
    regular_score,
    roc_auc,
    synth_clip,
    time_embedding,
)

__all__ = [
    "DiffusionSchedule",
    "FramecastError",
    "classify",
    "ddpm_step",
    "estimate_x0",
    "forward_sample",
    "make_linear_schedule",
    "plan_windows",
    "psnr",
    "regular_score",
    "roc_auc",
    "synth_clip",
    "time_embedding",
]
