"""HDR dynamic radiance field reconstruction from alternating-exposure video.

Thin python surface over the C++ core: geometry, tone-mapping, volume
compositing, metrics, the synthetic-scene oracle and the training loop.
"""

from hdrfield._core import (
    CameraModel,
    CrfParams,
    apply_crf,
    composite,
    crf_recovery_error,
    encode,
    generate_dataset,
    generate_ray,
    mulaw,
    oracle_render,
    preset_scene_json,
    project,
    psnr,
    render,
    sample_along_ray,
    ssim,
    train,
)

__all__ = [
    "CameraModel",
    "CrfParams",
    "apply_crf",
    "composite",
    "crf_recovery_error",
    "encode",
    "generate_dataset",
    "generate_ray",
    "mulaw",
    "oracle_render",
    "preset_scene_json",
    "project",
    "psnr",
    "render",
    "sample_along_ray",
    "ssim",
    "train",
]

__version__ = "0.1.0"
