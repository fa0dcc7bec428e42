from .buffer import ImageBuffer, export_png, finish, load_png, png_bytes, resample_box, to_rgba
from .evaluate import (
    CHANNEL_DEFAULTS, EngineError, RenderCache, RenderSettings, composite, default_channel,
    eval_graph, eval_node, render_composite,
)
from .kernels import (
    KernelError, blend, blur_box_px, blur_gaussian_px, gradient_map, grayscale_conversion,
    invert, levels, normal_from_height, transform_2d,
)

__all__ = [
    "ImageBuffer", "export_png", "finish", "load_png", "png_bytes", "resample_box", "to_rgba",
    "CHANNEL_DEFAULTS", "EngineError", "RenderCache", "RenderSettings", "composite",
    "default_channel", "eval_graph", "eval_node", "render_composite", "KernelError", "blend",
    "blur_box_px", "blur_gaussian_px", "gradient_map", "grayscale_conversion", "invert",
    "levels", "normal_from_height", "transform_2d",
]
