"""Color-space conversion, bilinear resizing and JPEG round-trip primitives.

Conventions used throughout the package:
  * images are float64 numpy arrays of shape (H, W, 3), channels last
  * RGB values live in [0, 1]; YCbCr uses the full-range BT.601 matrix with
    neutral chroma at 0.5 (Y in [0, 1], Cb/Cr in [0, 1])
  * conversions never clamp; clamping is an explicit caller step so the
    maps stay affine (required by the adjoint and linearity tests)
  * disk mapping between [0, 1] and 8-bit is round(v * 255) / 255
"""

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import _kernels

RGB = "rgb"
YCBCR = "ycbcr"

# Full-range BT.601: ycbcr = rgb @ _RGB2YCC.T + _YCC_OFFSET
_RGB2YCC = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
])
_YCC_OFFSET = np.array([0.0, 0.5, 0.5])
_YCC2RGB = np.linalg.inv(_RGB2YCC)


class ColorspaceError(ValueError):
    """Operation received an image with the wrong colorspace tag."""


@dataclass
class ImageTensor:
    """An H x W x 3 image with explicit channel semantics."""

    data: np.ndarray
    colorspace: str = RGB

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) image, got {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("image must have at least one pixel per axis")
        if self.colorspace not in (RGB, YCBCR):
            raise ValueError(f"unknown colorspace {self.colorspace!r}")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return 3


def _require(img: ImageTensor, colorspace: str, op: str):
    if img.colorspace != colorspace:
        raise ColorspaceError(f"{op} expects a {colorspace} image, got {img.colorspace}")


def rgb_to_ycbcr(img: ImageTensor) -> ImageTensor:
    """Full-range BT.601 RGB -> YCbCr. Affine and differentiable."""
    _require(img, RGB, "rgb_to_ycbcr")
    return ImageTensor(rgb_to_ycbcr_array(img.data), YCBCR)


def ycbcr_to_rgb(img: ImageTensor) -> ImageTensor:
    """Exact algebraic inverse of :func:`rgb_to_ycbcr`. No clamping."""
    _require(img, YCBCR, "ycbcr_to_rgb")
    return ImageTensor(ycbcr_to_rgb_array(img.data), RGB)


def rgb_to_ycbcr_array(rgb: np.ndarray) -> np.ndarray:
    return rgb @ _RGB2YCC.T + _YCC_OFFSET


def ycbcr_to_rgb_array(ycc: np.ndarray) -> np.ndarray:
    return (ycc - _YCC_OFFSET) @ _YCC2RGB.T


def resize_bilinear(img: ImageTensor, out_h: int, out_w: int) -> ImageTensor:
    """Half-pixel-center bilinear resize with edge clamping.

    Linear in pixel values; the adjoint is :func:`resize_bilinear_adjoint`.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")
    return ImageTensor(resize_array(img.data, out_h, out_w), img.colorspace)


def resize_array(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")
    return _kernels.resize_forward(np.ascontiguousarray(data, dtype=np.float64), out_h, out_w)


def resize_bilinear_adjoint(grad: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    """Transpose of the resize operator: maps output-space gradients back
    to input-space gradients."""
    return _kernels.resize_adjoint(np.ascontiguousarray(grad, dtype=np.float64), in_h, in_w)


def jpeg_roundtrip(img: ImageTensor, quality: int) -> ImageTensor:
    """Encode with a baseline JPEG codec at the given quality and decode.

    Evaluation-only: the codec is not differentiable.
    """
    _require(img, RGB, "jpeg_roundtrip")
    if not 1 <= int(quality) <= 100:
        raise ValueError(f"JPEG quality must be in 1..100, got {quality}")
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img.data), mode="RGB").save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    out = np.asarray(Image.open(buf).convert("RGB"), dtype=np.float64) / 255.0
    return ImageTensor(out, RGB)


def to_uint8(data: np.ndarray) -> np.ndarray:
    return np.clip(np.round(data * 255.0), 0, 255).astype(np.uint8)


def from_uint8(data: np.ndarray) -> np.ndarray:
    return np.asarray(data, dtype=np.float64) / 255.0


def save_png(path, img: ImageTensor):
    _require(img, RGB, "save_png")
    Image.fromarray(to_uint8(img.data), mode="RGB").save(path, format="PNG")


def load_png(path) -> ImageTensor:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return ImageTensor(arr, RGB)
