"""Frequency-domain attention over the patch.

The patch is converted to YCbCr, each channel is taken to the frequency
domain with an unnormalized forward FFT (DC at index (0, 0)), multiplied
elementwise by a learned real-valued mask, inverse-transformed, converted
back to RGB and clamped to [0, 1].

The mask theta is symmetrized (mirror-pair averaging) before use so the
masked spectrum stays conjugate-symmetric and the inverse transform stays
real. Everything up to the final clamp is linear in the patch, so the
backward pass reuses the same spectral multiply:

    d(input)  = ifft2(theta_s * fft2(grad_out))      (the op is self-adjoint)
    d(theta_s) = Re(S * conj(fft2(grad_out))) / (H*W)  with S = fft2(input)
"""

from dataclasses import dataclass

import numpy as np

from .imaging import rgb_to_ycbcr_array, ycbcr_to_rgb_array, _RGB2YCC, _YCC2RGB

THETA_MAGIC = b"FQTH"
THETA_VERSION = 1


class SpectralSymmetryError(RuntimeError):
    """Masked-spectrum pipeline produced a non-real inverse transform."""


def fft2(channel: np.ndarray) -> np.ndarray:
    """Forward unnormalized 2-D DFT of one real channel, DC at (0, 0)."""
    channel = np.asarray(channel)
    if not np.all(np.isfinite(channel)):
        raise ValueError("fft2 requires finite input")
    return np.fft.fft2(channel)


def ifft2(spec: np.ndarray, max_imag_residual: float = None) -> np.ndarray:
    """Inverse 2-D DFT with 1/(H*W) normalization; returns the real part.

    When ``max_imag_residual`` is given, a larger imaginary residual (which
    signals a broken conjugate symmetry upstream) raises
    :class:`SpectralSymmetryError`.
    """
    out = np.fft.ifft2(spec)
    if max_imag_residual is not None:
        residual = float(np.abs(out.imag).max())
        if residual > max_imag_residual:
            raise SpectralSymmetryError(
                f"imaginary residual {residual:.3e} exceeds {max_imag_residual:.3e}")
    return out.real


def imag_residual(spec: np.ndarray) -> float:
    """Largest imaginary magnitude of the inverse transform of ``spec``."""
    return float(np.abs(np.fft.ifft2(spec).imag).max())


def _mirror(a: np.ndarray) -> np.ndarray:
    # index map (u, v) -> ((-u) mod H, (-v) mod W) on the two leading axes
    return np.roll(np.roll(a[::-1, ::-1], 1, axis=0), 1, axis=1)


def symmetrize_mask(theta: np.ndarray) -> np.ndarray:
    """Average each mask entry with its mirrored counterpart. Idempotent."""
    return 0.5 * (theta + _mirror(theta))


def make_identity_mask(height: int, width: int) -> np.ndarray:
    """The initialization: all-ones, i.e. the attention is a no-op."""
    return np.ones((height, width, 3))


@dataclass
class FranCache:
    """Intermediates needed by the backward pass."""

    spectrum: np.ndarray      # (H, W, 3) complex, per-channel fft of the ycbcr patch
    theta_sym: np.ndarray     # (H, W, 3) symmetrized mask
    pass_mask: np.ndarray     # (H, W, 3) bool, where the clamp is inactive
    preclamp: np.ndarray      # (H, W, 3) RGB output before the clamp
    use_ycbcr: bool


def fran_forward(patch: np.ndarray, theta: np.ndarray, use_ycbcr: bool = True) -> np.ndarray:
    """Apply the frequency attention to an RGB patch in [0, 1]."""
    out, _ = fran_forward_cached(patch, theta, use_ycbcr)
    return out


def fran_forward_cached(patch: np.ndarray, theta: np.ndarray, use_ycbcr: bool = True):
    patch = np.asarray(patch, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if patch.shape != theta.shape:
        raise ValueError(f"patch {patch.shape} and mask {theta.shape} shapes differ")
    planes = rgb_to_ycbcr_array(patch) if use_ycbcr else patch
    theta_s = symmetrize_mask(theta)
    spec = np.fft.fft2(planes, axes=(0, 1))
    mixed = np.fft.ifft2(spec * theta_s, axes=(0, 1))
    residual = float(np.abs(mixed.imag).max())
    if residual > 1e-4:
        raise SpectralSymmetryError(
            f"imaginary residual {residual:.3e} after symmetrized mask")
    mixed = mixed.real
    pre = ycbcr_to_rgb_array(mixed) if use_ycbcr else mixed
    pass_mask = (pre >= 0.0) & (pre <= 1.0)
    out = np.clip(pre, 0.0, 1.0)
    cache = FranCache(spectrum=spec, theta_sym=theta_s, pass_mask=pass_mask,
                      preclamp=pre, use_ycbcr=use_ycbcr)
    return out, cache


def fran_backward(cache: FranCache, grad_out: np.ndarray):
    """Gradients of a scalar loss w.r.t. the patch and the raw mask.

    ``grad_out`` is the loss gradient at the clamped output.
    """
    g = np.where(cache.pass_mask, grad_out, 0.0)
    # rgb <- ycbcr map is x @ _YCC2RGB.T, adjoint multiplies by _YCC2RGB
    g_mixed = g @ _YCC2RGB if cache.use_ycbcr else g
    g_spec = np.fft.fft2(g_mixed, axes=(0, 1))
    h, w = g_mixed.shape[:2]
    grad_theta_s = (cache.spectrum * np.conj(g_spec)).real / (h * w)
    grad_theta = symmetrize_mask(grad_theta_s)
    g_planes = np.fft.ifft2(cache.theta_sym * g_spec, axes=(0, 1)).real
    grad_patch = g_planes @ _RGB2YCC if cache.use_ycbcr else g_planes
    return grad_patch, grad_theta


def mask_visualization(theta: np.ndarray) -> np.ndarray:
    """Grayscale view of the Y-channel mask, DC shifted to the center.

    Min-max normalized to [0, 1]; a constant mask maps to all zeros.
    Returned as (H, W, 3) so it saves as a regular image.
    """
    plane = symmetrize_mask(np.asarray(theta, dtype=np.float64))[:, :, 0]
    plane = np.fft.fftshift(plane)
    lo, hi = float(plane.min()), float(plane.max())
    if hi - lo < 1e-12:
        norm = np.zeros_like(plane)
    else:
        norm = (plane - lo) / (hi - lo)
    return np.repeat(norm[:, :, None], 3, axis=2)


def save_theta(path, theta: np.ndarray):
    """Raw binary mask file: magic, version, dims, then row-major float32
    planes in Y, Cb, Cr channel order."""
    theta = np.asarray(theta)
    if theta.ndim != 3 or theta.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) mask, got {theta.shape}")
    h, w, c = theta.shape
    with open(path, "wb") as f:
        f.write(THETA_MAGIC)
        f.write(np.array([THETA_VERSION, h, w, c], dtype="<u4").tobytes())
        f.write(theta.astype("<f4").tobytes(order="C"))


def load_theta(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != THETA_MAGIC:
            raise ValueError(f"not a mask file: bad magic {magic!r}")
        version, h, w, c = np.frombuffer(f.read(16), dtype="<u4")
        if version != THETA_VERSION:
            raise ValueError(f"unsupported mask file version {version}")
        data = np.frombuffer(f.read(int(h) * int(w) * int(c) * 4), dtype="<f4")
    return data.reshape(int(h), int(w), int(c)).astype(np.float64)
