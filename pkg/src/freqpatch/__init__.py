"""Adversarial patches against an objectness detector, with a learned
frequency-domain attention mask guiding patch generation."""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
