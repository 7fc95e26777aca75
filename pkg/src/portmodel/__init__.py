"""Static in-core performance model for loop kernels on three server CPUs."""

__version__ = "0.1.0"

from .asm import parse_listing  # noqa: E402
from .machine import load_model  # noqa: E402
from .predictor import predict  # noqa: E402

__all__ = ["load_model", "parse_listing", "predict", "__version__"]
