"""Green's functions, heat kernels and semilinear integral equations on hyperbolic space."""
from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402

__all__ = ["__version__", "BACKEND"]
