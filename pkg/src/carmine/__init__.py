"""Demographic association analysis: cleaning, binning, chi-square tests,
self-organizing maps and class association rules."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.1.0"

from ._accel import backend_name  # noqa: E402
from .pipeline import RunConfig, run_pipeline  # noqa: E402

__all__ = ["RunConfig", "__version__", "backend_name", "run_pipeline"]
