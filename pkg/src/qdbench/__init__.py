"""Quality-Diversity archives, baselines, stochastic tasks and corrected QD metrics."""

__version__ = "0.1.0"

from .archive import Archive, CvtSpec, GridSpec, InsertKind, InsertOutcome, build_centroids  # noqa: E402
from .core import ConfigError, FitnessBounds, Individual, RngStream, clamp_descriptor  # noqa: E402
from .metrics import archive_profile, area_under_profile, max_fitness, qd_score  # noqa: E402
from .tasks import TaskSpec, make_task  # noqa: E402

__all__ = [
    "Archive", "CvtSpec", "GridSpec", "InsertKind", "InsertOutcome", "build_centroids",
    "ConfigError", "FitnessBounds", "Individual", "RngStream", "clamp_descriptor",
    "archive_profile", "area_under_profile", "max_fitness", "qd_score",
    "TaskSpec", "make_task",
]
