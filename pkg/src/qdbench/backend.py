"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy fallback. Set ``QDBENCH_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import logging
import os
from types import ModuleType

from . import _fallback

logger = logging.getLogger(__name__)

_KERNEL_NAMES = ("mlp_forward", "rollout_omni", "rollout_uni", "nearest_centroid")


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("QDBENCH_PURE_PYTHON", "").strip() not in ("", "0"):
        return _fallback, "python"
    try:
        from . import _kernels
    except ImportError:
        logger.info("compiled kernels unavailable, using numpy fallback")
        return _fallback, "python"
    return _kernels, "compiled"


kernels, BACKEND = _load()


def get(name: str) -> ModuleType:
    """Return a kernel module by backend name ('compiled' or 'python')."""
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def available() -> list[str]:
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return names
    return ["compiled"] + names
