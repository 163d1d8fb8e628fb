"""Kernel backend selection.

Hot inner loops are compiled with numba when available.  Setting the
environment variable ``PRESENCE_LAB_NO_NUMBA=1`` before import selects the
pure Python/NumPy fallbacks instead (same draw-consumption order, so a fixed
seed gives the same estimates on either backend).
"""
from __future__ import annotations

import os

ENV_FLAG = "PRESENCE_LAB_NO_NUMBA"


def numba_requested() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() not in {"1", "true", "yes"}


def load_numba():
    if not numba_requested():
        return None
    try:
        import numba
    except ImportError:
        return None
    return numba


NUMBA = load_numba()


def active_backend() -> str:
    return "numba" if NUMBA is not None else "python"
