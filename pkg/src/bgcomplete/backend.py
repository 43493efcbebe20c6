"""Numeric backend selection for the hot kernels.

Every hot kernel ships in two functionally identical versions: numba
@njit loops and a pure-numpy vectorized path that performs the same
arithmetic in the same per-element order. Selection happens once at
import time via the BGCOMPLETE_BACKEND environment variable:

    BGCOMPLETE_BACKEND=numpy   force the pure-numpy fallback
    BGCOMPLETE_BACKEND=numba   require numba (ImportError if absent)
    BGCOMPLETE_BACKEND=auto    numba when importable, numpy otherwise

Unset behaves like "auto".
"""

import os

_ENV_VAR = "BGCOMPLETE_BACKEND"
_CHOICES = ("auto", "numba", "numpy")


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _resolve() -> str:
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower() or "auto"
    if choice not in _CHOICES:
        raise ValueError(
            f"{_ENV_VAR} must be one of {_CHOICES}, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not _numba_available():
            raise ImportError(
                f"{_ENV_VAR}=numba requested but numba is not importable")
        return "numba"
    return "numba" if _numba_available() else "numpy"


ACTIVE = _resolve()


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return ACTIVE


def set_num_threads(n: int) -> None:
    """Cap worker threads for the numba backend (no-op on numpy)."""
    if ACTIVE == "numba" and n > 0:
        import numba
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
