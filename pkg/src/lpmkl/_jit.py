"""Backend selection for the hot loops.

Set ``LPMKL_DISABLE_JIT=1`` to run the pure-numpy implementations instead of
the numba-compiled ones. The flag is read once at import time.
"""
import os

_FLAG = os.environ.get("LPMKL_DISABLE_JIT", "").strip().lower()

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise."""
    if HAVE_NUMBA:
        import numba
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
