"""Backend selection for the hot kernels.

Numba is used when importable unless ``SOLITONQ_NUMBA=0`` is set in the
environment. Every jitted kernel has a pure-numpy twin in ``kernels`` and the
two are expected to agree to the last bit on the same inputs.
"""
import contextlib
import os

try:
    import numba
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

_FALSY = {"0", "false", "no", "off"}

_use_numba = HAVE_NUMBA and os.environ.get("SOLITONQ_NUMBA", "1").strip().lower() not in _FALSY


def use_numba():
    return _use_numba


def backend():
    return "numba" if _use_numba else "numpy"


def set_backend(name):
    global _use_numba
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _use_numba = name == "numba"


@contextlib.contextmanager
def forced_backend(name):
    previous = backend()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def jit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if args and callable(args[0]):
        return njit(**kwargs)(args[0])
    return njit(*args, **kwargs)


def worker_count(default=1):
    raw = os.environ.get("SOLITONQ_WORKERS")
    if not raw:
        return default
    n = int(raw)
    if n < 1:
        raise ValueError("SOLITONQ_WORKERS must be >= 1")
    return n
