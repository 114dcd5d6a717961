"""Backend selection for the hot loops.

The compiled extension ``bpsynth._kernels`` is used when it imports;
otherwise the numpy implementation in ``bpsynth._fallback`` is used.
Set ``BPS_BACKEND=python`` to force the fallback, or ``BPS_BACKEND=cython``
to make a missing extension an import error.
"""
import importlib
import os

from . import _fallback

_requested = os.environ.get("BPS_BACKEND", "").strip().lower()


def load_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _fallback
    if name == "cython":
        return importlib.import_module("bpsynth._kernels")
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        load_backend("cython")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


if _requested == "python":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        _impl = load_backend("cython")
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        _impl = _fallback
        BACKEND = "python"

theta_ffbs = _impl.theta_ffbs
gaussian_states = _impl.gaussian_states
vol_backward = _impl.vol_backward
