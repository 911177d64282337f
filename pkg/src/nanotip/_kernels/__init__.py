"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when the
extension is missing or when NANOTIP_BACKEND=python is set.  Both expose
``trajectory_batch`` and ``cn_propagate`` with identical signatures.
"""
import os

from . import pykernels

if os.environ.get("NANOTIP_BACKEND", "").lower() == "python":
    _impl = pykernels
else:
    try:
        from . import cykernels as _impl
    except ImportError:
        _impl = pykernels

trajectory_batch = _impl.trajectory_batch
cn_propagate = _impl.cn_propagate
BACKEND_NAME = _impl.BACKEND_NAME


def available_backends():
    """Names of the kernel backends importable in this environment."""
    names = ["python"]
    try:
        from . import cykernels  # noqa: F401
        names.insert(0, "cython")
    except ImportError:
        pass
    return names
