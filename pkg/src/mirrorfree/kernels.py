"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
fallback is used.  Set ``MIRRORFREE_KERNELS=python`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("MIRRORFREE_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

cubic_blocks = _impl.cubic_blocks
quartic_saddle = _impl.quartic_saddle
quartic_game = _impl.quartic_game
segment_sums = _impl.segment_sums

__all__ = ["BACKEND", "cubic_blocks", "quartic_saddle", "quartic_game", "segment_sums"]
