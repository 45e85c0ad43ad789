"""Kernel selection: compiled extension if importable, numpy otherwise.

Set ``NNRANK_PURE=1`` to force the numpy implementation.
"""
import os

from . import _fallback

if os.environ.get("NNRANK_PURE", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
cp_run = _compiled.cp_run if _compiled is not None else _fallback.cp_run
fallback_cp_run = _fallback.cp_run
compiled_cp_run = _compiled.cp_run if _compiled is not None else None
