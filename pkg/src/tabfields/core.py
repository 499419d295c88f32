"""Search-kernel backend selection.

The compiled extension is used when importable; set ``TABFIELDS_PURE_PYTHON=1``
to force the pure-Python kernel. Both produce identical results.
"""
import os

from . import _pycore

BACKEND = "python"
search = _pycore.search

if not os.environ.get("TABFIELDS_PURE_PYTHON"):
    try:
        from . import _core
    except ImportError:  # extension not built
        _core = None
    else:
        BACKEND = "compiled"
        search = _core.search

python_search = _pycore.search


def compiled_search():
    """The compiled kernel, or None when the extension is unavailable."""
    try:
        from . import _core as mod
    except ImportError:
        return None
    return mod.search
