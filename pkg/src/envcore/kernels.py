"""Backend selection for the hot sweep kernel.

The compiled extension is preferred when present; ENVCORE_BACKEND=python
forces the fallback (useful for the benchmark and for debugging).
"""

import os

if os.environ.get("ENVCORE_BACKEND", "").lower() == "python":
    from . import _sweep_py as _impl
else:
    try:
        from . import _sweep_cy as _impl
    except ImportError:
        from . import _sweep_py as _impl

BACKEND = _impl.BACKEND
sweep = _impl.sweep
update_column = _impl.update_column
