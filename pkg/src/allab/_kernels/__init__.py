"""Kernel backend selection.

The compiled Cython core is used when it importable; set ``ALLAB_KERNEL`` to
``python`` or ``compiled`` to force a backend.  ``active`` holds the selected
module; :func:`use` swaps it (intended for tests and benchmarks).
"""

import os

from . import _numpy as numpy_backend

try:
    from . import _core as compiled_backend
except ImportError:
    compiled_backend = None

_FORCED = os.environ.get("ALLAB_KERNEL", "").strip().lower()
if _FORCED == "python":
    active = numpy_backend
elif _FORCED == "compiled":
    if compiled_backend is None:
        raise ImportError(
            "ALLAB_KERNEL=compiled but the compiled core is not built; "
            "reinstall with Cython and a C compiler available")
    active = compiled_backend
elif _FORCED:
    raise ImportError(f"ALLAB_KERNEL must be 'python' or 'compiled', got {_FORCED!r}")
else:
    active = compiled_backend if compiled_backend is not None else numpy_backend


def backend_name() -> str:
    return active.NAME


def use(name):
    """Switch the active backend ('python' or 'compiled'); ``None`` restores
    the default preference.  Returns the module now active."""
    global active
    if name is None:
        active = (compiled_backend if compiled_backend is not None
                  else numpy_backend)
    elif name == "python":
        active = numpy_backend
    elif name == "compiled":
        if compiled_backend is None:
            raise ImportError("compiled kernel core is not built")
        active = compiled_backend
    else:
        raise ValueError(f"unknown backend {name!r}")
    return active
