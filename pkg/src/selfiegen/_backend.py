"""Select the kernel backend at import time.

The compiled ``_kernels`` extension is preferred. Set ``SELFIEGEN_BACKEND=python``
to force the numpy fallback, or call :func:`use` at runtime (tests and the
benchmark do this to compare both).
"""

import importlib
import logging
import os

log = logging.getLogger(__name__)

_MODULES = {"cython": "selfiegen._kernels", "python": "selfiegen._fallback"}


def available():
    """Names of the backends that can be imported here."""
    names = []
    for name, mod in _MODULES.items():
        try:
            importlib.import_module(mod)
        except ImportError:
            continue
        names.append(name)
    return names


def _load(name):
    if name not in _MODULES:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(_MODULES)}")
    return importlib.import_module(_MODULES[name])


def _default():
    requested = os.environ.get("SELFIEGEN_BACKEND", "").strip().lower()
    if requested:
        return _load(requested)
    try:
        return _load("cython")
    except ImportError:
        log.debug("compiled kernels unavailable, using numpy fallback")
        return _load("python")


kernels = _default()


def use(name):
    """Switch the active backend; returns the previous backend name."""
    global kernels
    previous = kernels.NAME
    kernels = _load(name)
    return previous


def name():
    return kernels.NAME
