"""Pick the compiled event loop when available, else the pure-Python one.

Set ``ROBUSTPATH_KERNEL=python`` to force the fallback.
"""

import logging
import os

from . import _kernel_py

log = logging.getLogger(__name__)

python_kernel = _kernel_py.run_events

try:
    from . import _kernel as _compiled
    compiled_kernel = _compiled.run_events
except ImportError:  # extension not built
    compiled_kernel = None

if os.environ.get("ROBUSTPATH_KERNEL", "").lower() == "python" or compiled_kernel is None:
    run_events = python_kernel
    BACKEND = "python"
else:
    run_events = compiled_kernel
    BACKEND = "cython"

log.debug("simulator kernel backend: %s", BACKEND)
