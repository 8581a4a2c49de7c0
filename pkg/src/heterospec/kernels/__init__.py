"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; otherwise the
pure-Python reference implementation is used.  Set ``HETEROSPEC_PURE=1`` to
force the fallback.  Both backends implement identical semantics (defined in
``_reference``); ``benchmarks/bench_kernels.py`` compares their speed.
"""

import os

from . import _reference

if os.environ.get("HETEROSPEC_PURE") == "1":
    _impl = _reference
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _reference

Matcher = _impl.Matcher
backend = _impl.backend
COUNT_CAP = _impl.COUNT_CAP

__all__ = ["Matcher", "backend", "COUNT_CAP"]
