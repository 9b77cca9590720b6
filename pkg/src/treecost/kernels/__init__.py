"""Kernel backend selection.

The compiled extension (``_ckernels``) is used when it built successfully;
otherwise the numpy fallback (``pykernels``) is selected. Set
TREECOST_KERNELS=py or TREECOST_KERNELS=c to force a backend (forcing ``c``
raises if the extension is unavailable).

Both backends implement the same contract; per run the numerics are
deterministic, but the two backends may differ in the last bits because
float summation order differs.
"""

from __future__ import annotations

import os

from . import pykernels

_forced = os.environ.get("TREECOST_KERNELS")

if _forced == "py":
    impl = pykernels
elif _forced in (None, "", "c"):
    try:
        from . import _ckernels as impl
    except ImportError:
        if _forced == "c":
            raise
        impl = pykernels
else:
    raise ValueError(f"TREECOST_KERNELS must be 'c' or 'py', got {_forced!r}")

BACKEND = impl.NAME

matmul = impl.matmul
dense_fwd = impl.dense_fwd
dense_bwd = impl.dense_bwd
tree_fwd = impl.tree_fwd
tree_bwd = impl.tree_bwd
embed_fwd = impl.embed_fwd
embed_bwd = impl.embed_bwd
adam_update = impl.adam_update


def available_backends():
    """Importable backend modules, for tests and benchmarks."""
    backends = [pykernels]
    try:
        from . import _ckernels
        backends.append(_ckernels)
    except ImportError:
        pass
    return backends
