"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The numba backend is used when numba imports cleanly, unless the environment
variable ``GRIDMAP_DISABLE_NUMBA`` is set to a truthy value. Both backends are
importable directly (``numpy_impl``, ``numba_impl``) for cross-checking.
"""

import os

import numpy as np

from . import _numpy_impl as numpy_impl

try:
    from . import _numba_impl as numba_impl
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None

_disabled = os.environ.get("GRIDMAP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

if numba_impl is not None and not _disabled:
    _impl = numba_impl
    BACKEND = "numba"
else:
    _impl = numpy_impl
    BACKEND = "numpy"

lcs_length = _impl.lcs_length
similarity_matrix = _impl.similarity_matrix
pairwise_distance = _impl.pairwise_distance
eps_components = _impl.eps_components


def encode(strings):
    """Pack strings into a zero-padded int32 code matrix plus a length vector."""
    lens = np.array([len(s) for s in strings], dtype=np.int64)
    width = max(1, int(lens.max()) if len(lens) else 1)
    codes = np.zeros((len(strings), width), dtype=np.int32)
    for i, s in enumerate(strings):
        if s:
            codes[i, : len(s)] = np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32)
    return codes, lens


def encode_one(s):
    if not s:
        return np.zeros(0, dtype=np.int32)
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32).astype(np.int32)
