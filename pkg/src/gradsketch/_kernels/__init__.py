"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the
numpy fallback takes over.  Set GRADSKETCH_BACKEND=numpy (or =cython) to
force a choice; forcing cython raises if the extension is missing.
"""

from __future__ import annotations

import os

_forced = os.environ.get("GRADSKETCH_BACKEND", "").strip().lower()
if _forced not in ("", "cython", "numpy"):
    raise RuntimeError(f"GRADSKETCH_BACKEND must be 'cython' or 'numpy', got {_forced!r}")

BACKEND = "numpy"
if _forced != "numpy":
    try:
        from ._butterfly import (  # noqa: F401
            fwht_rows_f32,
            fwht_rows_f64,
            signed_dot_rows_f32,
            signed_dot_rows_f64,
        )

        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise

if BACKEND == "numpy":
    from ._butterfly_np import (  # noqa: F401
        fwht_rows_f32,
        fwht_rows_f64,
        signed_dot_rows_f32,
        signed_dot_rows_f64,
    )


def fwht_rows(a) -> None:
    """In-place unnormalized Walsh-Hadamard transform of each row of a
    C-contiguous 2-d float array."""
    import numpy as np

    if a.dtype == np.float64:
        fwht_rows_f64(a)
    elif a.dtype == np.float32:
        fwht_rows_f32(a)
    else:
        raise TypeError(f"unsupported dtype {a.dtype}")


def signed_dot_rows(x, seed: int, row_start: int, n_rows: int, out) -> None:
    """Rows [row_start, row_start+n_rows) of the implicit sign matrix
    times x, written into out."""
    import numpy as np

    if x.dtype == np.float64:
        signed_dot_rows_f64(x, seed, row_start, n_rows, out)
    elif x.dtype == np.float32:
        signed_dot_rows_f32(x, seed, row_start, n_rows, out)
    else:
        raise TypeError(f"unsupported dtype {x.dtype}")
