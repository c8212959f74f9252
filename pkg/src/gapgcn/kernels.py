"""Backend dispatch for the edge scatter/gather kernels.

At import time the compiled extension is preferred; set GAPGCN_BACKEND to
"numpy" or "cython" to force one. `set_backend` switches at runtime (used by
the benchmark and by tests comparing the two implementations).
"""

from __future__ import annotations

import os

from . import _np_kernels

try:
    from . import _ckern
except ImportError:  # pragma: no cover - depends on build environment
    _ckern = None

_impl = None
BACKEND = ""


def available_backends() -> list[str]:
    names = ["numpy"]
    if _ckern is not None:
        names.insert(0, "cython")
    return names


def set_backend(name: str) -> None:
    global _impl, BACKEND
    if name == "auto":
        name = "cython" if _ckern is not None else "numpy"
    if name == "cython":
        if _ckern is None:
            raise RuntimeError("compiled kernel extension is not available")
        _impl = _ckern
    elif name == "numpy":
        _impl = _np_kernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    BACKEND = name


def scaled_row_scatter(out, out_idx, mat, mat_idx, coef):
    """out[out_idx[e], :] += coef[e] * mat[mat_idx[e], :]"""
    _impl.scaled_row_scatter(out, out_idx, mat, mat_idx, coef)


def edge_row_dot(a_mat, a_idx, b_mat, b_idx, out):
    """out[e] = <a_mat[a_idx[e]], b_mat[b_idx[e]]>"""
    _impl.edge_row_dot(a_mat, a_idx, b_mat, b_idx, out)


def scatter_add_1d(out, idx, vals):
    """out[idx[e]] += vals[e]"""
    _impl.scatter_add_1d(out, idx, vals)


set_backend(os.environ.get("GAPGCN_BACKEND", "auto"))
