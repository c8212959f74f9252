"""Pure-numpy fallback for the edge kernels (same contracts as the C version)."""

import numpy as np


def scaled_row_scatter(out, out_idx, mat, mat_idx, coef):
    np.add.at(out, out_idx, coef[:, None] * mat[mat_idx])


def edge_row_dot(a_mat, a_idx, b_mat, b_idx, out):
    np.einsum("ek,ek->e", a_mat[a_idx], b_mat[b_idx], out=out)


def scatter_add_1d(out, idx, vals):
    np.add.at(out, idx, vals)
