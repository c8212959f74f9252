# cython: boundscheck=False, wraparound=False, cdivision=True
"""Edge scatter/gather kernels. Sequential edge order; deterministic."""

cimport numpy as cnp

ctypedef fused real:
    float
    double


def scaled_row_scatter(real[:, ::1] out,
                       const cnp.int64_t[::1] out_idx,
                       const real[:, ::1] mat,
                       const cnp.int64_t[::1] mat_idx,
                       const real[::1] coef):
    """out[out_idx[e], :] += coef[e] * mat[mat_idx[e], :] for each edge e."""
    cdef Py_ssize_t e, k
    cdef Py_ssize_t n_edges = out_idx.shape[0]
    cdef Py_ssize_t dim = out.shape[1]
    cdef Py_ssize_t oi, mi
    cdef real c
    for e in range(n_edges):
        oi = out_idx[e]
        mi = mat_idx[e]
        c = coef[e]
        for k in range(dim):
            out[oi, k] += c * mat[mi, k]


def edge_row_dot(const real[:, ::1] a_mat,
                 const cnp.int64_t[::1] a_idx,
                 const real[:, ::1] b_mat,
                 const cnp.int64_t[::1] b_idx,
                 real[::1] out):
    """out[e] = <a_mat[a_idx[e], :], b_mat[b_idx[e], :]> for each edge e."""
    cdef Py_ssize_t e, k
    cdef Py_ssize_t n_edges = a_idx.shape[0]
    cdef Py_ssize_t dim = a_mat.shape[1]
    cdef Py_ssize_t ai, bi
    cdef real acc
    for e in range(n_edges):
        ai = a_idx[e]
        bi = b_idx[e]
        acc = 0
        for k in range(dim):
            acc += a_mat[ai, k] * b_mat[bi, k]
        out[e] = acc


def scatter_add_1d(real[::1] out,
                   const cnp.int64_t[::1] idx,
                   const real[::1] vals):
    """out[idx[e]] += vals[e] for each edge e."""
    cdef Py_ssize_t e
    cdef Py_ssize_t n = idx.shape[0]
    for e in range(n):
        out[idx[e]] += vals[e]
