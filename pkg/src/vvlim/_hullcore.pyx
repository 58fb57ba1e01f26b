# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled upper-hull kernel (monotone chain on a uniform grid).

This is the hot inner loop of the curve fixed-point iteration: every
Picard sweep recomputes an envelope, and every Newton step on the solver
maps triggers a handful of curves.  The pure-python twin lives in
_hull_py.py and must stay algorithmically identical.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

KERNEL = "compiled"


def upper_hull_indices(cnp.ndarray[cnp.float64_t, ndim=1] y not None):
    """Indices of the vertices of the upper concave hull of (j, y[j])."""
    cdef Py_ssize_t m = y.shape[0]
    if m < 2:
        raise ValueError("need at least two samples")
    cdef cnp.ndarray[cnp.int64_t, ndim=1] stack = np.empty(m, dtype=np.int64)
    cdef Py_ssize_t top = 0
    cdef Py_ssize_t j, a, b
    stack[0] = 0
    for j in range(1, m):
        while top >= 1:
            a = stack[top - 1]
            b = stack[top]
            if (b - a) * (y[j] - y[a]) - (y[b] - y[a]) * (j - a) >= 0.0:
                top -= 1
            else:
                break
        top += 1
        stack[top] = j
    return stack[: top + 1].copy()
