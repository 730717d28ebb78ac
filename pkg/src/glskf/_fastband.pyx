# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled banded mode-product kernel.

Same contract as glskf._banded_py.banded_mode_apply: symmetric banded matrix
in lower-diagonal-major storage applied along the middle axis of a C-contiguous
(right, n, left) block. Fuses the per-diagonal updates so no temporaries are
allocated; the inner loop runs over the contiguous trailing axis.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def banded_mode_apply(cnp.ndarray bands_in, cnp.ndarray x_in):
    cdef double[:, ::1] bands = np.ascontiguousarray(bands_in, dtype=np.float64)
    cdef double[:, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t right = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef Py_ssize_t left = x.shape[2]
    cdef Py_ssize_t bw = bands.shape[0] - 1

    if bands.shape[1] != n:
        raise ValueError(
            f"band matrix of size {bands.shape[1]} against middle axis {n}"
        )

    out_arr = np.empty((right, n, left), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t r, j, k, l, m
    cdef double v

    for r in range(right):
        for j in range(n):
            v = bands[0, j]
            for l in range(left):
                out[r, j, l] = v * x[r, j, l]
        for k in range(1, bw + 1):
            m = n - k
            if m <= 0:
                break
            for j in range(m):
                v = bands[k, j]
                if v == 0.0:
                    continue
                for l in range(left):
                    out[r, j + k, l] += v * x[r, j, l]
                    out[r, j, l] += v * x[r, j + k, l]
    return out_arr
