# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled horizon-rollout kernel.

Mirrors roadflow._kernels_py; the phase selector calls this once per
candidate assignment, which makes it the hottest loop in a closed-loop
run.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def rollout_cost(double[:, ::1] A, double[::1] x0, double[:, ::1] g_plan,
                 Py_ssize_t n_roads):
    """Sum of squared road densities over the predicted horizon."""
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t n_tau = g_plan.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x_arr = np.array(x0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] y = y_arr
    cdef double[::1] tmp
    cdef double total = 0.0
    cdef double acc
    cdef Py_ssize_t h, i, j

    with nogil:
        for h in range(n_tau):
            for i in range(n):
                acc = g_plan[h, i]
                for j in range(n):
                    acc += A[i, j] * x[j]
                y[i] = acc
            tmp = x
            x = y
            y = tmp
            for i in range(n_roads):
                total += x[i] * x[i]
    return total
