# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: fused kinetics evaluation and a Thomas tridiagonal solve."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, pow, fabs

cnp.import_array()

cdef double EXP_LIMIT = 700.0


def kinetics(h, C, y3, double d, double alpha2, double tau, bint regularized):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] hv = np.ascontiguousarray(h, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cv = np.ascontiguousarray(C, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yv = np.ascontiguousarray(y3, dtype=np.float64).ravel()
    cdef Py_ssize_t n = cv.shape[0]
    if hv.shape[0] == 1 and n > 1:
        hv = np.full(n, hv[0])
    if yv.shape[0] == 1 and n > 1:
        yv = np.full(n, yv[0])
    if cv.shape[0] == 1 and hv.shape[0] > 1:
        n = hv.shape[0]
        cv = np.full(n, cv[0])
    if hv.shape[0] != n or yv.shape[0] != n:
        raise ValueError("kinetics: incompatible array lengths")

    cdef cnp.ndarray[cnp.float64_t, ndim=1] H = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dHy = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dHc = np.empty(n)
    cdef Py_ssize_t i
    cdef int n_sat = 0
    cdef double arg, ep, em, theta, shifted, fwd, bwd, root, G, inv_tau = 1.0 / tau
    cdef bint unit = d == 1.0
    for i in range(n):
        arg = alpha2 * yv[i]
        if fabs(arg) > EXP_LIMIT:
            n_sat += 1
            arg = EXP_LIMIT if arg > 0 else -EXP_LIMIT
        ep = exp(arg)
        em = 1.0 / ep
        if regularized:
            theta = cv[i]
            if theta < 0.0:
                theta = 0.0
            elif theta > inv_tau:
                theta = inv_tau
            shifted = theta + tau
            if unit:
                fwd = hv[i] * ep / shifted
                bwd = theta * em / hv[i]
            else:
                fwd = hv[i] * pow(shifted, -d) * ep
                bwd = pow(theta, d) * em / hv[i]
            root = sqrt(theta)
            G = fwd - bwd
            H[i] = root * G
            dHy[i] = root * alpha2 * (fwd + bwd)
            if cv[i] > 0.0 and cv[i] < inv_tau:
                dHc[i] = 0.5 * G / root + root * (-d * fwd / shifted - d * bwd / theta)
            else:
                dHc[i] = 0.0
        else:
            if unit:
                fwd = hv[i] * ep / cv[i]
                bwd = cv[i] * em / hv[i]
            else:
                fwd = hv[i] * pow(cv[i], -d) * ep
                bwd = pow(cv[i], d) * em / hv[i]
            root = sqrt(cv[i])
            G = fwd - bwd
            H[i] = root * G
            dHy[i] = root * alpha2 * (fwd + bwd)
            dHc[i] = 0.5 * G / root - root * d * (fwd + bwd) / cv[i]
    return H, dHy, dHc, n_sat


def tridiag_solve(lower, diag, upper, rhs):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.ascontiguousarray(lower, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b = np.ascontiguousarray(diag, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = np.ascontiguousarray(upper, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r = np.ascontiguousarray(rhs, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cp = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.empty(n)
    cdef double m
    # no pivoting: callers pass diagonally dominant M-matrices
    cp[0] = c[0] / b[0]
    x[0] = r[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / m if i < n - 1 else 0.0
        x[i] = (r[i] - a[i] * x[i - 1]) / m
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x
