# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def walk_returns(const double[::1] start_cum, const cnp.int64_t[::1] row_ptr,
                 const double[::1] cum, const cnp.int64_t[::1] next_state,
                 const double[::1] reward, double gamma, const double[:, ::1] uniforms):
    cdef Py_ssize_t M = uniforms.shape[0], n_draws = uniforms.shape[1]
    cdef Py_ssize_t n_states = start_cum.shape[0]
    cdef Py_ssize_t m, t, s, k, end
    cdef double u, phi, disc
    out = np.empty(M)
    cdef double[::1] res = out
    for m in range(M):
        u = uniforms[m, 0]
        s = 0
        while s < n_states - 1 and u >= start_cum[s]:
            s += 1
        phi = 0.0
        disc = 1.0
        for t in range(1, n_draws):
            u = uniforms[m, t]
            k = row_ptr[s]
            end = row_ptr[s + 1] - 1
            while k < end and u >= cum[k]:
                k += 1
            phi += disc * reward[k]
            disc *= gamma
            s = next_state[k]
        res[m] = phi
    return out


def first_isotopic_pair(const double[:, ::1] P, const double[::1] reward, double tol):
    cdef Py_ssize_t n = reward.shape[0]
    cdef Py_ssize_t i, j, y
    cdef bint same
    for i in range(n - 1):
        for j in range(i + 1, n):
            if reward[i] != reward[j]:
                continue
            same = True
            for y in range(n):
                if y == i or y == j:
                    continue
                if fabs(P[j, y] - P[i, y]) > tol:
                    same = False
                    break
            if same:
                return i, j
    return -1, -1
