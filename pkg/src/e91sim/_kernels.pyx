# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-round station kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos

cnp.import_array()

BACKEND = "cython"

KIND_IDEAL, KIND_LINEAR, KIND_EFFICIENCY = 0, 1, 2


cdef inline double _click_prob(int kind, double thr, double sat, double eta, double e) noexcept nogil:
    cdef double p
    if kind == 0:
        return 1.0 if e > thr else 0.0
    if kind == 1:
        p = (e - thr) / (sat - thr)
        if p < 0.0:
            return 0.0
        if p > 1.0:
            return 1.0
        return p
    return eta if e > 0.0 else 0.0


cdef inline signed char _bit(unsigned char pat, double r) noexcept nogil:
    cdef bint c1 = (pat & 3) != 0
    cdef bint c0 = (pat & 12) != 0
    if c1 and c0:
        return 1 if r < 0.5 else 0
    if c1:
        return 1
    if c0:
        return 0
    return -1


def classical_station(phi, test, double theta1, double theta0, lam, u, r, double e0,
                      kinds, thr, sat, eta):
    cdef const double[::1] phi_v = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const unsigned char[::1] test_v = np.ascontiguousarray(test, dtype=np.uint8)
    cdef const double[::1] lam_v = np.ascontiguousarray(lam, dtype=np.float64)
    cdef const double[:, ::1] u_v = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[::1] r_v = np.ascontiguousarray(r, dtype=np.float64)
    cdef Py_ssize_t n = phi_v.shape[0]
    cdef int kk[4]
    cdef double tt[4]
    cdef double ss[4]
    cdef double ee[4]
    cdef double en[4]
    cdef int k
    for k in range(4):
        kk[k] = int(kinds[k])
        tt[k] = float(thr[k])
        ss[k] = float(sat[k])
        ee[k] = float(eta[k])
    pattern = np.empty(n, dtype=np.uint8)
    bit = np.empty(n, dtype=np.int8)
    cdef unsigned char[::1] pat_v = pattern
    cdef signed char[::1] bit_v = bit
    cdef Py_ssize_t i
    cdef double c, e1, e0r, d1, d0, ph
    cdef unsigned char pat
    with nogil:
        for i in range(n):
            ph = phi_v[i]
            c = cos(2.0 * (ph - lam_v[i]))
            e1 = e0 * 0.5 * (1.0 + c)
            e0r = e0 * 0.5 * (1.0 - c)
            if test_v[i]:
                d1 = cos(2.0 * (theta1 - ph))
                d0 = cos(2.0 * (theta0 - ph))
            else:
                d1 = 1.0
                d0 = 1.0
            en[0] = e1 * 0.5 * (1.0 + d1)
            en[1] = e1 * 0.5 * (1.0 - d1)
            en[2] = e0r * 0.5 * (1.0 - d0)
            en[3] = e0r * 0.5 * (1.0 + d0)
            pat = 0
            for k in range(4):
                if u_v[i, k] < _click_prob(kk[k], tt[k], ss[k], ee[k], en[k]):
                    pat |= (1 << k)
            pat_v[i] = pat
            bit_v[i] = _bit(pat, r_v[i])
    return pattern, bit


def quantum_channels(phi_a, phi_b, u_first, u_same):
    cdef const double[::1] pa = np.ascontiguousarray(phi_a, dtype=np.float64)
    cdef const double[::1] pb = np.ascontiguousarray(phi_b, dtype=np.float64)
    cdef const double[::1] uf = np.ascontiguousarray(u_first, dtype=np.float64)
    cdef const double[::1] us = np.ascontiguousarray(u_same, dtype=np.float64)
    cdef Py_ssize_t n = pa.shape[0]
    ch_a = np.empty(n, dtype=np.uint8)
    ch_b = np.empty(n, dtype=np.uint8)
    cdef unsigned char[::1] ca = ch_a
    cdef unsigned char[::1] cb = ch_b
    cdef Py_ssize_t i
    cdef unsigned char x
    with nogil:
        for i in range(n):
            x = 1 if uf[i] < 0.5 else 0
            ca[i] = x
            if us[i] < 0.5 * (1.0 + cos(2.0 * (pa[i] - pb[i]))):
                cb[i] = x
            else:
                cb[i] = 1 - x
    return ch_a, ch_b


def quantum_station(phi, test, double theta1, double theta0, channel, u_route, u_detect, eta):
    cdef const double[::1] phi_v = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const unsigned char[::1] test_v = np.ascontiguousarray(test, dtype=np.uint8)
    cdef const unsigned char[::1] ch_v = np.ascontiguousarray(channel, dtype=np.uint8)
    cdef const double[::1] ur = np.ascontiguousarray(u_route, dtype=np.float64)
    cdef const double[::1] ud = np.ascontiguousarray(u_detect, dtype=np.float64)
    cdef double ee[4]
    cdef int k
    for k in range(4):
        ee[k] = float(eta[k])
    cdef Py_ssize_t n = phi_v.shape[0]
    pattern = np.empty(n, dtype=np.uint8)
    bit = np.empty(n, dtype=np.int8)
    cdef unsigned char[::1] pat_v = pattern
    cdef signed char[::1] bit_v = bit
    cdef Py_ssize_t i
    cdef double d, p_plus, ph
    cdef int det
    with nogil:
        for i in range(n):
            ph = phi_v[i]
            if ch_v[i] == 1:
                d = cos(2.0 * (theta1 - ph)) if test_v[i] else 1.0
                p_plus = 0.5 * (1.0 + d)
                det = 0 if ur[i] < p_plus else 1
            else:
                d = cos(2.0 * (theta0 - ph)) if test_v[i] else 1.0
                p_plus = 0.5 * (1.0 - d)
                det = 2 if ur[i] < p_plus else 3
            if ud[i] < ee[det]:
                pat_v[i] = <unsigned char>(1 << det)
                bit_v[i] = <signed char>ch_v[i]
            else:
                pat_v[i] = 0
                bit_v[i] = -1
    return pattern, bit
