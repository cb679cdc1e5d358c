# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the loops in ``_pykernels``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline void _matvec(double complex[:, ::1] a, double complex* x,
                         double complex* out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t r, c
    cdef double complex acc
    for r in range(n):
        acc = 0
        for c in range(n):
            acc = acc + a[r, c] * x[c]
        out[r] = acc


def march_affine(double[::1] ts, double complex[:, :, :, ::1] A_s,
                 double complex[:, :, ::1] c_s, double complex[::1] x0):
    cdef Py_ssize_t nsteps = ts.shape[0] - 1
    cdef Py_ssize_t n = x0.shape[0]
    cdef Py_ssize_t i, r
    cdef double h
    xs_arr = np.empty((nsteps + 1, n), dtype=np.complex128)
    cdef double complex[:, ::1] xs = xs_arr
    cdef double complex[::1] x = np.array(x0, dtype=np.complex128)
    cdef double complex[::1] tmp = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] k1 = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] k2 = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] k3 = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] k4 = np.empty(n, dtype=np.complex128)
    with nogil:
        for r in range(n):
            xs[0, r] = x[r]
        for i in range(nsteps):
            h = ts[i + 1] - ts[i]
            _matvec(A_s[i, 0], &x[0], &k1[0], n)
            for r in range(n):
                k1[r] = k1[r] + c_s[i, 0, r]
                tmp[r] = x[r] + 0.5 * h * k1[r]
            _matvec(A_s[i, 1], &tmp[0], &k2[0], n)
            for r in range(n):
                k2[r] = k2[r] + c_s[i, 1, r]
                tmp[r] = x[r] + 0.5 * h * k2[r]
            _matvec(A_s[i, 1], &tmp[0], &k3[0], n)
            for r in range(n):
                k3[r] = k3[r] + c_s[i, 1, r]
                tmp[r] = x[r] + h * k3[r]
            _matvec(A_s[i, 2], &tmp[0], &k4[0], n)
            for r in range(n):
                k4[r] = k4[r] + c_s[i, 2, r]
                x[r] = x[r] + (h / 6.0) * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
                xs[i + 1, r] = x[r]
    return xs_arr


def panel_moments(double complex[:, :, :, :, ::1] Xr, double[:, :, ::1] w,
                  double complex[:, :, :, ::1] v):
    cdef Py_ssize_t L = Xr.shape[0], m = Xr.shape[1], q = Xr.shape[2], n = Xr.shape[3]
    cdef Py_ssize_t l, i, p, a, b
    cdef double complex acc
    out_arr = np.zeros((L, m, n), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_arr
    with nogil:
        for l in range(L):
            for i in range(m):
                for p in range(q):
                    for a in range(n):
                        acc = 0
                        for b in range(n):
                            acc = acc + Xr[l, i, p, a, b] * v[l, i, p, b]
                        out[l, i, a] = out[l, i, a] + w[l, i, p] * acc
    return out_arr


def green_assemble(double complex[:, :, ::1] muP, double complex[:, :, ::1] muQ,
                   double complex[:, :, ::1] H, double complex[:, :, ::1] Hinv,
                   double complex[:, :, :, ::1] Zf, double complex[:, :, :, ::1] Zb,
                   double complex[:, :, :, ::1] Xb, bint exact):
    cdef Py_ssize_t L = muP.shape[0], m = muP.shape[1], n = muP.shape[2]
    cdef Py_ssize_t k, i, a, b
    cdef double complex accf, accx, accb
    cumP_arr = np.zeros((L, m + 1, n), dtype=np.complex128)
    cumQ_arr = np.zeros((L, m + 1, n), dtype=np.complex128)
    S_arr = np.zeros((L, n), dtype=np.complex128)
    T_arr = np.zeros((L, n), dtype=np.complex128)
    out_arr = np.zeros((L, m + 1, n), dtype=np.complex128)
    tmp_arr = np.zeros(n, dtype=np.complex128)
    cdef double complex[:, :, ::1] cumP = cumP_arr
    cdef double complex[:, :, ::1] cumQ = cumQ_arr
    cdef double complex[:, ::1] S = S_arr
    cdef double complex[:, ::1] T = T_arr
    cdef double complex[:, :, ::1] out = out_arr
    cdef double complex[::1] tmp = tmp_arr
    with nogil:
        for k in range(L):
            for i in range(m):
                for a in range(n):
                    cumP[k, i + 1, a] = cumP[k, i, a] + muP[k, i, a]
                    cumQ[k, i + 1, a] = cumQ[k, i, a] + muQ[k, i, a]
        for k in range(1, L):
            for a in range(n):
                accf = 0
                for b in range(n):
                    accf = accf + H[k - 1, a, b] * S[k - 1, b]
                S[k, a] = accf + cumP[k - 1, m, a]
        for k in range(L - 2, -1, -1):
            for b in range(n):
                tmp[b] = cumQ[k + 1, m, b] + T[k + 1, b]
            for a in range(n):
                accb = 0
                for b in range(n):
                    accb = accb + Hinv[k + 1, a, b] * tmp[b]
                T[k, a] = accb
        for k in range(L):
            for i in range(m + 1):
                for a in range(n):
                    accf = 0
                    accx = 0
                    accb = 0
                    for b in range(n):
                        accf = accf + Zf[k, i, a, b] * S[k, b]
                        if exact:
                            accx = accx + Xb[k, i, a, b] * (cumP[k, i, b] + cumQ[k, i, b])
                            accb = accb + Zb[k, i, a, b] * (T[k, b] + cumQ[k, m, b])
                        else:
                            accx = accx + Xb[k, i, a, b] * cumP[k, i, b]
                            accb = accb + Zb[k, i, a, b] * (T[k, b] + cumQ[k, m, b] - cumQ[k, i, b])
                    out[k, i, a] = accf + accx - accb
    return out_arr
