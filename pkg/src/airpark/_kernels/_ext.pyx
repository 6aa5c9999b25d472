# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pure.py`` (bitwise-identical results)."""
import numpy as np


cdef inline Py_ssize_t _lo(Py_ssize_t shift):
    # first output index whose source index (out + shift) is >= 0
    return -shift if shift < 0 else 0


cdef inline Py_ssize_t _hi(Py_ssize_t shift, Py_ssize_t size, Py_ssize_t n_out):
    # one past the last output index whose source index is < size
    cdef Py_ssize_t h = size - shift
    return h if h < n_out else n_out


def im2col2d(const double[:, :, :, ::1] x, int kh, int kw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int ph = kh // 2, pw = kw // 2
    cols_arr = np.zeros((c * kh * kw, n * h * w))
    cdef double[:, ::1] cols = cols_arr
    cdef Py_ssize_t ci, di, dj, ni, i, j, r, col, y, sj, jlo, jhi, ilo, ihi
    for ci in range(c):
        for di in range(kh):
            ilo = _lo(di - ph)
            ihi = _hi(di - ph, h, h)
            for dj in range(kw):
                r = (ci * kh + di) * kw + dj
                sj = dj - pw
                jlo = _lo(sj)
                jhi = _hi(sj, w, w)
                for ni in range(n):
                    for i in range(ilo, ihi):
                        y = i + di - ph
                        col = (ni * h + i) * w
                        for j in range(jlo, jhi):
                            cols[r, col + j] = x[ni, ci, y, j + sj]
    return cols_arr


def col2im2d(const double[:, ::1] cols, shape, int kh, int kw):
    cdef Py_ssize_t n = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef int ph = kh // 2, pw = kw // 2
    out_arr = np.zeros((n, c, h, w))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ci, di, dj, ni, i, j, r, col, y, sj, jlo, jhi, ilo, ihi
    # accumulation order per output cell follows (di, dj) lexicographically,
    # matching the numpy twin so sums are bitwise equal
    for ci in range(c):
        for di in range(kh):
            ilo = _lo(di - ph)
            ihi = _hi(di - ph, h, h)
            for dj in range(kw):
                r = (ci * kh + di) * kw + dj
                sj = dj - pw
                jlo = _lo(sj)
                jhi = _hi(sj, w, w)
                for ni in range(n):
                    for i in range(ilo, ihi):
                        y = i + di - ph
                        col = (ni * h + i) * w
                        for j in range(jlo, jhi):
                            out[ni, ci, y, j + sj] += cols[r, col + j]
    return out_arr


def im2col1d(const double[:, :, ::1] x, int k, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], t = x.shape[2]
    cdef Py_ssize_t t_out = t + 2 * pad - k + 1
    cols_arr = np.zeros((c * k, n * t_out))
    cdef double[:, ::1] cols = cols_arr
    cdef Py_ssize_t ci, d, ni, i, r, s, lo, hi
    for ci in range(c):
        for d in range(k):
            r = ci * k + d
            s = d - pad
            lo = _lo(s)
            hi = _hi(s, t, t_out)
            for ni in range(n):
                for i in range(lo, hi):
                    cols[r, ni * t_out + i] = x[ni, ci, i + s]
    return cols_arr


def col2im1d(const double[:, ::1] cols, shape, int k, int pad):
    cdef Py_ssize_t n = shape[0], c = shape[1], t = shape[2]
    cdef Py_ssize_t t_out = t + 2 * pad - k + 1
    out_arr = np.zeros((n, c, t))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t ci, d, ni, i, r, s, lo, hi
    for ci in range(c):
        for d in range(k):
            r = ci * k + d
            s = d - pad
            lo = _lo(s)
            hi = _hi(s, t, t_out)
            for ni in range(n):
                for i in range(lo, hi):
                    out[ni, ci, i + s] += cols[r, ni * t_out + i]
    return out_arr


def maxpool2d_forward(const double[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], ho = x.shape[2] // 2, wo = x.shape[3] // 2
    out_arr = np.empty((n, c, ho, wo))
    idx_arr = np.empty((n, c, ho, wo), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef long long[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t ni, ci, i, j
    cdef double best, v
    cdef long long arg
    for ni in range(n):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    best = x[ni, ci, 2 * i, 2 * j]
                    arg = 0
                    v = x[ni, ci, 2 * i, 2 * j + 1]
                    if v > best:
                        best = v
                        arg = 1
                    v = x[ni, ci, 2 * i + 1, 2 * j]
                    if v > best:
                        best = v
                        arg = 2
                    v = x[ni, ci, 2 * i + 1, 2 * j + 1]
                    if v > best:
                        best = v
                        arg = 3
                    out[ni, ci, i, j] = best
                    idx[ni, ci, i, j] = arg
    return out_arr, idx_arr


def maxpool2d_backward(const double[:, :, :, ::1] grad, const long long[:, :, :, ::1] idx, shape):
    cdef Py_ssize_t n = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef Py_ssize_t ho = h // 2, wo = w // 2
    out_arr = np.zeros((n, c, h, w))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, i, j
    cdef long long a
    for ni in range(n):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    a = idx[ni, ci, i, j]
                    out[ni, ci, 2 * i + a // 2, 2 * j + a % 2] = grad[ni, ci, i, j]
    return out_arr


def maxpool1d_forward(const double[:, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], to = x.shape[2] // 2
    out_arr = np.empty((n, c, to))
    idx_arr = np.empty((n, c, to), dtype=np.int64)
    cdef double[:, :, ::1] out = out_arr
    cdef long long[:, :, ::1] idx = idx_arr
    cdef Py_ssize_t ni, ci, i
    cdef double a, b
    for ni in range(n):
        for ci in range(c):
            for i in range(to):
                a = x[ni, ci, 2 * i]
                b = x[ni, ci, 2 * i + 1]
                if b > a:
                    out[ni, ci, i] = b
                    idx[ni, ci, i] = 1
                else:
                    out[ni, ci, i] = a
                    idx[ni, ci, i] = 0
    return out_arr, idx_arr


def maxpool1d_backward(const double[:, :, ::1] grad, const long long[:, :, ::1] idx, shape):
    cdef Py_ssize_t n = shape[0], c = shape[1], t = shape[2]
    cdef Py_ssize_t to = t // 2
    out_arr = np.zeros((n, c, t))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, i
    for ni in range(n):
        for ci in range(c):
            for i in range(to):
                out[ni, ci, 2 * i + idx[ni, ci, i]] = grad[ni, ci, i]
    return out_arr


def block_levels(const double[:, :, ::1] values, const double[:, :, ::1] thresholds,
                 int min_stations, int run_hours, bint same_stations):
    cdef Py_ssize_t nb = values.shape[0], ns = values.shape[1], nr = values.shape[2]
    cdef Py_ssize_t nk = thresholds.shape[2]
    levels_arr = np.zeros(nb, dtype=np.int64)
    cdef long long[::1] levels = levels_arr
    cdef Py_ssize_t bi, k, s, t, h, count
    cdef bint ok, found
    cdef double thr
    if nr < run_hours:
        return levels_arr
    for bi in range(nb):
        found = False
        k = nk - 1
        while k >= 0 and not found:
            for t in range(nr - run_hours + 1):
                if same_stations:
                    count = 0
                    for s in range(ns):
                        thr = thresholds[bi, s, k]
                        ok = True
                        for h in range(t, t + run_hours):
                            if not values[bi, s, h] > thr:
                                ok = False
                                break
                        if ok:
                            count += 1
                    if count >= min_stations:
                        found = True
                else:
                    ok = True
                    for h in range(t, t + run_hours):
                        count = 0
                        for s in range(ns):
                            if values[bi, s, h] > thresholds[bi, s, k]:
                                count += 1
                        if count < min_stations:
                            ok = False
                            break
                    if ok:
                        found = True
                if found:
                    levels[bi] = k + 1
                    break
            k -= 1
    return levels_arr
