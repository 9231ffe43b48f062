# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend.

Signature-for-signature twin of ``pyref.py``: float32 operands, float64
accumulation, logical zero padding via index bounds checks.  The tiled
``flex_conv``/``flex_fc`` executors walk output blocks spatially and
reduction blocks temporally, counting one partial-sum event per mapped
output per temporal step.
"""

import numpy as np


cdef inline Py_ssize_t _min(Py_ssize_t a, Py_ssize_t b) nogil:
    return a if a < b else b


def gemm(float[:, ::1] a, float[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], kk = a.shape[1], n = b.shape[1]
    out = np.empty((m, n), dtype=np.float32)
    cdef float[:, ::1] ov = out
    cdef Py_ssize_t i, j, t
    cdef double acc
    with nogil:
        for i in range(m):
            for j in range(n):
                acc = 0.0
                for t in range(kk):
                    acc += <double> a[i, t] * <double> b[t, j]
                ov[i, j] = <float> acc
    return out


def conv2d_nchw(float[:, :, ::1] x, float[:, :, :, ::1] w,
                Py_ssize_t groups, Py_ssize_t pad_h, Py_ssize_t pad_w,
                Py_ssize_t stride_h, Py_ssize_t stride_w):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], in_w = x.shape[2]
    cdef Py_ssize_t k = w.shape[0], c_g = w.shape[1], r = w.shape[2], s = w.shape[3]
    cdef Py_ssize_t k_g = k // groups
    cdef Py_ssize_t p = (h + 2 * pad_h - r) // stride_h + 1
    cdef Py_ssize_t q = (in_w + 2 * pad_w - s) // stride_w + 1
    out = np.empty((k, p, q), dtype=np.float32)
    cdef float[:, :, ::1] ov = out
    cdef Py_ssize_t g, kk, kch, xx, yy, rr, ss, cc, ih, iw
    cdef double acc
    with nogil:
        for g in range(groups):
            for kk in range(k_g):
                kch = g * k_g + kk
                for xx in range(p):
                    for yy in range(q):
                        acc = 0.0
                        for rr in range(r):
                            ih = xx * stride_h + rr - pad_h
                            if ih < 0 or ih >= h:
                                continue
                            for ss in range(s):
                                iw = yy * stride_w + ss - pad_w
                                if iw < 0 or iw >= in_w:
                                    continue
                                for cc in range(c_g):
                                    acc += (<double> x[g * c_g + cc, ih, iw]
                                            * <double> w[kch, cc, rr, ss])
                        ov[kch, xx, yy] = <float> acc
    return out


def conv2d_nhwc(float[:, :, ::1] x, float[:, :, :, ::1] w,
                Py_ssize_t groups, Py_ssize_t pad_h, Py_ssize_t pad_w,
                Py_ssize_t stride_h, Py_ssize_t stride_w):
    cdef Py_ssize_t h = x.shape[0], in_w = x.shape[1], c = x.shape[2]
    cdef Py_ssize_t r = w.shape[0], s = w.shape[1], c_g = w.shape[2], k = w.shape[3]
    cdef Py_ssize_t k_g = k // groups
    cdef Py_ssize_t p = (h + 2 * pad_h - r) // stride_h + 1
    cdef Py_ssize_t q = (in_w + 2 * pad_w - s) // stride_w + 1
    out = np.empty((p, q, k), dtype=np.float32)
    cdef float[:, :, ::1] ov = out
    cdef Py_ssize_t g, kk, kch, xx, yy, rr, ss, cc, ih, iw
    cdef double acc
    with nogil:
        for g in range(groups):
            for kk in range(k_g):
                kch = g * k_g + kk
                for xx in range(p):
                    for yy in range(q):
                        acc = 0.0
                        for rr in range(r):
                            ih = xx * stride_h + rr - pad_h
                            if ih < 0 or ih >= h:
                                continue
                            for ss in range(s):
                                iw = yy * stride_w + ss - pad_w
                                if iw < 0 or iw >= in_w:
                                    continue
                                for cc in range(c_g):
                                    acc += (<double> x[ih, iw, g * c_g + cc]
                                            * <double> w[rr, ss, cc, kch])
                        ov[xx, yy, kch] = <float> acc
    return out


def im2col_nchw(float[:, :, ::1] x, Py_ssize_t r, Py_ssize_t s,
                Py_ssize_t groups, Py_ssize_t group,
                Py_ssize_t pad_h, Py_ssize_t pad_w,
                Py_ssize_t stride_h, Py_ssize_t stride_w):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], in_w = x.shape[2]
    cdef Py_ssize_t c_g = c // groups
    cdef Py_ssize_t p = (h + 2 * pad_h - r) // stride_h + 1
    cdef Py_ssize_t q = (in_w + 2 * pad_w - s) // stride_w + 1
    patch = np.zeros((c_g * r * s, p * q), dtype=np.float32)
    cdef float[:, ::1] pv = patch
    cdef Py_ssize_t cc, rr, ss, xx, yy, ih, iw, row
    with nogil:
        for cc in range(c_g):
            for rr in range(r):
                for ss in range(s):
                    row = (cc * r + rr) * s + ss
                    for xx in range(p):
                        ih = xx * stride_h + rr - pad_h
                        if ih < 0 or ih >= h:
                            continue
                        for yy in range(q):
                            iw = yy * stride_w + ss - pad_w
                            if iw < 0 or iw >= in_w:
                                continue
                            pv[row, xx * q + yy] = x[group * c_g + cc, ih, iw]
    return patch


def im2col_nhwc(float[:, :, ::1] x, Py_ssize_t r, Py_ssize_t s,
                Py_ssize_t groups, Py_ssize_t group,
                Py_ssize_t pad_h, Py_ssize_t pad_w,
                Py_ssize_t stride_h, Py_ssize_t stride_w):
    cdef Py_ssize_t h = x.shape[0], in_w = x.shape[1], c = x.shape[2]
    cdef Py_ssize_t c_g = c // groups
    cdef Py_ssize_t p = (h + 2 * pad_h - r) // stride_h + 1
    cdef Py_ssize_t q = (in_w + 2 * pad_w - s) // stride_w + 1
    patch = np.zeros((p * q, r * s * c_g), dtype=np.float32)
    cdef float[:, ::1] pv = patch
    cdef Py_ssize_t cc, rr, ss, xx, yy, ih, iw, col
    with nogil:
        for rr in range(r):
            for ss in range(s):
                for cc in range(c_g):
                    col = (rr * s + ss) * c_g + cc
                    for xx in range(p):
                        ih = xx * stride_h + rr - pad_h
                        if ih < 0 or ih >= h:
                            continue
                        for yy in range(q):
                            iw = yy * stride_w + ss - pad_w
                            if iw < 0 or iw >= in_w:
                                continue
                            pv[xx * q + yy, col] = x[ih, iw, group * c_g + cc]
    return patch


def maxpool2d(float[:, :, ::1] x, Py_ssize_t pool, Py_ssize_t stride, bint channels_last):
    cdef Py_ssize_t h, w, ch
    if channels_last:
        h = x.shape[0]; w = x.shape[1]; ch = x.shape[2]
    else:
        ch = x.shape[0]; h = x.shape[1]; w = x.shape[2]
    cdef Py_ssize_t p = (h - pool) // stride + 1
    cdef Py_ssize_t q = (w - pool) // stride + 1
    cdef Py_ssize_t cc, xx, yy, i, j
    cdef float best, v
    if channels_last:
        out = np.empty((p, q, ch), dtype=np.float32)
    else:
        out = np.empty((ch, p, q), dtype=np.float32)
    cdef float[:, :, ::1] ov = out
    with nogil:
        for cc in range(ch):
            for xx in range(p):
                for yy in range(q):
                    if channels_last:
                        best = x[xx * stride, yy * stride, cc]
                    else:
                        best = x[cc, xx * stride, yy * stride]
                    for i in range(pool):
                        for j in range(pool):
                            if channels_last:
                                v = x[xx * stride + i, yy * stride + j, cc]
                            else:
                                v = x[cc, xx * stride + i, yy * stride + j]
                            if v > best:
                                best = v
                    if channels_last:
                        ov[xx, yy, cc] = best
                    else:
                        ov[cc, xx, yy] = best
    return out


def flex_conv(float[:, :, ::1] x, float[:, :, :, ::1] w,
              Py_ssize_t groups, Py_ssize_t pad_h, Py_ssize_t pad_w,
              Py_ssize_t stride_h, Py_ssize_t stride_w,
              Py_ssize_t t_r, Py_ssize_t t_s, Py_ssize_t t_c, Py_ssize_t t_k,
              Py_ssize_t t_g, Py_ssize_t t_x, Py_ssize_t t_y):
    cdef Py_ssize_t h = x.shape[0], in_w = x.shape[1], c = x.shape[2]
    cdef Py_ssize_t r = w.shape[0], s = w.shape[1], c_g = w.shape[2], k = w.shape[3]
    cdef Py_ssize_t k_g = k // groups
    cdef Py_ssize_t p = (h + 2 * pad_h - r) // stride_h + 1
    cdef Py_ssize_t q = (in_w + 2 * pad_w - s) // stride_w + 1
    acc_arr = np.zeros((p, q, k), dtype=np.float64)
    cdef double[:, :, ::1] acc = acc_arr
    cdef long long psums = 0
    cdef Py_ssize_t gg0, kk0, xx0, yy0, rr0, ss0, cc0
    cdef Py_ssize_t g1, k1, x1, y1, r1, s1, c1
    cdef Py_ssize_t gg, kk, kch, xx, yy, rr, ss, cc, ih, iw
    cdef double partial
    with nogil:
        gg0 = 0
        while gg0 < groups:
            g1 = _min(gg0 + t_g, groups)
            kk0 = 0
            while kk0 < k_g:
                k1 = _min(kk0 + t_k, k_g)
                xx0 = 0
                while xx0 < p:
                    x1 = _min(xx0 + t_x, p)
                    yy0 = 0
                    while yy0 < q:
                        y1 = _min(yy0 + t_y, q)
                        rr0 = 0
                        while rr0 < r:
                            r1 = _min(rr0 + t_r, r)
                            ss0 = 0
                            while ss0 < s:
                                s1 = _min(ss0 + t_s, s)
                                cc0 = 0
                                while cc0 < c_g:
                                    c1 = _min(cc0 + t_c, c_g)
                                    # one temporal step: every mapped output
                                    # accumulates exactly one partial sum
                                    for gg in range(gg0, g1):
                                        for kk in range(kk0, k1):
                                            kch = gg * k_g + kk
                                            for xx in range(xx0, x1):
                                                for yy in range(yy0, y1):
                                                    partial = 0.0
                                                    for rr in range(rr0, r1):
                                                        ih = xx * stride_h + rr - pad_h
                                                        if ih < 0 or ih >= h:
                                                            continue
                                                        for ss in range(ss0, s1):
                                                            iw = yy * stride_w + ss - pad_w
                                                            if iw < 0 or iw >= in_w:
                                                                continue
                                                            for cc in range(cc0, c1):
                                                                partial += (<double> x[ih, iw, gg * c_g + cc]
                                                                            * <double> w[rr, ss, cc, kch])
                                                    acc[xx, yy, kch] += partial
                                                    psums += 1
                                    cc0 += t_c
                                ss0 += t_s
                            rr0 += t_r
                        yy0 += t_y
                    xx0 += t_x
                kk0 += t_k
            gg0 += t_g
    return acc_arr.astype(np.float32), int(psums)


def flex_fc(float[::1] x, float[:, ::1] w, Py_ssize_t t_s, Py_ssize_t t_k):
    cdef Py_ssize_t n_in = w.shape[0], n_out = w.shape[1]
    acc_arr = np.zeros(n_out, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    cdef long long psums = 0
    cdef Py_ssize_t ss0, kk0, s1, k1, ss, kk
    cdef double partial
    with nogil:
        ss0 = 0
        while ss0 < n_out:
            s1 = _min(ss0 + t_s, n_out)
            kk0 = 0
            while kk0 < n_in:
                k1 = _min(kk0 + t_k, n_in)
                for ss in range(ss0, s1):
                    partial = 0.0
                    for kk in range(kk0, k1):
                        partial += <double> x[kk] * <double> w[kk, ss]
                    acc[ss] += partial
                    psums += 1
                kk0 += t_k
            ss0 += t_s
    return acc_arr.astype(np.float32), int(psums)


def sparse_gemm(float[:, ::1] a, float[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], kk = a.shape[1], n = b.shape[1]
    out = np.empty((m, n), dtype=np.float32)
    cdef float[:, ::1] ov = out
    cdef long long skipped = 0, nnz_a = 0, nnz_b = 0
    cdef Py_ssize_t i, j, t
    cdef double acc
    with nogil:
        for i in range(m):
            for t in range(kk):
                if a[i, t] != 0.0:
                    nnz_a += 1
        for t in range(kk):
            for j in range(n):
                if b[t, j] != 0.0:
                    nnz_b += 1
        for i in range(m):
            for j in range(n):
                acc = 0.0
                for t in range(kk):
                    if a[i, t] == 0.0 or b[t, j] == 0.0:
                        skipped += 1
                        continue
                    acc += <double> a[i, t] * <double> b[t, j]
                ov[i, j] = <float> acc
    return out, int(skipped), int(nnz_a), int(nnz_b)


def systolic_gemm(float[:, ::1] a, float[:, ::1] b, Py_ssize_t rows, Py_ssize_t cols):
    cdef Py_ssize_t m = a.shape[0], kk = a.shape[1], n = b.shape[1]
    out = np.empty((m, n), dtype=np.float32)
    cdef float[:, ::1] ov = out
    cdef Py_ssize_t bi, bj, i1, j1, i, j, t
    cdef double acc
    with nogil:
        bi = 0
        while bi < m:
            i1 = _min(bi + rows, m)
            bj = 0
            while bj < n:
                j1 = _min(bj + cols, n)
                for i in range(bi, i1):
                    for j in range(bj, j1):
                        acc = 0.0
                        for t in range(kk):
                            acc += <double> a[i, t] * <double> b[t, j]
                        ov[i, j] = <float> acc
                bj += cols
            bi += rows
    return out
