"""Pure-Python (numpy) kernel backend.

Fallback used when the compiled extension is unavailable or explicitly
disabled via ``BIFROST_KERNELS=python``.  Every function here has a
signature-identical twin in ``_core.pyx``.  All kernels accumulate in
float64 and cast to float32 on the way out, so results are exact (and
backend-independent) whenever the operands hold small integer values.

Zero padding is handled logically by clipping tap ranges, never by
copying into a padded buffer.
"""

import numpy as np


def _out_extent(size, pad, tap, stride):
    return (size + 2 * pad - tap) // stride + 1


def _valid_out_range(tap_off, pad, extent, in_size, stride):
    """Output indices whose input tap ``o*stride + tap_off - pad`` is in bounds."""
    lo = max(0, -(-(pad - tap_off) // stride))  # ceil division
    hi = min(extent - 1, (in_size - 1 + pad - tap_off) // stride)
    return lo, hi


def gemm(a, b):
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)


def conv2d_nchw(x, w, groups, pad_h, pad_w, stride_h, stride_w):
    """Direct convolution, x (c,h,w) with w (k, c/g, r, s) -> (k,p,q)."""
    c, h, in_w = x.shape
    k, c_g, r, s = w.shape
    k_g = k // groups
    p = _out_extent(h, pad_h, r, stride_h)
    q = _out_extent(in_w, pad_w, s, stride_w)
    x64 = x.astype(np.float64)
    w64 = w.astype(np.float64)
    out = np.zeros((k, p, q), dtype=np.float64)
    for g in range(groups):
        xg = x64[g * c_g : (g + 1) * c_g]
        wg = w64[g * k_g : (g + 1) * k_g]
        og = out[g * k_g : (g + 1) * k_g]
        for rr in range(r):
            xlo, xhi = _valid_out_range(rr, pad_h, p, h, stride_h)
            if xlo > xhi:
                continue
            for ss in range(s):
                ylo, yhi = _valid_out_range(ss, pad_w, q, in_w, stride_w)
                if ylo > yhi:
                    continue
                xs = xg[
                    :,
                    xlo * stride_h + rr - pad_h : xhi * stride_h + rr - pad_h + 1 : stride_h,
                    ylo * stride_w + ss - pad_w : yhi * stride_w + ss - pad_w + 1 : stride_w,
                ]
                og[:, xlo : xhi + 1, ylo : yhi + 1] += np.einsum(
                    "kc,cxy->kxy", wg[:, :, rr, ss], xs
                )
    return out.astype(np.float32)


def conv2d_nhwc(x, w, groups, pad_h, pad_w, stride_h, stride_w):
    """Direct convolution, x (h,w,c) with w (r, s, c/g, k) -> (p,q,k)."""
    h, in_w, c = x.shape
    r, s, c_g, k = w.shape
    k_g = k // groups
    p = _out_extent(h, pad_h, r, stride_h)
    q = _out_extent(in_w, pad_w, s, stride_w)
    x64 = x.astype(np.float64)
    w64 = w.astype(np.float64)
    out = np.zeros((p, q, k), dtype=np.float64)
    for g in range(groups):
        xg = x64[:, :, g * c_g : (g + 1) * c_g]
        wg = w64[:, :, :, g * k_g : (g + 1) * k_g]
        og = out[:, :, g * k_g : (g + 1) * k_g]
        for rr in range(r):
            xlo, xhi = _valid_out_range(rr, pad_h, p, h, stride_h)
            if xlo > xhi:
                continue
            for ss in range(s):
                ylo, yhi = _valid_out_range(ss, pad_w, q, in_w, stride_w)
                if ylo > yhi:
                    continue
                xs = xg[
                    xlo * stride_h + rr - pad_h : xhi * stride_h + rr - pad_h + 1 : stride_h,
                    ylo * stride_w + ss - pad_w : yhi * stride_w + ss - pad_w + 1 : stride_w,
                    :,
                ]
                og[xlo : xhi + 1, ylo : yhi + 1, :] += np.einsum(
                    "xyc,ck->xyk", xs, wg[rr, ss]
                )
    return out.astype(np.float32)


def im2col_nchw(x, r, s, groups, group, pad_h, pad_w, stride_h, stride_w):
    """Patch matrix (c_g*r*s, p*q) for one channel group; padded taps stay zero."""
    c, h, in_w = x.shape
    c_g = c // groups
    p = _out_extent(h, pad_h, r, stride_h)
    q = _out_extent(in_w, pad_w, s, stride_w)
    patch = np.zeros((c_g, r, s, p, q), dtype=np.float32)
    xg = x[group * c_g : (group + 1) * c_g]
    for rr in range(r):
        xlo, xhi = _valid_out_range(rr, pad_h, p, h, stride_h)
        if xlo > xhi:
            continue
        for ss in range(s):
            ylo, yhi = _valid_out_range(ss, pad_w, q, in_w, stride_w)
            if ylo > yhi:
                continue
            patch[:, rr, ss, xlo : xhi + 1, ylo : yhi + 1] = xg[
                :,
                xlo * stride_h + rr - pad_h : xhi * stride_h + rr - pad_h + 1 : stride_h,
                ylo * stride_w + ss - pad_w : yhi * stride_w + ss - pad_w + 1 : stride_w,
            ]
    return patch.reshape(c_g * r * s, p * q)


def im2col_nhwc(x, r, s, groups, group, pad_h, pad_w, stride_h, stride_w):
    """Patch matrix (p*q, r*s*c_g) for one channel group; padded taps stay zero."""
    h, in_w, c = x.shape
    c_g = c // groups
    p = _out_extent(h, pad_h, r, stride_h)
    q = _out_extent(in_w, pad_w, s, stride_w)
    patch = np.zeros((p, q, r, s, c_g), dtype=np.float32)
    xg = x[:, :, group * c_g : (group + 1) * c_g]
    for rr in range(r):
        xlo, xhi = _valid_out_range(rr, pad_h, p, h, stride_h)
        if xlo > xhi:
            continue
        for ss in range(s):
            ylo, yhi = _valid_out_range(ss, pad_w, q, in_w, stride_w)
            if ylo > yhi:
                continue
            patch[xlo : xhi + 1, ylo : yhi + 1, rr, ss, :] = xg[
                xlo * stride_h + rr - pad_h : xhi * stride_h + rr - pad_h + 1 : stride_h,
                ylo * stride_w + ss - pad_w : yhi * stride_w + ss - pad_w + 1 : stride_w,
                :,
            ]
    return patch.reshape(p * q, r * s * c_g)


def maxpool2d(x, pool, stride, channels_last):
    """Max pooling over the two spatial axes of a 3-d tensor, no padding."""
    if channels_last:
        h, w = x.shape[0], x.shape[1]
    else:
        h, w = x.shape[1], x.shape[2]
    p = (h - pool) // stride + 1
    q = (w - pool) // stride + 1
    out = None
    for i in range(pool):
        for j in range(pool):
            if channels_last:
                win = x[i : i + (p - 1) * stride + 1 : stride, j : j + (q - 1) * stride + 1 : stride, :]
            else:
                win = x[:, i : i + (p - 1) * stride + 1 : stride, j : j + (q - 1) * stride + 1 : stride]
            out = win.copy() if out is None else np.maximum(out, win)
    return np.ascontiguousarray(out)


def flex_conv(x, w, groups, pad_h, pad_w, stride_h, stride_w, t_r, t_s, t_c, t_k, t_g, t_x, t_y):
    """Tile-by-tile execution of a convolution on the flexible array.

    x is (h,w,c), w is (r,s,c/g,k).  Outer loops walk output blocks
    (groups, filters, output rows/cols); inner loops walk the temporal
    reduction blocks (filter rows/cols, channels).  Each temporal step
    accumulates one partial sum per mapped output, which is the event
    the returned psum counter records.

    Returns (out (p,q,k) float32, psums).
    """
    h, in_w, c = x.shape
    r, s, c_g, k = w.shape
    k_g = k // groups
    p = _out_extent(h, pad_h, r, stride_h)
    q = _out_extent(in_w, pad_w, s, stride_w)
    x64 = x.astype(np.float64)
    w64 = w.astype(np.float64)
    acc = np.zeros((p, q, k), dtype=np.float64)
    psums = 0
    for gg0 in range(0, groups, t_g):
        g1 = min(gg0 + t_g, groups)
        for kk0 in range(0, k_g, t_k):
            k1 = min(kk0 + t_k, k_g)
            for xx0 in range(0, p, t_x):
                x1 = min(xx0 + t_x, p)
                for yy0 in range(0, q, t_y):
                    y1 = min(yy0 + t_y, q)
                    n_out = (g1 - gg0) * (k1 - kk0) * (x1 - xx0) * (y1 - yy0)
                    for rr0 in range(0, r, t_r):
                        r1 = min(rr0 + t_r, r)
                        for ss0 in range(0, s, t_s):
                            s1 = min(ss0 + t_s, s)
                            for cc0 in range(0, c_g, t_c):
                                c1 = min(cc0 + t_c, c_g)
                                psums += n_out
                                for gg in range(gg0, g1):
                                    kch0 = gg * k_g + kk0
                                    kch1 = gg * k_g + k1
                                    for rr in range(rr0, r1):
                                        xlo, xhi = _valid_out_range(rr, pad_h, p, h, stride_h)
                                        xlo = max(xlo, xx0)
                                        xhi = min(xhi, x1 - 1)
                                        if xlo > xhi:
                                            continue
                                        for ss in range(ss0, s1):
                                            ylo, yhi = _valid_out_range(ss, pad_w, q, in_w, stride_w)
                                            ylo = max(ylo, yy0)
                                            yhi = min(yhi, y1 - 1)
                                            if ylo > yhi:
                                                continue
                                            xs = x64[
                                                xlo * stride_h + rr - pad_h : xhi * stride_h + rr - pad_h + 1 : stride_h,
                                                ylo * stride_w + ss - pad_w : yhi * stride_w + ss - pad_w + 1 : stride_w,
                                                gg * c_g + cc0 : gg * c_g + c1,
                                            ]
                                            acc[xlo : xhi + 1, ylo : yhi + 1, kch0:kch1] += np.einsum(
                                                "xyc,ck->xyk", xs, w64[rr, ss, cc0:c1, kch0:kch1]
                                            )
    return acc.astype(np.float32), psums


def flex_fc(x, w, t_s, t_k):
    """Tile-by-tile dense layer on the flexible array.

    x is (in,), w is (in, out).  Returns (y (out,) float32, psums).
    """
    n_in, n_out = w.shape
    x64 = x.astype(np.float64)
    w64 = w.astype(np.float64)
    acc = np.zeros(n_out, dtype=np.float64)
    psums = 0
    for ss0 in range(0, n_out, t_s):
        s1 = min(ss0 + t_s, n_out)
        for kk0 in range(0, n_in, t_k):
            k1 = min(kk0 + t_k, n_in)
            acc[ss0:s1] += x64[kk0:k1] @ w64[kk0:k1, ss0:s1]
            psums += s1 - ss0
    return acc.astype(np.float32), psums


def sparse_gemm(a, b):
    """GEMM with zero-operand MACs skipped.

    Returns (c, skipped_macs, nnz_a, nnz_b).  A MAC (i,k,j) is skipped
    when a[i,k] == 0 or b[k,j] == 0; skipping never changes the product.
    """
    m, kk = a.shape
    n = b.shape[1]
    c = (a.astype(np.float64) @ b.astype(np.float64)).astype(np.float32)
    a_nz = (a != 0).sum(axis=0)
    b_nz = (b != 0).sum(axis=1)
    effective = int(np.dot(a_nz, b_nz))
    skipped = m * n * kk - effective
    return c, skipped, int(np.count_nonzero(a)), int(np.count_nonzero(b))


def systolic_gemm(a, b, rows, cols):
    """GEMM computed block by block over the PE mesh footprint."""
    m, kk = a.shape
    n = b.shape[1]
    out = np.empty((m, n), dtype=np.float32)
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    for bi in range(0, m, rows):
        i1 = min(bi + rows, m)
        for bj in range(0, n, cols):
            j1 = min(bj + cols, n)
            out[bi:i1, bj:j1] = (a64[bi:i1] @ b64[:, bj:j1]).astype(np.float32)
    return out
