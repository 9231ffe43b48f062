"""Tensor layout transposition, im2col lowering, and reference kernels.

The reference kernels here are the functional oracles the simulators are
checked against: a direct 7-loop convolution, a plain GEMM, and the
non-accelerated ops (relu, maxpool, bias_add, flatten).  Element type is
float32 with float64 accumulation, so integer-valued data round-trips
exactly through every route.
"""

import numpy as np

from . import _kernels as kernels
from .errors import ShapeError

TAG_RANK = {
    "NCHW": 4, "NHWC": 4,   # activations
    "KCRS": 4, "RSCK": 4,   # conv kernels (C axis holds channels per group)
    "NPQK": 4, "NKPQ": 4,   # conv outputs
    "MAT": 2,               # rows x cols
}

MAT_TAG = "MAT"

# supported transposition pairs; permutations are derived from the letters
_TRANSPOSE_PAIRS = {("NCHW", "NHWC"), ("NHWC", "NCHW"),
                    ("KCRS", "RSCK"), ("RSCK", "KCRS"),
                    ("NPQK", "NKPQ"), ("NKPQ", "NPQK")}


class Tensor:
    """A layout-tagged, C-contiguous float32 buffer."""

    __slots__ = ("tag", "data")

    def __init__(self, tag, data):
        if tag not in TAG_RANK:
            raise ShapeError(f"unknown layout tag {tag!r}")
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr.ndim != TAG_RANK[tag]:
            raise ShapeError(f"tag {tag} expects {TAG_RANK[tag]} dims, got shape {arr.shape}")
        self.tag = tag
        self.data = arr

    @property
    def dims(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor({self.tag}, dims={self.dims})"

    def __eq__(self, other):
        return (isinstance(other, Tensor) and self.tag == other.tag
                and self.dims == other.dims
                and bool(np.array_equal(self.data, other.data)))


def transpose(t, from_tag, to_tag):
    """Permute a tensor between paired layouts; element identity preserved."""
    if t.tag != from_tag:
        raise ShapeError(f"tensor is tagged {t.tag}, not {from_tag}")
    if (from_tag, to_tag) not in _TRANSPOSE_PAIRS:
        raise ShapeError(f"unsupported transpose {from_tag} -> {to_tag}")
    perm = tuple(from_tag.index(ch) for ch in to_tag)
    return Tensor(to_tag, np.ascontiguousarray(t.data.transpose(perm)))


def _as_matrix(x):
    return x.data if isinstance(x, Tensor) else np.ascontiguousarray(x, dtype=np.float32)


def gemm_ref(a, b):
    """c[i][j] = sum_k a[i][k] * b[k][j], accumulated in float64."""
    am, bm = _as_matrix(a), _as_matrix(b)
    if am.ndim != 2 or bm.ndim != 2 or am.shape[1] != bm.shape[0]:
        raise ShapeError(f"gemm dimension mismatch: {am.shape} x {bm.shape}")
    return Tensor(MAT_TAG, kernels.gemm(am, bm))


def _check_conv_operands(x, w, params):
    if x.tag == "NCHW":
        if w.tag != "KCRS":
            raise ShapeError(f"NCHW input needs a KCRS kernel, got {w.tag}")
        expect_x = (1, params.c, params.h, params.w)
        expect_w = (params.k, params.c_g, params.r, params.s)
    elif x.tag == "NHWC":
        if w.tag != "RSCK":
            raise ShapeError(f"NHWC input needs an RSCK kernel, got {w.tag}")
        expect_x = (1, params.h, params.w, params.c)
        expect_w = (params.r, params.s, params.c_g, params.k)
    else:
        raise ShapeError(f"conv input must be NCHW or NHWC, got {x.tag}")
    if x.dims != expect_x:
        raise ShapeError(f"conv input dims {x.dims} do not match layer {expect_x}")
    if w.dims != expect_w:
        raise ShapeError(f"conv kernel dims {w.dims} do not match layer {expect_w}")


def conv2d_ref(x, w, params):
    """Direct convolution with logical zero padding; oracle for all lowerings."""
    _check_conv_operands(x, w, params)
    if x.tag == "NCHW":
        out = kernels.conv2d_nchw(x.data[0], w.data, params.g, params.pad_h,
                                  params.pad_w, params.stride_h, params.stride_w)
        return Tensor("NCHW", out[np.newaxis])
    out = kernels.conv2d_nhwc(x.data[0], w.data, params.g, params.pad_h,
                              params.pad_w, params.stride_h, params.stride_w)
    return Tensor("NHWC", out[np.newaxis])


def im2col(x, params, group=0):
    """Receptive-field patch matrix for one channel group.

    NCHW inputs produce (c_g*r*s, p*q) — one receptive field per column,
    to be multiplied as weight x data.  NHWC inputs produce the
    (p*q, r*s*c_g) transpose-ordered matrix for data x weight.  Padded
    taps materialize as explicit zeros.
    """
    if not 0 <= group < params.g:
        raise ShapeError(f"group {group} out of range for g={params.g}")
    if x.tag == "NCHW":
        if x.dims != (1, params.c, params.h, params.w):
            raise ShapeError(f"im2col input dims {x.dims} inconsistent with layer")
        out = kernels.im2col_nchw(x.data[0], params.r, params.s, params.g, group,
                                  params.pad_h, params.pad_w,
                                  params.stride_h, params.stride_w)
    elif x.tag == "NHWC":
        if x.dims != (1, params.h, params.w, params.c):
            raise ShapeError(f"im2col input dims {x.dims} inconsistent with layer")
        out = kernels.im2col_nhwc(x.data[0], params.r, params.s, params.g, group,
                                  params.pad_h, params.pad_w,
                                  params.stride_h, params.stride_w)
    else:
        raise ShapeError(f"im2col input must be NCHW or NHWC, got {x.tag}")
    return Tensor(MAT_TAG, out)


def reshape_kernel_for_gemm(w, params, group):
    """Flatten one group's kernel so that gemm(im2col) reproduces conv2d_ref."""
    k_g, c_g = params.k_g, params.c_g
    if w.tag == "KCRS":
        block = w.data[group * k_g:(group + 1) * k_g]
        return Tensor(MAT_TAG, block.reshape(k_g, c_g * params.r * params.s))
    if w.tag == "RSCK":
        block = w.data[:, :, :, group * k_g:(group + 1) * k_g]
        return Tensor(MAT_TAG, np.ascontiguousarray(block).reshape(params.r * params.s * c_g, k_g))
    raise ShapeError(f"kernel must be KCRS or RSCK, got {w.tag}")


def relu(x):
    return Tensor(x.tag, np.maximum(x.data, np.float32(0)))


def maxpool2d(x, pool, stride):
    if x.tag not in ("NCHW", "NHWC"):
        raise ShapeError(f"maxpool2d needs NCHW or NHWC input, got {x.tag}")
    channels_last = x.tag == "NHWC"
    hw = x.dims[1:3] if channels_last else x.dims[2:4]
    if pool > hw[0] or pool > hw[1]:
        raise ShapeError(f"pool {pool} larger than input {hw}")
    out = kernels.maxpool2d(x.data[0], pool, stride, channels_last)
    return Tensor(x.tag, out[np.newaxis])


def bias_add(x, bias):
    bias = np.ascontiguousarray(bias, dtype=np.float32)
    if x.tag == "NCHW":
        ch = x.dims[1]
        shaped = bias.reshape(1, ch, 1, 1)
    elif x.tag in ("NHWC", "MAT"):
        ch = x.dims[-1]
        shaped = bias
    else:
        raise ShapeError(f"bias_add unsupported for tag {x.tag}")
    if bias.size != ch:
        raise ShapeError(f"bias length {bias.size} does not match {ch} channels")
    return Tensor(x.tag, (x.data.astype(np.float64) + shaped.astype(np.float64)).astype(np.float32))


def flatten(x):
    return Tensor(MAT_TAG, x.data.reshape(1, -1))


def dense_ref(x, w):
    """y = x @ w for a (1, in) row vector and (in, out) weights."""
    return gemm_ref(x, w)


def fallback_op(kind, inputs):
    """Reference execution of the non-accelerated ops."""
    if kind == "relu":
        return relu(*inputs)
    if kind == "maxpool2d":
        return maxpool2d(*inputs)
    if kind == "bias_add":
        return bias_add(*inputs)
    if kind == "flatten":
        return flatten(*inputs)
    if kind == "dense_ref":
        return dense_ref(*inputs)
    raise ShapeError(f"unknown fallback op {kind!r}")


def load_blob(path, tag, dims):
    """Read a raw little-endian float32 blob into a tagged tensor."""
    raw = np.fromfile(path, dtype="<f4")
    expected = int(np.prod(dims))
    if raw.size != expected:
        raise ShapeError(f"blob {path} holds {raw.size} values, expected {expected} for {dims}")
    return Tensor(tag, raw.reshape(dims))


def random_tensor(tag, dims, rng, mode="int"):
    """Seeded test data.

    int mode draws small integers so that float64-accumulated results are
    exact and comparisons can demand bit equality; float mode draws
    uniform values in [-1, 1).
    """
    if mode == "int":
        arr = rng.integers(-2, 3, size=dims).astype(np.float32)
    elif mode == "float":
        arr = (rng.random(size=dims, dtype=np.float64) * 2 - 1).astype(np.float32)
    else:
        raise ValueError(f"unknown data mode {mode!r}")
    return Tensor(tag, arr)


def random_weights(tag, dims, rng, mode="int"):
    """Seeded weights; int mode keeps values in {-1, 0, 1} so deep chains stay exact."""
    if mode == "int":
        arr = rng.integers(-1, 2, size=dims).astype(np.float32)
    elif mode == "float":
        arr = (rng.random(size=dims, dtype=np.float64) * 2 - 1).astype(np.float32)
    else:
        raise ValueError(f"unknown data mode {mode!r}")
    return Tensor(tag, arr)
