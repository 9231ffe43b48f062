import numpy as np
import pytest

from bifrost import tensors
from bifrost.errors import ShapeError
from bifrost.tensors import Tensor, transpose
from conftest import conv_layer


def t(tag, arr):
    return Tensor(tag, np.asarray(arr, dtype=np.float32))


def rand_conv_case(rng, layout, g=1, max_dim=8):
    r = int(rng.integers(1, 4)); s = int(rng.integers(1, 4))
    c = g * int(rng.integers(1, 4)); k = g * int(rng.integers(1, 4))
    h = int(rng.integers(r, max_dim + 1)); w = int(rng.integers(s, max_dim + 1))
    layer = conv_layer(r=r, s=s, c=c, k=k, g=g, h=h, w=w,
                       pad_h=int(rng.integers(0, 2)), pad_w=int(rng.integers(0, 2)),
                       stride_h=int(rng.integers(1, 3)), stride_w=int(rng.integers(1, 3)),
                       layout=layout)
    params = layer.params
    if layout == "NCHW":
        x = tensors.random_tensor("NCHW", (1, c, h, w), rng)
        w_t = tensors.random_weights("KCRS", (k, c // g, r, s), rng)
    else:
        x = tensors.random_tensor("NHWC", (1, h, w, c), rng)
        w_t = tensors.random_weights("RSCK", (r, s, c // g, k), rng)
    return params, x, w_t


def test_transpose_enumerated_example():
    x = t("NCHW", np.arange(1, 9).reshape(1, 2, 2, 2))
    y = transpose(x, "NCHW", "NHWC")
    assert y.data.ravel().tolist() == [1, 5, 2, 6, 3, 7, 4, 8]
    assert y.dims == (1, 2, 2, 2)


def test_transpose_round_trip_and_degenerate():
    rng = np.random.default_rng(0)
    for from_tag, to_tag in (("NCHW", "NHWC"), ("KCRS", "RSCK"), ("NPQK", "NKPQ")):
        x = Tensor(from_tag, rng.integers(-3, 4, (2, 3, 4, 5)).astype(np.float32))
        back = transpose(transpose(x, from_tag, to_tag), to_tag, from_tag)
        assert np.array_equal(back.data, x.data)
    # all trailing dims 1: the flat buffer is unchanged
    x = t("NCHW", np.arange(4).reshape(4, 1, 1, 1))
    y = transpose(x, "NCHW", "NHWC")
    assert np.array_equal(y.data.ravel(), x.data.ravel())


def test_transpose_errors():
    x = t("NCHW", np.zeros((1, 1, 1, 1)))
    with pytest.raises(ShapeError, match="tagged"):
        transpose(x, "NHWC", "NCHW")
    with pytest.raises(ShapeError, match="unsupported"):
        transpose(x, "NCHW", "RSCK")


def test_tensor_invariants():
    with pytest.raises(ShapeError, match="expects 4 dims"):
        Tensor("NCHW", np.zeros((2, 2)))
    with pytest.raises(ShapeError, match="unknown layout"):
        Tensor("NCWH", np.zeros((1, 1, 1, 1)))


def test_gemm_examples():
    a = t("MAT", [[1, 2], [3, 4]])
    b = t("MAT", [[5, 6], [7, 8]])
    assert tensors.gemm_ref(a, b).data.tolist() == [[19, 22], [43, 50]]
    eye = t("MAT", np.eye(3))
    m = t("MAT", np.arange(9).reshape(3, 3))
    assert np.array_equal(tensors.gemm_ref(eye, m).data, m.data)
    zero = t("MAT", np.zeros((3, 2)))
    assert not tensors.gemm_ref(m, zero).data.any()
    with pytest.raises(ShapeError, match="mismatch"):
        tensors.gemm_ref(m, t("MAT", np.zeros((2, 2))))


def test_conv2d_ref_all_ones_and_identity_filter():
    layer = conv_layer(r=3, s=3, c=1, k=1, h=3, w=3)
    x = t("NCHW", np.ones((1, 1, 3, 3)))
    w = t("KCRS", np.ones((1, 1, 3, 3)))
    out = tensors.conv2d_ref(x, w, layer.params)
    assert out.dims == (1, 1, 1, 1) and out.data.ravel()[0] == 9
    # single 1 at the kernel center with preserving padding reproduces the input
    layer = conv_layer(r=3, s=3, c=1, k=1, h=5, w=5, pad_h=1, pad_w=1)
    ident = np.zeros((1, 1, 3, 3), np.float32)
    ident[0, 0, 1, 1] = 1
    x = tensors.random_tensor("NCHW", (1, 1, 5, 5), np.random.default_rng(1))
    out = tensors.conv2d_ref(x, t("KCRS", ident), layer.params)
    assert np.array_equal(out.data, x.data)


def test_grouped_conv_equals_independent_halves():
    rng = np.random.default_rng(2)
    layer = conv_layer(r=3, s=3, c=4, k=6, g=2, h=7, w=7)
    x = tensors.random_tensor("NCHW", (1, 4, 7, 7), rng)
    w = tensors.random_weights("KCRS", (6, 2, 3, 3), rng)
    full = tensors.conv2d_ref(x, w, layer.params)
    half = conv_layer(r=3, s=3, c=2, k=3, g=1, h=7, w=7)
    for g in range(2):
        xg = Tensor("NCHW", x.data[:, 2 * g:2 * g + 2])
        wg = Tensor("KCRS", w.data[3 * g:3 * g + 3])
        part = tensors.conv2d_ref(xg, wg, half.params)
        assert np.array_equal(full.data[:, 3 * g:3 * g + 3], part.data)


def test_im2col_enumerated_windows():
    layer = conv_layer(r=2, s=2, c=1, k=1, h=3, w=3)
    x = t("NCHW", np.arange(1, 10).reshape(1, 1, 3, 3))
    patch = tensors.im2col(x, layer.params)
    assert patch.dims == (4, 4)
    # each column is one 2x2 receptive field, scanned row-major
    assert patch.data.T.tolist() == [
        [1, 2, 4, 5], [2, 3, 5, 6], [4, 5, 7, 8], [5, 6, 8, 9]]


def test_im2col_1x1_kernel_is_reshape():
    rng = np.random.default_rng(3)
    layer = conv_layer(r=1, s=1, c=3, k=2, h=4, w=5)
    x = tensors.random_tensor("NCHW", (1, 3, 4, 5), rng)
    patch = tensors.im2col(x, layer.params)
    assert np.array_equal(patch.data, x.data.reshape(3, 20))


@pytest.mark.parametrize("layout", ["NCHW", "NHWC"])
def test_im2col_gemm_matches_direct_conv(layout):
    rng = np.random.default_rng(4)
    cases = 0
    for g in (1, 2, 4):
        for _ in range(7):
            params, x, w = rand_conv_case(rng, layout, g=g)
            ref = tensors.conv2d_ref(x, w, params)
            k_g, p, q = params.k_g, params.p, params.q
            for gi in range(g):
                patch = tensors.im2col(x, params, group=gi)
                wmat = tensors.reshape_kernel_for_gemm(w, params, gi)
                if layout == "NCHW":
                    got = tensors.gemm_ref(wmat, patch).data.reshape(k_g, p, q)
                    want = ref.data[0, gi * k_g:(gi + 1) * k_g]
                else:
                    got = tensors.gemm_ref(patch, wmat).data.reshape(p, q, k_g)
                    want = ref.data[0, :, :, gi * k_g:(gi + 1) * k_g]
                assert np.array_equal(got, want)
            cases += 1
    assert cases == 21


def test_conv_layout_invariance():
    rng = np.random.default_rng(5)
    for _ in range(10):
        params, x, w = rand_conv_case(rng, "NCHW", g=int(rng.choice([1, 2])))
        nchw = tensors.conv2d_ref(x, w, params)
        nhwc = tensors.conv2d_ref(transpose(x, "NCHW", "NHWC"),
                                  transpose(w, "KCRS", "RSCK"), params)
        assert np.array_equal(nhwc.data, nchw.data.transpose(0, 2, 3, 1))


def test_fallback_ops():
    assert tensors.fallback_op("relu", (t("MAT", [[-1, 0, 2]]),)).data.tolist() == [[0, 0, 2]]
    pooled = tensors.fallback_op(
        "maxpool2d", (t("NCHW", [[[[1, 2], [3, 4]]]]), 2, 2))
    assert pooled.data.tolist() == [[[[4]]]]
    flat = tensors.fallback_op("flatten", (t("NCHW", np.zeros((1, 4, 8, 8))),))
    assert flat.dims == (1, 256)
    dense = tensors.fallback_op(
        "dense_ref", (t("MAT", [[1, 2]]), t("MAT", [[1, 0], [0, 1]])))
    assert dense.data.tolist() == [[1, 2]]
    biased = tensors.fallback_op("bias_add", (t("NCHW", np.zeros((1, 2, 2, 2))), [1, 2]))
    assert biased.data[0, 1].tolist() == [[2, 2], [2, 2]]
    with pytest.raises(ShapeError, match="unknown fallback"):
        tensors.fallback_op("softmax", ())


def test_maxpool_shape_rules():
    with pytest.raises(ShapeError, match="larger than input"):
        tensors.maxpool2d(t("NCHW", np.zeros((1, 1, 2, 2))), 3, 1)


def test_blob_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    x = tensors.random_tensor("NHWC", (1, 3, 4, 2), rng, mode="float")
    path = tmp_path / "blob.bin"
    x.data.astype("<f4").tofile(path)
    back = tensors.load_blob(path, "NHWC", (1, 3, 4, 2))
    assert np.array_equal(back.data, x.data)
    with pytest.raises(ShapeError, match="holds"):
        tensors.load_blob(path, "NHWC", (1, 3, 4, 3))
