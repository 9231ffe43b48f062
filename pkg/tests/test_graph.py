import json
from math import prod

import numpy as np
import pytest

from bifrost.errors import ModelError, ShapeError
from bifrost.graph import (ConvLayerParams, conv_out_dims, infer_shapes,
                           load_bundled, parse_model, serialize_model)


def doc(layers):
    return json.dumps({"name": "m", "seed": 1, "layers": layers})


CONV = {"id": "c", "op": "conv2d", "r": 3, "s": 3, "c": 3, "k": 4, "h": 10, "w": 10}


def test_parse_single_conv():
    model = parse_model(doc([CONV]))
    assert len(model.layers) == 1
    layer = model.layers[0]
    assert layer.op_kind == "conv2d"
    assert layer.layout == "NCHW" and layer.kernel_layout == "KCRS"
    assert layer.params.g == 1 and layer.params.stride_h == 1


def test_layout_kernel_mismatch_rejected():
    bad = dict(CONV, layout="NCHW", kernel_layout="RSCK")
    with pytest.raises(ModelError, match="mismatch"):
        parse_model(doc([bad]))


def test_unknown_op_and_duplicate_id_and_unknown_key():
    with pytest.raises(ModelError, match="unknown op"):
        parse_model(doc([{"id": "x", "op": "softmax"}]))
    with pytest.raises(ModelError, match="duplicate"):
        parse_model(doc([{"id": "x", "op": "relu"}, {"id": "x", "op": "relu"}]))
    with pytest.raises(ModelError, match="unknown keys"):
        parse_model(doc([dict(CONV, dilation=2)]))
    with pytest.raises(ModelError, match="unknown top-level"):
        parse_model(json.dumps({"name": "m", "layers": [], "comment": "x"}))


def test_malformed_document():
    with pytest.raises(ModelError, match="malformed"):
        parse_model("{not json")


def test_param_invariants_rejected():
    with pytest.raises(ModelError, match="not divisible"):
        parse_model(doc([dict(CONV, c=3, g=2)]))
    with pytest.raises(ModelError, match=">= 1"):
        parse_model(doc([dict(CONV, k=0)]))
    with pytest.raises(ModelError, match="out_features must be >= 1"):
        parse_model(doc([{"id": "d", "op": "dense", "in_features": 2,
                          "out_features": 0}]))


def test_conv_out_dims_examples():
    p, q = conv_out_dims(ConvLayerParams(r=3, s=3, c=1, k=1, h=10, w=10))
    assert (p, q) == (8, 8)
    # 1x1 kernel keeps the spatial extent
    p, q = conv_out_dims(ConvLayerParams(r=1, s=1, c=1, k=1, h=7, w=5))
    assert (p, q) == (7, 5)
    # large strided filter on a 227-wide input
    p, _ = conv_out_dims(ConvLayerParams(r=11, s=11, c=3, k=96, h=227, w=227,
                                         stride_h=4, stride_w=4))
    assert p == 55


def test_conv_kernel_larger_than_padded_input():
    with pytest.raises(ShapeError, match="larger than padded input"):
        conv_out_dims(ConvLayerParams(r=5, s=5, c=1, k=1, h=3, w=3))


def test_stride1_pad0_output_rows_property():
    rng = np.random.default_rng(0)
    for _ in range(50):
        r = int(rng.integers(1, 8))
        h = int(rng.integers(r, 20))
        p, _ = conv_out_dims(ConvLayerParams(r=r, s=1, c=1, k=1, h=h, w=1))
        assert p == h - r + 1


def test_infer_shapes_chain_and_dense_flattening():
    model = parse_model(doc([
        {"id": "c", "op": "conv2d", "r": 3, "s": 3, "c": 3, "k": 4, "h": 10, "w": 10},
        {"id": "d", "op": "dense", "in_features": 256, "out_features": 8},
    ]))
    inferred = infer_shapes(model)
    conv = inferred.layers[0]
    assert conv.params.p == 8 and conv.out_shape == (1, 4, 8, 8)
    assert inferred.layers[1].out_shape == (1, 8)


def test_infer_shapes_mismatch_names_both_shapes():
    model = parse_model(doc([
        {"id": "c", "op": "conv2d", "r": 3, "s": 3, "c": 3, "k": 4, "h": 10, "w": 10},
        {"id": "d", "op": "dense", "in_features": 128, "out_features": 8},
    ]))
    with pytest.raises(ShapeError, match=r"\(1, 4, 8, 8\).*128"):
        infer_shapes(model)


def test_infer_shapes_empty_model_and_idempotence():
    empty = parse_model(doc([]))
    assert infer_shapes(empty) == empty
    model = parse_model(doc([CONV, {"id": "p", "op": "maxpool2d", "pool": 2, "stride": 2}]))
    once = infer_shapes(model)
    assert infer_shapes(once) == once


def test_parse_serialize_round_trip(tiny_model_doc):
    model = parse_model(tiny_model_doc)
    again = parse_model(serialize_model(model))
    assert again == model


def test_alexnet_fixture_shapes():
    model = infer_shapes(load_bundled("alexnet"))
    convs = [l for l in model.layers if l.op_kind == "conv2d"]
    dense = [l for l in model.layers if l.op_kind == "dense"]
    assert len(convs) == 5 and len(dense) == 3
    assert len(model.layers) > 8  # auxiliary relu/pool/flatten layers present
    assert convs[0].params.p == 55
    assert model.layers[-1].out_shape == (1, 1000)
    # the flatten feeding fc1 delivers 256*6*6 values
    fc1 = dense[0]
    assert fc1.params.in_features == 9216
    assert prod(convs[-1].out_shape) != 0
