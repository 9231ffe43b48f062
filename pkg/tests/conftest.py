import json

import pytest

from bifrost.config import HardwareConfig, validate_config
from bifrost.graph import infer_shapes, parse_model


def conv_layer(r=3, s=3, c=2, k=4, g=1, h=10, w=10, pad_h=0, pad_w=0,
               stride_h=1, stride_w=1, layout="NCHW", lid="conv"):
    doc = {"name": "t", "seed": 0, "layers": [{
        "id": lid, "op": "conv2d", "layout": layout,
        "kernel_layout": "KCRS" if layout == "NCHW" else "RSCK",
        "r": r, "s": s, "c": c, "k": k, "g": g, "h": h, "w": w,
        "pad_h": pad_h, "pad_w": pad_w, "stride_h": stride_h, "stride_w": stride_w,
    }]}
    return infer_shapes(parse_model(json.dumps(doc))).layers[0]


def fc_layer(in_features=6, out_features=4, lid="fc"):
    doc = {"name": "t", "seed": 0, "layers": [{
        "id": lid, "op": "dense", "in_features": in_features, "out_features": out_features,
    }]}
    return infer_shapes(parse_model(json.dumps(doc))).layers[0]


def flex_cfg(ms_size=128, dn_bw=None, rn_bw=None, accumulation_buffer=True):
    return validate_config(HardwareConfig(
        "FLEX_LINEAR", ms_size=ms_size, dn_bw=dn_bw, rn_bw=rn_bw,
        accumulation_buffer=accumulation_buffer))


def sparse_cfg(ms_size=64, dn_bw=None, rn_bw=None, sparsity_ratio=0):
    return validate_config(HardwareConfig(
        "SPARSE_GEMM", ms_size=ms_size, dn_bw=dn_bw, rn_bw=rn_bw,
        sparsity_ratio=sparsity_ratio))


def systolic_cfg(rows=4, cols=4):
    return validate_config(HardwareConfig("SYSTOLIC_OS", ms_rows=rows, ms_cols=cols))


@pytest.fixture
def tiny_model_doc():
    return json.dumps({"name": "tiny", "seed": 3, "layers": [
        {"id": "c1", "op": "conv2d", "r": 3, "s": 3, "c": 2, "k": 4, "h": 8, "w": 8},
        {"id": "a1", "op": "relu"},
        {"id": "f", "op": "flatten"},
        {"id": "d1", "op": "dense", "in_features": 144, "out_features": 10},
    ]})
