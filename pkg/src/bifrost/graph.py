"""DNN graph intermediate representation.

Models are linear chains of layers loaded from a JSON document.  Layers
carry the standard convolution taxonomy (filter rows/cols R/S, channels
C/K, groups G, input rows/cols H/W, output rows/cols P/Q, padding and
strides); shape inference derives P/Q and checks that consecutive layers
compose.
"""

import json
from dataclasses import dataclass, replace
from importlib import resources
from math import prod

from .errors import ModelError, ShapeError

OP_KINDS = ("conv2d", "dense", "relu", "maxpool2d", "bias_add", "flatten")
OFFLOADABLE_OPS = ("conv2d", "dense")

LAYOUT_PAIRS = {"NCHW": "KCRS", "NHWC": "RSCK"}

# tag for 2-d (rows, cols) tensors
MAT = "MAT"


@dataclass(frozen=True)
class ConvLayerParams:
    r: int
    s: int
    c: int
    k: int
    h: int
    w: int
    g: int = 1
    n: int = 1
    pad_h: int = 0
    pad_w: int = 0
    stride_h: int = 1
    stride_w: int = 1
    p: int | None = None  # derived
    q: int | None = None  # derived

    def problems(self):
        out = []
        if self.n != 1:
            out.append(f"n must be 1, got {self.n}")
        for name in ("r", "s", "c", "k", "g", "h", "w", "stride_h", "stride_w"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("pad_h", "pad_w"):
            if getattr(self, name) < 0:
                out.append(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.g >= 1:
            if self.c % self.g:
                out.append(f"c={self.c} not divisible by g={self.g}")
            if self.k % self.g:
                out.append(f"k={self.k} not divisible by g={self.g}")
        return out

    @property
    def c_g(self):
        return self.c // self.g

    @property
    def k_g(self):
        return self.k // self.g

    def dense_macs(self):
        """MACs of the unskipped computation, padding taps included."""
        return self.k_g * self.g * self.p * self.q * self.r * self.s * self.c_g


@dataclass(frozen=True)
class FcLayerParams:
    in_features: int
    out_features: int
    batch: int = 1

    def problems(self):
        out = []
        if self.in_features < 1:
            out.append(f"in_features must be >= 1, got {self.in_features}")
        if self.out_features < 1:
            out.append(f"out_features must be >= 1, got {self.out_features}")
        if self.batch != 1:
            out.append(f"batch must be 1, got {self.batch}")
        return out

    def dense_macs(self):
        return self.in_features * self.out_features


@dataclass(frozen=True)
class MaxPoolParams:
    pool: int
    stride: int

    def problems(self):
        out = []
        if self.pool < 1:
            out.append(f"pool must be >= 1, got {self.pool}")
        if self.stride < 1:
            out.append(f"stride must be >= 1, got {self.stride}")
        return out


@dataclass(frozen=True)
class Layer:
    id: str
    op_kind: str
    params: object = None
    layout: str | None = None         # conv2d only
    kernel_layout: str | None = None  # conv2d only
    weights_path: str | None = None   # overrides the seeded generator
    # filled by infer_shapes; None when not derivable from the chain
    in_shape: tuple | None = None
    out_shape: tuple | None = None
    in_tag: str | None = None
    out_tag: str | None = None


@dataclass(frozen=True)
class Model:
    name: str
    seed: int
    layers: tuple


def conv_out_dims(params):
    """Output rows/cols: floor((in + 2*pad - filter) / stride) + 1."""
    if params.h + 2 * params.pad_h < params.r or params.w + 2 * params.pad_w < params.s:
        raise ShapeError(
            f"kernel {params.r}x{params.s} larger than padded input "
            f"{params.h + 2 * params.pad_h}x{params.w + 2 * params.pad_w}"
        )
    p = (params.h + 2 * params.pad_h - params.r) // params.stride_h + 1
    q = (params.w + 2 * params.pad_w - params.s) // params.stride_w + 1
    return p, q


_CONV_KEYS = {"r", "s", "c", "k", "g", "h", "w", "pad_h", "pad_w", "stride_h", "stride_w"}
_REQUIRED_CONV_KEYS = {"r", "s", "c", "k", "h", "w"}


def _parse_layer(doc, index):
    if not isinstance(doc, dict):
        raise ModelError(f"layer #{index}: expected an object, got {type(doc).__name__}")
    known = {"id", "op", "weights"}
    lid = doc.get("id")
    if not isinstance(lid, str) or not lid:
        raise ModelError(f"layer #{index}: missing or non-string 'id'")
    op = doc.get("op")
    if op not in OP_KINDS:
        raise ModelError(f"layer {lid!r}: unknown op {op!r} (expected one of {', '.join(OP_KINDS)})")
    weights_path = doc.get("weights")
    if weights_path is not None and not isinstance(weights_path, str):
        raise ModelError(f"layer {lid!r}: 'weights' must be a path string")

    layout = kernel_layout = None
    params = None
    if op == "conv2d":
        known |= _CONV_KEYS | {"layout", "kernel_layout"}
        layout = doc.get("layout")
        kernel_layout = doc.get("kernel_layout")
        if layout is None and kernel_layout is None:
            layout, kernel_layout = "NCHW", "KCRS"
        elif layout is None:
            if kernel_layout not in LAYOUT_PAIRS.values():
                raise ModelError(f"layer {lid!r}: unknown kernel_layout {kernel_layout!r}")
            layout = next(l for l, kl in LAYOUT_PAIRS.items() if kl == kernel_layout)
        elif kernel_layout is None:
            if layout not in LAYOUT_PAIRS:
                raise ModelError(f"layer {lid!r}: unknown layout {layout!r}")
            kernel_layout = LAYOUT_PAIRS[layout]
        if layout not in LAYOUT_PAIRS or LAYOUT_PAIRS[layout] != kernel_layout:
            raise ModelError(
                f"layer {lid!r}: layout/kernel-layout mismatch: {layout} pairs with "
                f"{LAYOUT_PAIRS.get(layout, '?')}, got {kernel_layout}"
            )
        missing = _REQUIRED_CONV_KEYS - doc.keys()
        if missing:
            raise ModelError(f"layer {lid!r}: missing conv2d keys {sorted(missing)}")
        fields = {kk: doc[kk] for kk in _CONV_KEYS if kk in doc}
        if not all(isinstance(v, int) for v in fields.values()):
            raise ModelError(f"layer {lid!r}: conv2d parameters must be integers")
        params = ConvLayerParams(**fields)
    elif op == "dense":
        known |= {"in_features", "out_features"}
        try:
            params = FcLayerParams(in_features=doc["in_features"], out_features=doc["out_features"])
        except KeyError as exc:
            raise ModelError(f"layer {lid!r}: missing dense key {exc}") from None
    elif op == "maxpool2d":
        known |= {"pool", "stride"}
        try:
            params = MaxPoolParams(pool=doc["pool"], stride=doc["stride"])
        except KeyError as exc:
            raise ModelError(f"layer {lid!r}: missing maxpool2d key {exc}") from None

    unknown = doc.keys() - known
    if unknown:
        raise ModelError(f"layer {lid!r}: unknown keys {sorted(unknown)}")
    if params is not None:
        problems = params.problems()
        if problems:
            raise ModelError(f"layer {lid!r}: " + "; ".join(problems))
    return Layer(id=lid, op_kind=op, params=params, layout=layout,
                 kernel_layout=kernel_layout, weights_path=weights_path)


def parse_model(text):
    """Parse a model document.  No shape inference is performed."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed model document: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    unknown = doc.keys() - {"name", "seed", "layers"}
    if unknown:
        raise ModelError(f"unknown top-level keys {sorted(unknown)}")
    name = doc.get("name", "model")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ModelError("'seed' must be an integer")
    layers_doc = doc.get("layers", [])
    if not isinstance(layers_doc, list):
        raise ModelError("'layers' must be an array")
    layers = []
    seen = set()
    for i, ld in enumerate(layers_doc):
        layer = _parse_layer(ld, i)
        if layer.id in seen:
            raise ModelError(f"duplicate layer id {layer.id!r}")
        seen.add(layer.id)
        layers.append(layer)
    return Model(name=name, seed=seed, layers=tuple(layers))


def serialize_model(model):
    """Inverse of parse_model; inferred shapes are not part of the document."""
    layers = []
    for layer in model.layers:
        doc = {"id": layer.id, "op": layer.op_kind}
        if layer.op_kind == "conv2d":
            pp = layer.params
            doc["layout"] = layer.layout
            doc["kernel_layout"] = layer.kernel_layout
            doc.update(r=pp.r, s=pp.s, c=pp.c, k=pp.k, g=pp.g, h=pp.h, w=pp.w,
                       pad_h=pp.pad_h, pad_w=pp.pad_w,
                       stride_h=pp.stride_h, stride_w=pp.stride_w)
        elif layer.op_kind == "dense":
            doc["in_features"] = layer.params.in_features
            doc["out_features"] = layer.params.out_features
        elif layer.op_kind == "maxpool2d":
            doc["pool"] = layer.params.pool
            doc["stride"] = layer.params.stride
        if layer.weights_path is not None:
            doc["weights"] = layer.weights_path
        layers.append(doc)
    return json.dumps({"name": model.name, "seed": model.seed, "layers": layers}, indent=2)


def _conv_shapes(params, layout):
    if layout == "NCHW":
        return (1, params.c, params.h, params.w), (1, params.k, params.p, params.q)
    return (1, params.h, params.w, params.c), (1, params.p, params.q, params.k)


def infer_shapes(model):
    """Fill derived conv dims and per-layer shapes; check chain consistency.

    Layers ahead of the first conv/dense have no intrinsic shape; their
    shapes stay None and are resolved from the actual input at run time.
    """
    cur_shape = None
    cur_tag = None
    layers = []
    for layer in model.layers:
        in_shape, in_tag = cur_shape, cur_tag
        if layer.op_kind == "conv2d":
            pq = conv_out_dims(layer.params)
            params = replace(layer.params, p=pq[0], q=pq[1])
            expected, out_shape = _conv_shapes(params, layer.layout)
            if cur_shape is not None and cur_shape != expected:
                raise ShapeError(
                    f"layer {layer.id!r}: input shape {cur_shape} from previous layer "
                    f"does not match conv2d expectation {expected}"
                )
            layer = replace(layer, params=params)
            in_shape, in_tag = expected, layer.layout
            cur_shape, cur_tag = out_shape, layer.layout
        elif layer.op_kind == "dense":
            want = layer.params.in_features
            if cur_shape is not None and prod(cur_shape) != want:
                raise ShapeError(
                    f"layer {layer.id!r}: previous output shape {cur_shape} "
                    f"({prod(cur_shape)} elements) does not match dense in_features={want}"
                )
            if cur_shape is None:
                in_shape, in_tag = (1, want), MAT
            cur_shape, cur_tag = (1, layer.params.out_features), MAT
        elif layer.op_kind == "maxpool2d":
            if cur_shape is not None:
                if len(cur_shape) != 4:
                    raise ShapeError(f"layer {layer.id!r}: maxpool2d needs a 4-d input, got {cur_shape}")
                pool, stride = layer.params.pool, layer.params.stride
                hw = (cur_shape[2], cur_shape[3]) if cur_tag == "NCHW" else (cur_shape[1], cur_shape[2])
                if hw[0] < pool or hw[1] < pool:
                    raise ShapeError(f"layer {layer.id!r}: pool {pool} larger than input {hw}")
                oh = (hw[0] - pool) // stride + 1
                ow = (hw[1] - pool) // stride + 1
                if cur_tag == "NCHW":
                    cur_shape = (1, cur_shape[1], oh, ow)
                else:
                    cur_shape = (1, oh, ow, cur_shape[3])
        elif layer.op_kind == "flatten":
            if cur_shape is not None:
                cur_shape, cur_tag = (1, prod(cur_shape)), MAT
        # relu/bias_add keep shape and tag
        layers.append(replace(layer, in_shape=in_shape, in_tag=in_tag,
                              out_shape=cur_shape, out_tag=cur_tag))
    return Model(name=model.name, seed=model.seed, layers=tuple(layers))


def load_bundled(name):
    """Load a model shipped with the package (e.g. 'alexnet')."""
    text = resources.files("bifrost.models").joinpath(f"{name}.json").read_text("utf-8")
    return parse_model(text)
