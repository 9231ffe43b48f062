"""End-to-end model execution.

For each layer the runner decides whether to offload (conv2d and dense
only), lowers operands into the form the target architecture accepts
(layout transposes for the flexible array, im2col + GEMM for the GEMM
engines), dispatches the simulator, and reassembles outputs in the
model's own layout.  Lowering work contributes zero simulated cycles.
Non-offloaded ops run on the reference kernels with no cycle cost.
"""

from dataclasses import dataclass
from math import prod

import numpy as np

from . import tensors
from .config import FLEX_LINEAR, SPARSE_GEMM, SYSTOLIC_OS
from .errors import ShapeError, SimulatorError
from .graph import infer_shapes
from .mapping import default_mapping, resolve_mapping
from .simulator import (SimReport, simulate_flexible_conv, simulate_flexible_fc,
                        simulate_sparse_gemm, simulate_systolic_gemm)
from .tensors import MAT_TAG, Tensor


@dataclass(frozen=True)
class PlanStep:
    kind: str     # transpose | im2col | reshape
    detail: str


@dataclass(frozen=True)
class LayerPlan:
    layer_id: str
    op_kind: str
    offload: bool
    steps: tuple = ()
    simulator: str | None = None
    mapping: object = None
    notes: tuple = ()


@dataclass(frozen=True)
class LayerResult:
    layer_id: str
    op_kind: str
    offloaded: bool
    report: SimReport | None
    output: Tensor | None
    weights: Tensor | None = None


@dataclass(frozen=True)
class RunReport:
    entries: tuple
    cycles: int
    psums: int
    macs: int
    skipped_macs: int
    output: Tensor


def plan_layer(layer, cfg, mapping=None):
    """Lowering and dispatch plan for one layer under a validated config."""
    notes = []
    if layer.op_kind == "conv2d":
        if cfg.controller_type == FLEX_LINEAR:
            if mapping is None:
                mapping = default_mapping(layer)
                notes.append(f"layer {layer.id!r}: no mapping provided, using the default")
            steps = []
            if layer.layout == "NCHW":
                steps.append(PlanStep("transpose", "NCHW->NHWC"))
                steps.append(PlanStep("transpose", "KCRS->RSCK"))
            steps.append(PlanStep("simulate", "flexible_conv"))
            if layer.layout == "NCHW":
                steps.append(PlanStep("transpose", "NPQK->NKPQ"))
            return LayerPlan(layer.id, "conv2d", True, tuple(steps), "flexible_conv",
                             mapping, tuple(notes))
        if cfg.controller_type == SYSTOLIC_OS and layer.layout != "NCHW":
            raise SimulatorError(
                f"layer {layer.id!r}: the output-stationary mesh only supports NCHW "
                f"convolutions, got {layer.layout}/{layer.kernel_layout}")
        sim = "sparse_gemm" if cfg.controller_type == SPARSE_GEMM else "systolic_gemm"
        order = "weight x data" if layer.layout == "NCHW" else "data x weight"
        steps = (PlanStep("im2col", f"per-group patch matrices, {order}"),
                 PlanStep("simulate", sim),
                 PlanStep("reshape", "2-d output back to the 4-d tensor"))
        if mapping is not None:
            notes.append(f"layer {layer.id!r}: mapping ignored, {cfg.controller_type} tiles internally")
        return LayerPlan(layer.id, "conv2d", True, steps, sim, None, tuple(notes))
    if layer.op_kind == "dense":
        if cfg.controller_type == FLEX_LINEAR:
            if mapping is None:
                mapping = default_mapping(layer)
                notes.append(f"layer {layer.id!r}: no mapping provided, using the default")
            return LayerPlan(layer.id, "dense", True,
                             (PlanStep("simulate", "flexible_fc"),),
                             "flexible_fc", mapping, tuple(notes))
        sim = "sparse_gemm" if cfg.controller_type == SPARSE_GEMM else "systolic_gemm"
        if mapping is not None:
            notes.append(f"layer {layer.id!r}: mapping ignored, {cfg.controller_type} tiles internally")
        return LayerPlan(layer.id, "dense", True, (PlanStep("simulate", sim),), sim,
                         None, tuple(notes))
    return LayerPlan(layer.id, layer.op_kind, False, (), None, None, ())


def plan_model(model, cfg, raw_mappings=None, notices=None):
    model = infer_shapes(model)
    entries = []
    for layer in model.layers:
        mapping = None
        if layer.op_kind in ("conv2d", "dense") and cfg.controller_type == FLEX_LINEAR:
            local = []
            mapping = resolve_mapping(layer, cfg, raw_mappings, local)
            if notices is not None:
                notices.extend(local)
        entries.append(plan_layer(layer, cfg, mapping))
    return tuple(entries)


def _gemm_sim(cfg):
    return simulate_sparse_gemm if cfg.controller_type == SPARSE_GEMM else simulate_systolic_gemm


def _combine_reports(parts, output):
    cycles = sum(r.cycles for r in parts)
    util = (sum(r.utilization * r.cycles for r in parts) / cycles) if cycles else 0.0
    return SimReport(
        cycles=cycles,
        psums=sum(r.psums for r in parts),
        macs=sum(r.macs for r in parts),
        skipped_macs=sum(r.skipped_macs for r in parts),
        utilization=util,
        output=output,
    )


def execute_conv(layer, cfg, x, w, mapping=None):
    """Offloaded conv2d in the model's own layout; returns a SimReport."""
    params = layer.params
    if cfg.controller_type == FLEX_LINEAR:
        if mapping is None:
            mapping = default_mapping(layer)
        if layer.layout == "NCHW":
            x = tensors.transpose(x, "NCHW", "NHWC")
            w = tensors.transpose(w, "KCRS", "RSCK")
        rep = simulate_flexible_conv(x, w, params, mapping, cfg)
        out = rep.output
        if layer.layout == "NCHW":
            out = tensors.transpose(out, "NPQK", "NKPQ")
            out = Tensor("NCHW", out.data)
        else:
            out = Tensor("NHWC", out.data)
        return SimReport(rep.cycles, rep.psums, rep.macs, rep.skipped_macs,
                         rep.utilization, out)
    if cfg.controller_type == SYSTOLIC_OS and layer.layout != "NCHW":
        raise SimulatorError(
            f"layer {layer.id!r}: the output-stationary mesh only supports NCHW convolutions")
    sim = _gemm_sim(cfg)
    k_g, p, q = params.k_g, params.p, params.q
    parts = []
    if layer.layout == "NCHW":
        out = np.empty((params.k, p, q), dtype=np.float32)
        for g in range(params.g):
            patch = tensors.im2col(x, params, group=g)
            wmat = tensors.reshape_kernel_for_gemm(w, params, g)
            rep = sim(wmat, patch, cfg)  # weight x data
            out[g * k_g:(g + 1) * k_g] = rep.output.data.reshape(k_g, p, q)
            parts.append(rep)
        return _combine_reports(parts, Tensor("NCHW", out[None]))
    out = np.empty((p, q, params.k), dtype=np.float32)
    for g in range(params.g):
        patch = tensors.im2col(x, params, group=g)
        wmat = tensors.reshape_kernel_for_gemm(w, params, g)
        rep = sim(patch, wmat, cfg)      # data x weight
        out[:, :, g * k_g:(g + 1) * k_g] = rep.output.data.reshape(p, q, k_g)
        parts.append(rep)
    return _combine_reports(parts, Tensor("NHWC", out[None]))


def execute_dense(layer, cfg, x, w, mapping=None):
    """Offloaded dense layer as a GEMM on any of the three architectures."""
    if cfg.controller_type == FLEX_LINEAR:
        if mapping is None:
            mapping = default_mapping(layer)
        return simulate_flexible_fc(x, w, layer.params, mapping, cfg)
    return _gemm_sim(cfg)(x, w, cfg)


def _layer_weights(layer, li, model, cfg, data_mode):
    """Seeded (or blob-loaded) weights, with synthetic pruning for the sparse engine."""
    params = layer.params
    if layer.op_kind == "conv2d":
        tag = layer.kernel_layout
        dims = ((params.k, params.c_g, params.r, params.s) if tag == "KCRS"
                else (params.r, params.s, params.c_g, params.k))
    elif layer.op_kind == "dense":
        tag, dims = MAT_TAG, (params.in_features, params.out_features)
    else:
        return None
    if layer.weights_path is not None:
        w = tensors.load_blob(layer.weights_path, tag, dims)
    else:
        rng = np.random.default_rng([model.seed, li + 1])
        w = tensors.random_weights(tag, dims, rng, data_mode)
    if cfg.controller_type == SPARSE_GEMM and cfg.sparsity_ratio > 0:
        flat = w.data.reshape(-1).copy()
        n_zero = flat.size * cfg.sparsity_ratio // 100
        prune_rng = np.random.default_rng([model.seed, li + 1, 0x5A])
        idx = prune_rng.permutation(flat.size)[:n_zero]
        flat[idx] = 0.0
        w = Tensor(tag, flat.reshape(dims))
    return w


def _model_input(model, data_mode):
    for layer in model.layers:
        if layer.in_shape is not None:
            rng = np.random.default_rng([model.seed, 0])
            return tensors.random_tensor(layer.in_tag, layer.in_shape, rng, data_mode)
    raise ShapeError("model has no shaped layer; an explicit input tensor is required")


def _as_row(t, in_features, layer_id):
    if prod(t.dims) != in_features:
        raise ShapeError(
            f"layer {layer_id!r}: input {t.dims} does not provide {in_features} features")
    return Tensor(MAT_TAG, t.data.reshape(1, in_features))


def run_model(model, cfg, mappings=None, input_tensor=None, *,
              data_mode="int", keep_outputs=True, notices=None):
    """Execute the whole chain, offloading conv2d/dense to the simulator.

    ``mappings`` is a parsed mapping document (layer id -> tile dict).
    With ``keep_outputs`` every layer's output and effective weights are
    retained on the report for later verification.
    """
    model = infer_shapes(model)
    cur = input_tensor if input_tensor is not None else _model_input(model, data_mode)
    if (input_tensor is not None and model.layers
            and model.layers[0].in_shape is not None
            and tuple(cur.dims) != model.layers[0].in_shape):
        raise ShapeError(
            f"input dims {tuple(cur.dims)} do not match the model's expected "
            f"{model.layers[0].in_shape}")
    entries = []
    totals = {"cycles": 0, "psums": 0, "macs": 0, "skipped_macs": 0}
    for li, layer in enumerate(model.layers):
        try:
            weights = _layer_weights(layer, li, model, cfg, data_mode)
            if layer.op_kind == "conv2d":
                expect = ((1, layer.params.c, layer.params.h, layer.params.w)
                          if layer.layout == "NCHW"
                          else (1, layer.params.h, layer.params.w, layer.params.c))
                if tuple(cur.dims) != expect:
                    raise ShapeError(f"input {tuple(cur.dims)} does not match conv2d {expect}")
                if cur.tag != layer.layout:
                    cur = Tensor(layer.layout, cur.data)
                mapping = None
                if cfg.controller_type == FLEX_LINEAR:
                    local = []
                    mapping = resolve_mapping(layer, cfg, mappings, local)
                    if notices is not None:
                        notices.extend(local)
                rep = execute_conv(layer, cfg, cur, weights, mapping)
                result = LayerResult(layer.id, layer.op_kind, True, rep, rep.output, weights)
                cur = rep.output
            elif layer.op_kind == "dense":
                row = _as_row(cur, layer.params.in_features, layer.id)
                mapping = None
                if cfg.controller_type == FLEX_LINEAR:
                    local = []
                    mapping = resolve_mapping(layer, cfg, mappings, local)
                    if notices is not None:
                        notices.extend(local)
                rep = execute_dense(layer, cfg, row, weights, mapping)
                result = LayerResult(layer.id, layer.op_kind, True, rep, rep.output, weights)
                cur = rep.output
            else:
                out = _run_fallback(layer, li, cur, model, data_mode)
                result = LayerResult(layer.id, layer.op_kind, False, None, out, None)
                cur = out
        except (ShapeError, SimulatorError) as exc:
            raise type(exc)(f"layer {layer.id!r}: {exc}") from exc
        if result.report is not None:
            for key in totals:
                totals[key] += getattr(result.report, key)
        if not keep_outputs:
            result = LayerResult(result.layer_id, result.op_kind, result.offloaded,
                                 result.report, None, None)
        entries.append(result)
    return RunReport(entries=tuple(entries), output=cur, **totals)


def _run_fallback(layer, li, cur, model, data_mode):
    if layer.op_kind == "relu":
        return tensors.relu(cur)
    if layer.op_kind == "maxpool2d":
        return tensors.maxpool2d(cur, layer.params.pool, layer.params.stride)
    if layer.op_kind == "flatten":
        return tensors.flatten(cur)
    if layer.op_kind == "bias_add":
        ch = cur.dims[1] if cur.tag == "NCHW" else cur.dims[-1]
        rng = np.random.default_rng([model.seed, li + 1])
        bias = tensors.random_weights(MAT_TAG, (1, ch), rng, data_mode)
        return tensors.bias_add(cur, bias.data[0])
    raise SimulatorError(f"unknown op {layer.op_kind!r}")


def verify_against_reference(model, input_tensor, run, *, data_mode="int", rtol=1e-4):
    """Recompute every layer with the reference kernels and compare.

    Comparison is exact in integer mode and elementwise with relative
    tolerance ``rtol`` otherwise.  Returns [(layer_id, ok), ...];
    mismatches are results, not errors.
    """
    model = infer_shapes(model)
    cur = input_tensor if input_tensor is not None else _model_input(model, data_mode)
    rows = []
    for li, (layer, entry) in enumerate(zip(model.layers, run.entries)):
        if layer.op_kind == "conv2d":
            cur = tensors.conv2d_ref(cur, entry.weights, layer.params)
        elif layer.op_kind == "dense":
            cur = tensors.dense_ref(_as_row(cur, layer.params.in_features, layer.id),
                                    entry.weights)
        else:
            cur = _run_fallback(layer, li, cur, model, data_mode)
        got = entry.output
        if got is None:
            rows.append((layer.id, False))
            continue
        if data_mode == "int":
            ok = bool(np.array_equal(got.data, cur.data))
        else:
            ok = bool(np.allclose(got.data, cur.data, rtol=rtol, atol=0.0))
        rows.append((layer.id, ok))
    return rows
