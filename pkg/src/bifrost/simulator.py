"""Cycle-model execution of layers on the three architecture families.

The timing model is analytic and fully documented here; the functional
output is produced by the tiled/blocked kernel executors and must match
the reference kernels exactly on integer-valued data.

Flexible linear array (FLEX_LINEAR).  Work is split into iterations, one
per tile block: spatially over output blocks, temporally over reduction
blocks.  Each iteration pays

    dist + 1 + tree_levels + red

cycles: ``dist`` = ceil(elements_delivered / dn_bw) to stream the mapped
weights and inputs in, one multiply step, ``tree_levels`` =
ceil(log2(ms_size)) to traverse the reduction tree, and ``red`` =
ceil(outputs_mapped / rn_bw) to write the partial sums out.  Without an
accumulation buffer, every non-final temporal step writes its partial
sums back through the reduction network a second time.

Sparse GEMM engine (SPARSE_GEMM).  MACs with a zero operand are skipped;
compute takes ceil(effective_macs / ms_size) cycles, plus streaming the
nonzero operand elements through the distribution network and the
outputs through the reduction network.  Tiling is handled internally by
the memory controller, so no mapping is taken.

Output-stationary mesh (SYSTOLIC_OS).  An M x K by K x N product runs as
ceil(M/ms_rows) * ceil(N/ms_cols) tile blocks, each paying the fill,
compute, and drain pipeline of K + ms_rows + ms_cols - 1 cycles.
"""

from dataclasses import dataclass, replace
from math import ceil

from . import _kernels as kernels
from .config import FLEX_LINEAR, SPARSE_GEMM, SYSTOLIC_OS
from .errors import SimulatorError
from .graph import ConvLayerParams, FcLayerParams, Layer, conv_out_dims
from .mapping import mapping_diagnostics
from .tensors import MAT_TAG, Tensor


@dataclass(frozen=True)
class SimReport:
    cycles: int
    psums: int
    macs: int
    skipped_macs: int
    utilization: float
    output: Tensor


def _require_controller(cfg, expected):
    if cfg.controller_type != expected:
        raise SimulatorError(
            f"simulator for {expected} invoked with a {cfg.controller_type} config")


def _with_out_dims(params):
    if params.p is None or params.q is None:
        p, q = conv_out_dims(params)
        params = replace(params, p=p, q=q)
    return params


def _stand_in(op_kind, params):
    return Layer(id=f"<{op_kind}>", op_kind=op_kind, params=params)


def count_psums(layer, m):
    """Partial-sum accumulation events for the whole layer, no simulation.

    One event per output per temporal reduction step: conv layers reduce
    over filter rows/cols and channels, fc layers over input neurons.
    """
    if isinstance(layer, Layer):
        op_kind, params = layer.op_kind, layer.params
    elif isinstance(layer, ConvLayerParams):
        op_kind, params = "conv2d", layer
    elif isinstance(layer, FcLayerParams):
        op_kind, params = "dense", layer
    else:
        raise SimulatorError(f"count_psums: unsupported layer {layer!r}")
    if op_kind == "conv2d":
        params = _with_out_dims(params)
        _check_tiles_in_bounds(m, op_kind, params)
        steps = ceil(params.r / m.t_r) * ceil(params.s / m.t_s) * ceil(params.c_g / m.t_c)
        return params.g * params.k_g * params.p * params.q * steps
    if op_kind == "dense":
        _check_tiles_in_bounds(m, op_kind, params)
        return params.out_features * ceil(params.in_features / m.t_k)
    raise SimulatorError(f"count_psums: no psum model for op {op_kind!r}")


class _NoBudget:
    """Config stand-in for bounds-only mapping checks."""
    ms_size = None
    ms_rows = ms_cols = 1 << 62


def _check_tiles_in_bounds(m, op_kind, params):
    problems = mapping_diagnostics(m, _stand_in(op_kind, params), _NoBudget)
    if problems:
        raise SimulatorError("invalid mapping: " + "; ".join(problems))


def _check_mapping(m, op_kind, params, cfg):
    problems = mapping_diagnostics(m, _stand_in(op_kind, params), cfg)
    if problems:
        raise SimulatorError("invalid mapping: " + "; ".join(problems))


def flex_conv_cycles(params, m, cfg):
    """Analytic cycle count of a convolution on the flexible array."""
    params = _with_out_dims(params)
    temporal = ceil(params.r / m.t_r) * ceil(params.s / m.t_s) * ceil(params.c_g / m.t_c)
    spatial = (ceil(params.g / m.t_g) * ceil(params.k_g / m.t_k) * ceil(params.n / m.t_n)
               * ceil(params.p / m.t_x) * ceil(params.q / m.t_y))
    weights = m.t_r * m.t_s * m.t_c * m.t_k * m.t_g
    inputs = (m.t_g * m.t_c * ((m.t_x - 1) * params.stride_h + m.t_r)
              * ((m.t_y - 1) * params.stride_w + m.t_s))
    outputs = m.t_k * m.t_g * m.t_n * m.t_x * m.t_y
    return _flex_cycles(cfg, temporal, spatial, weights + inputs, outputs)


def flex_fc_cycles(params, m, cfg):
    """Analytic cycle count of a dense layer on the flexible array."""
    temporal = ceil(params.in_features / m.t_k)
    spatial = ceil(params.out_features / m.t_s)
    elements = m.t_s * m.t_k + m.t_k   # weight tile plus shared input slice
    return _flex_cycles(cfg, temporal, spatial, elements, m.t_s * m.t_n)


def _flex_cycles(cfg, temporal, spatial, elements, outputs):
    base = ceil(elements / cfg.dn_bw) + 1 + cfg.tree_levels
    red_final = ceil(outputs / cfg.rn_bw)
    if cfg.accumulation_buffer:
        red_mid = red_final
    else:
        # each non-final partial sum makes a round trip per output
        red_mid = ceil(2 * outputs / cfg.rn_bw)
    return spatial * ((temporal - 1) * (base + red_mid) + base + red_final)


def simulate_flexible_conv(x, w, params, m, cfg):
    """Run a convolution on the flexible array; input must be NHWC/RSCK."""
    _require_controller(cfg, FLEX_LINEAR)
    params = _with_out_dims(params)
    if x.tag != "NHWC" or w.tag != "RSCK":
        raise SimulatorError(
            f"flexible array only executes NHWC/RSCK convolutions, got {x.tag}/{w.tag}")
    _check_mapping(m, "conv2d", params, cfg)
    if x.dims != (1, params.h, params.w, params.c):
        raise SimulatorError(f"input dims {x.dims} do not match the layer")
    out, psums = kernels.flex_conv(
        x.data[0], w.data, params.g, params.pad_h, params.pad_w,
        params.stride_h, params.stride_w,
        m.t_r, m.t_s, m.t_c, m.t_k, m.t_g, m.t_x, m.t_y)
    return SimReport(
        cycles=flex_conv_cycles(params, m, cfg),
        psums=psums,
        macs=params.dense_macs(),
        skipped_macs=0,
        utilization=m.footprint() / cfg.ms_size,
        output=Tensor("NPQK", out[None]),
    )


def simulate_flexible_fc(x, w, params, m, cfg):
    """Run a dense layer on the flexible array: x (1,in) times w (in,out)."""
    _require_controller(cfg, FLEX_LINEAR)
    _check_mapping(m, "dense", params, cfg)
    if x.tag != MAT_TAG or w.tag != MAT_TAG:
        raise SimulatorError("flexible fc expects 2-d operands")
    if x.dims != (1, params.in_features) or w.dims != (params.in_features, params.out_features):
        raise SimulatorError(
            f"operand dims {x.dims} x {w.dims} do not match the layer "
            f"({params.in_features} -> {params.out_features})")
    out, psums = kernels.flex_fc(x.data[0], w.data, m.t_s, m.t_k)
    return SimReport(
        cycles=flex_fc_cycles(params, m, cfg),
        psums=psums,
        macs=params.dense_macs(),
        skipped_macs=0,
        utilization=m.footprint() / cfg.ms_size,
        output=Tensor(MAT_TAG, out[None]),
    )


def simulate_sparse_gemm(a, b, cfg):
    """GEMM on the sparsity-skipping engine; tiling is internal."""
    _require_controller(cfg, SPARSE_GEMM)
    if a.tag != MAT_TAG or b.tag != MAT_TAG or a.dims[1] != b.dims[0]:
        raise SimulatorError(f"gemm dimension mismatch: {a.dims} x {b.dims}")
    mm, kk = a.dims
    nn = b.dims[1]
    out, skipped, nnz_a, nnz_b = kernels.sparse_gemm(a.data, b.data)
    dense = mm * nn * kk
    effective = dense - skipped
    compute = ceil(effective / cfg.ms_size)
    cycles = compute + ceil((nnz_a + nnz_b) / cfg.dn_bw) + ceil(mm * nn / cfg.rn_bw)
    return SimReport(
        cycles=cycles,
        psums=effective,
        macs=effective,
        skipped_macs=skipped,
        utilization=effective / (compute * cfg.ms_size) if compute else 0.0,
        output=Tensor(MAT_TAG, out),
    )


def simulate_systolic_gemm(a, b, cfg):
    """GEMM on the output-stationary mesh (fill/compute/drain per tile block)."""
    _require_controller(cfg, SYSTOLIC_OS)
    if a.tag != MAT_TAG or b.tag != MAT_TAG or a.dims[1] != b.dims[0]:
        raise SimulatorError(f"gemm dimension mismatch: {a.dims} x {b.dims}")
    mm, kk = a.dims
    nn = b.dims[1]
    rows, cols = cfg.ms_rows, cfg.ms_cols
    out = kernels.systolic_gemm(a.data, b.data, rows, cols)
    cycles = ceil(mm / rows) * ceil(nn / cols) * (kk + rows + cols - 1)
    macs = mm * nn * kk
    return SimReport(
        cycles=cycles,
        psums=macs,
        macs=macs,
        skipped_macs=0,
        utilization=macs / (cycles * rows * cols),
        output=Tensor(MAT_TAG, out),
    )
