"""Hardware configuration model and validity rules.

Three controller families are supported: FLEX_LINEAR (a reconfigurable
linear multiplier array with a tree reduction network), SPARSE_GEMM (a
sparsity-skipping GEMM engine), and SYSTOLIC_OS (a rigid output-stationary
mesh).  Every rule is enforced here, before any simulation: multiplier
counts and bandwidths must be powers of two, controller families pin
their network types, and systolic configs get their distribution and
reduction bandwidths corrected to rows+cols and rows*cols.
"""

import json
from dataclasses import dataclass, fields
from math import ceil, log2

from .errors import ConfigError

FLEX_LINEAR = "FLEX_LINEAR"
SPARSE_GEMM = "SPARSE_GEMM"
SYSTOLIC_OS = "SYSTOLIC_OS"

CONTROLLER_TYPES = (FLEX_LINEAR, SPARSE_GEMM, SYSTOLIC_OS)

# the simulator-native controller strings stay accepted in config files
CONTROLLER_ALIASES = {
    "MAERI_DENSE_WORKLOAD": FLEX_LINEAR,
    "SIGMA_SPARSE_GEMM": SPARSE_GEMM,
    "TPU_OS_DENSE": SYSTOLIC_OS,
}

NETWORK_TYPES = ("LINEAR", "OS_MESH")
REDUCE_NETWORK_TYPES = ("ASNETWORK", "FENETWORK", "TEMPORALRN")

_CONFIG_FIELDS = ("controller_type", "ms_network_type", "ms_size", "ms_rows",
                  "ms_cols", "dn_bw", "rn_bw", "reduce_network_type",
                  "sparsity_ratio", "accumulation_buffer")


@dataclass
class HardwareConfig:
    controller_type: str
    ms_network_type: str | None = None
    ms_size: int | None = None
    ms_rows: int | None = None
    ms_cols: int | None = None
    dn_bw: int | None = None
    rn_bw: int | None = None
    reduce_network_type: str | None = None
    sparsity_ratio: int = 0
    accumulation_buffer: bool = True


@dataclass(frozen=True)
class ValidatedConfig:
    """Immutable, rule-checked configuration; build via validate_config only."""

    controller_type: str
    ms_network_type: str
    ms_size: int | None
    ms_rows: int | None
    ms_cols: int | None
    dn_bw: int
    rn_bw: int
    reduce_network_type: str
    sparsity_ratio: int
    accumulation_buffer: bool
    tree_levels: int | None       # ceil(log2(ms_size)) for linear arrays
    corrections: tuple = ()
    warnings: tuple = ()

    @property
    def multipliers(self):
        return self.ms_size if self.ms_size is not None else self.ms_rows * self.ms_cols


def _is_pow2(x):
    return isinstance(x, int) and x > 0 and (x & (x - 1)) == 0


def _apply_defaults(cfg):
    ct = cfg.controller_type
    net = cfg.ms_network_type
    if net is None:
        net = "OS_MESH" if ct == SYSTOLIC_OS else "LINEAR"
    reduce_net = cfg.reduce_network_type
    if reduce_net is None:
        reduce_net = "TEMPORALRN" if ct == SYSTOLIC_OS else "ASNETWORK"
    dn_bw, rn_bw = cfg.dn_bw, cfg.rn_bw
    if net == "LINEAR" and cfg.ms_size is not None:
        if dn_bw is None:
            dn_bw = cfg.ms_size
        if rn_bw is None:
            rn_bw = cfg.ms_size
    if net == "OS_MESH" and cfg.ms_rows is not None and cfg.ms_cols is not None:
        if dn_bw is None:
            dn_bw = cfg.ms_rows + cfg.ms_cols
        if rn_bw is None:
            rn_bw = cfg.ms_rows * cfg.ms_cols
    return HardwareConfig(controller_type=ct, ms_network_type=net, ms_size=cfg.ms_size,
                          ms_rows=cfg.ms_rows, ms_cols=cfg.ms_cols, dn_bw=dn_bw,
                          rn_bw=rn_bw, reduce_network_type=reduce_net,
                          sparsity_ratio=cfg.sparsity_ratio,
                          accumulation_buffer=cfg.accumulation_buffer)


def validate_config(cfg):
    """Check every rule; raise ConfigError listing all violations at once.

    For SYSTOLIC_OS, dn_bw and rn_bw are overwritten with ms_rows+ms_cols
    and ms_rows*ms_cols and the correction is reported, not rejected.
    """
    problems = []
    warnings = []
    corrections = []

    ct = cfg.controller_type
    if ct in CONTROLLER_ALIASES:
        ct = CONTROLLER_ALIASES[ct]
    if ct not in CONTROLLER_TYPES:
        raise ConfigError([f"controller_type: unknown value {cfg.controller_type!r}"])
    # accepts HardwareConfig or an already-validated config (re-validation
    # is idempotent); the input is never mutated
    kwargs = {name: getattr(cfg, name) for name in _CONFIG_FIELDS}
    kwargs["controller_type"] = ct
    cfg = _apply_defaults(HardwareConfig(**kwargs))

    net = cfg.ms_network_type
    if net not in NETWORK_TYPES:
        problems.append(f"ms_network_type: unknown value {net!r}")
    elif ct in (FLEX_LINEAR, SPARSE_GEMM) and net != "LINEAR":
        problems.append(f"ms_network_type: {ct} must use the LINEAR option, got {net}")
    elif ct == SYSTOLIC_OS and net != "OS_MESH":
        problems.append(f"ms_network_type: {ct} must use the OS_MESH option, got {net}")

    if net == "LINEAR":
        if cfg.ms_size is None:
            problems.append("ms_size: required for LINEAR multiplier networks")
        elif not _is_pow2(cfg.ms_size):
            problems.append(f"ms_size: {cfg.ms_size} is not a power of two")
        elif cfg.ms_size < 8:
            problems.append(f"ms_size: {cfg.ms_size} is below the minimum of 8")
    if net == "OS_MESH":
        for name in ("ms_rows", "ms_cols"):
            val = getattr(cfg, name)
            if val is None:
                problems.append(f"{name}: required for OS_MESH multiplier networks")
            elif not _is_pow2(val):
                problems.append(f"{name}: {val} is not a power of two")

    dn_bw, rn_bw = cfg.dn_bw, cfg.rn_bw
    if ct == SYSTOLIC_OS:
        if cfg.ms_rows is not None and cfg.ms_cols is not None:
            want_dn = cfg.ms_rows + cfg.ms_cols
            want_rn = cfg.ms_rows * cfg.ms_cols
            if dn_bw != want_dn:
                corrections.append(f"dn_bw corrected from {dn_bw} to ms_rows+ms_cols={want_dn}")
                dn_bw = want_dn
            if rn_bw != want_rn:
                corrections.append(f"rn_bw corrected from {rn_bw} to ms_rows*ms_cols={want_rn}")
                rn_bw = want_rn
        if cfg.reduce_network_type != "TEMPORALRN":
            problems.append(
                f"reduce_network_type: {ct} must use TEMPORALRN, got {cfg.reduce_network_type}")
        if not cfg.accumulation_buffer:
            problems.append(f"accumulation_buffer: must be enabled for {ct}")
    else:
        for name, val in (("dn_bw", dn_bw), ("rn_bw", rn_bw)):
            if val is None:
                problems.append(f"{name}: required")
            elif not _is_pow2(val):
                problems.append(f"{name}: {val} is not a power of two")

    if cfg.reduce_network_type not in REDUCE_NETWORK_TYPES:
        problems.append(f"reduce_network_type: unknown value {cfg.reduce_network_type!r}")

    if not isinstance(cfg.sparsity_ratio, int) or not 0 <= cfg.sparsity_ratio <= 100:
        problems.append(f"sparsity_ratio: {cfg.sparsity_ratio} outside 0..100")
    elif cfg.sparsity_ratio != 0 and ct != SPARSE_GEMM:
        warnings.append(f"sparsity_ratio: only used by {SPARSE_GEMM}, ignored for {ct}")

    if not isinstance(cfg.accumulation_buffer, bool):
        problems.append(f"accumulation_buffer: expected true or false, got {cfg.accumulation_buffer!r}")

    if problems:
        raise ConfigError(problems)

    tree_levels = ceil(log2(cfg.ms_size)) if net == "LINEAR" else None
    return ValidatedConfig(
        controller_type=ct, ms_network_type=net, ms_size=cfg.ms_size,
        ms_rows=cfg.ms_rows, ms_cols=cfg.ms_cols, dn_bw=dn_bw, rn_bw=rn_bw,
        reduce_network_type=cfg.reduce_network_type,
        sparsity_ratio=cfg.sparsity_ratio,
        accumulation_buffer=cfg.accumulation_buffer,
        tree_levels=tree_levels,
        corrections=tuple(corrections), warnings=tuple(warnings),
    )


def load_config(text):
    """Parse a config document into a HardwareConfig (not yet validated)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"malformed config document: {exc}"]) from None
    if not isinstance(doc, dict):
        raise ConfigError(["config document must be a JSON object"])
    unknown = doc.keys() - set(_CONFIG_FIELDS)
    if unknown:
        raise ConfigError([f"unknown config fields {sorted(unknown)}"])
    if "controller_type" not in doc:
        raise ConfigError(["controller_type: required"])
    ct = doc["controller_type"]
    ct = CONTROLLER_ALIASES.get(ct, ct)
    if ct not in CONTROLLER_TYPES:
        raise ConfigError([f"controller_type: unknown value {doc['controller_type']!r}"])
    kwargs = {"controller_type": ct}
    for f in fields(HardwareConfig):
        if f.name == "controller_type" or f.name not in doc:
            continue
        val = doc[f.name]
        if f.name in ("ms_size", "ms_rows", "ms_cols", "dn_bw", "rn_bw", "sparsity_ratio"):
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError([f"{f.name}: expected an integer, got {val!r}"])
            if f.name == "sparsity_ratio" and not 0 <= val <= 100:
                raise ConfigError([f"sparsity_ratio: {val} outside 0..100"])
            if f.name != "sparsity_ratio" and val < 1:
                raise ConfigError([f"{f.name}: {val} out of range"])
        elif f.name == "accumulation_buffer":
            if not isinstance(val, bool):
                raise ConfigError([f"accumulation_buffer: expected true or false, got {val!r}"])
        kwargs[f.name] = val
    return HardwareConfig(**kwargs)


def save_config(cfg):
    """Field-for-field JSON serialization; omitted optionals stay omitted."""
    doc = {}
    for name in _CONFIG_FIELDS:
        val = getattr(cfg, name)
        if val is not None:
            doc[name] = val
    return json.dumps(doc, indent=2)
