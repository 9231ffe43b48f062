"""Dataflow tile mappings and mapping-space enumeration.

A conv mapping is the tile vector (t_r, t_s, t_c, t_k, t_g, t_n, t_x,
t_y): how many filter rows/cols, channels and filters per group, groups,
inputs, and output rows/cols are mapped onto the multiplier array at a
time.  Fully connected layers use (t_s, t_n, t_k) for output neurons,
batches, and input neurons.  The spatial footprint (the product of all
tiles) may not exceed the multiplier count.
"""

import json
from dataclasses import dataclass, fields

from .errors import MappingError

CONV_TILE_NAMES = ("t_r", "t_s", "t_c", "t_k", "t_g", "t_n", "t_x", "t_y")
FC_TILE_NAMES = ("t_s", "t_n", "t_k")


@dataclass(frozen=True)
class ConvMapping:
    t_r: int = 1
    t_s: int = 1
    t_c: int = 1
    t_k: int = 1
    t_g: int = 1
    t_n: int = 1
    t_x: int = 1
    t_y: int = 1

    def astuple(self):
        return tuple(getattr(self, name) for name in CONV_TILE_NAMES)

    def footprint(self):
        out = 1
        for v in self.astuple():
            out *= v
        return out


@dataclass(frozen=True)
class FcMapping:
    t_s: int = 1
    t_n: int = 1
    t_k: int = 1

    def astuple(self):
        return (self.t_s, self.t_n, self.t_k)

    def footprint(self):
        return self.t_s * self.t_n * self.t_k


def default_mapping(layer):
    """The basic all-ones mapping, valid for every layer and config."""
    if layer.op_kind == "conv2d":
        return ConvMapping()
    if layer.op_kind == "dense":
        return FcMapping()
    raise MappingError([f"layer {layer.id!r}: no mapping for op {layer.op_kind!r}"])


def _tile_bounds(layer):
    """(name, upper bound) per tile, in canonical order."""
    params = layer.params
    if layer.op_kind == "conv2d":
        if params.p is None or params.q is None:
            raise MappingError([f"layer {layer.id!r}: shapes not inferred yet"])
        return (
            ("t_r", params.r), ("t_s", params.s), ("t_c", params.c_g),
            ("t_k", params.k_g), ("t_g", params.g), ("t_n", 1),
            ("t_x", params.p), ("t_y", params.q),
        )
    if layer.op_kind == "dense":
        return (("t_s", params.out_features), ("t_n", 1), ("t_k", params.in_features))
    raise MappingError([f"layer {layer.id!r}: no mapping space for op {layer.op_kind!r}"])


def _budget(cfg):
    return cfg.ms_size if cfg.ms_size is not None else cfg.ms_rows * cfg.ms_cols


def mapping_diagnostics(m, layer, cfg):
    """All violated constraints for a mapping, empty when valid."""
    bounds = _tile_bounds(layer)
    expect_type = ConvMapping if layer.op_kind == "conv2d" else FcMapping
    if not isinstance(m, expect_type):
        return [f"layer {layer.id!r}: expected a {expect_type.__name__}, got {type(m).__name__}"]
    out = []
    for name, bound in bounds:
        val = getattr(m, name)
        if val < 1:
            out.append(f"{name}={val} must be >= 1")
        elif name == "t_n" and val != 1:
            out.append(f"t_n={val} but only 1 input is supported")
        elif val > bound:
            out.append(f"{name}={val} exceeds its dimension bound {bound}")
    budget = _budget(cfg)
    if m.footprint() > budget:
        out.append(f"footprint {m.footprint()} exceeds the {budget} multipliers")
    return out


def validate_mapping(m, layer, cfg):
    """Raise MappingError carrying every violated constraint."""
    problems = mapping_diagnostics(m, layer, cfg)
    if problems:
        raise MappingError([f"layer {layer.id!r}: {p}" for p in problems])
    return m


def divisors(n):
    out = [d for d in range(1, n + 1) if n % d == 0]
    return tuple(out)


class MappingSpace:
    """All valid tile vectors for one layer under a multiplier budget.

    Candidate values per tile come from the chosen policy (divisors of
    the dimension bound, or the full 1..bound range); a combination is a
    member iff its footprint fits the budget.  Iteration order is
    lexicographic over the tile vectors.  Counting and unranking walk
    the candidate lists with a memoized budget recursion, so spaces far
    too large to materialize stay cheap to size and sample.
    """

    def __init__(self, kind, names, candidates, budget):
        self.kind = kind
        self.names = tuple(names)
        self.candidates = tuple(tuple(c) for c in candidates)
        self.budget = budget
        self._count_memo = {}

    @property
    def mapping_type(self):
        return ConvMapping if self.kind == "conv2d" else FcMapping

    def raw_size(self):
        out = 1
        for c in self.candidates:
            out *= len(c)
        return out

    def _count(self, level, budget):
        if level == len(self.candidates):
            return 1
        key = (level, budget)
        hit = self._count_memo.get(key)
        if hit is not None:
            return hit
        total = 0
        for v in self.candidates[level]:
            if v > budget:
                break  # candidates ascend
            total += self._count(level + 1, budget // v)
        self._count_memo[key] = total
        return total

    def size(self):
        return self._count(0, self.budget)

    def __len__(self):
        return self.size()

    def _make(self, values):
        return self.mapping_type(**dict(zip(self.names, values)))

    def __iter__(self):
        def walk(level, budget, prefix):
            if level == len(self.candidates):
                yield self._make(prefix)
                return
            for v in self.candidates[level]:
                if v > budget:
                    break
                yield from walk(level + 1, budget // v, prefix + (v,))

        return walk(0, self.budget, ())

    def unrank(self, index):
        """The index-th mapping in lexicographic order."""
        if not 0 <= index < self.size():
            raise IndexError(f"rank {index} outside space of size {self.size()}")
        values = []
        budget = self.budget
        for level in range(len(self.candidates)):
            for v in self.candidates[level]:
                if v > budget:
                    break
                below = self._count(level + 1, budget // v)
                if index < below:
                    values.append(v)
                    budget //= v
                    break
                index -= below
        return self._make(tuple(values))

    def __contains__(self, m):
        if not isinstance(m, self.mapping_type):
            return False
        vals = m.astuple()
        if any(v not in c for v, c in zip(vals, self.candidates)):
            return False
        fp = 1
        for v in vals:
            fp *= v
        return fp <= self.budget


def enumerate_space(layer, cfg, policy="divisors"):
    """Mapping space for a layer: per-tile candidates plus footprint filter."""
    if policy not in ("divisors", "full"):
        raise MappingError([f"unknown mapping-space policy {policy!r}"])
    bounds = _tile_bounds(layer)
    candidates = []
    for _, bound in bounds:
        if policy == "divisors":
            candidates.append(divisors(bound))
        else:
            candidates.append(tuple(range(1, bound + 1)))
    return MappingSpace(layer.op_kind, tuple(n for n, _ in bounds), candidates, _budget(cfg))


# ---------------------------------------------------------------------------
# mapping files and external providers

def mapping_from_dict(op_kind, tiles):
    names = CONV_TILE_NAMES if op_kind == "conv2d" else FC_TILE_NAMES
    unknown = tiles.keys() - set(names)
    if unknown:
        raise MappingError([f"unknown tile names {sorted(unknown)} for {op_kind}"])
    bad = [kk for kk, v in tiles.items() if not isinstance(v, int) or isinstance(v, bool)]
    if bad:
        raise MappingError([f"tile values must be integers: {sorted(bad)}"])
    cls = ConvMapping if op_kind == "conv2d" else FcMapping
    return cls(**tiles)


def mapping_to_dict(m):
    return {f.name: getattr(m, f.name) for f in fields(m)}


def load_mapping_file(text):
    """Mapping file: { "<layer-id>": { "t_r": ..., ... }, ... }."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MappingError([f"malformed mapping document: {exc}"]) from None
    if not isinstance(doc, dict) or not all(isinstance(v, dict) for v in doc.values()):
        raise MappingError(["mapping document must map layer ids to tile objects"])
    return doc


def save_mapping_file(per_layer):
    doc = {lid: mapping_to_dict(m) for lid, m in per_layer.items()}
    return json.dumps(doc, indent=2, sort_keys=True)


def resolve_mapping(layer, cfg, raw_doc, notices=None):
    """Mapping for one layer from a parsed mapping file.

    Layers missing from the file fall back to the default mapping with a
    notice; present entries must validate.
    """
    entry = raw_doc.get(layer.id) if raw_doc else None
    if entry is None:
        if notices is not None:
            notices.append(f"layer {layer.id!r}: no mapping provided, using the default")
        return default_mapping(layer)
    return validate_mapping(mapping_from_dict(layer.op_kind, entry), layer, cfg)


_PROVIDERS = {}


def register_provider(name, fn):
    """Register an external mapping provider: fn(layer, cfg) -> tile dict."""
    _PROVIDERS[name] = fn


def register_file_provider(name, path):
    """Provider backed by a mapping file on disk, read at call time."""

    def read(layer, cfg):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = load_mapping_file(fh.read())
        except OSError as exc:
            raise MappingError([f"provider {name!r}: cannot read {path}: {exc}"]) from None
        entry = doc.get(layer.id)
        if entry is None:
            raise MappingError([f"provider {name!r}: no mapping for layer {layer.id!r}"])
        return entry

    register_provider(name, read)


def external_mapping_provider(layer, cfg, provider):
    """Fetch a mapping from a registered provider and validate it before use."""
    fn = _PROVIDERS.get(provider)
    if fn is None:
        raise MappingError([f"unknown mapping provider {provider!r}"])
    tiles = fn(layer, cfg)
    if not isinstance(tiles, dict):
        tiles = mapping_to_dict(tiles)
    return validate_mapping(mapping_from_dict(layer.op_kind, tiles), layer, cfg)
