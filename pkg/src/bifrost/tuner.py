"""Mapping-space search: grid, random, and genetic strategies.

Costs come from the deterministic cycle model or the psum count, so a
single evaluation per trial suffices.  All strategies are seeded and
evaluate candidates in pre-built batches, so the reported result is
independent of the parallelism level.  Ties are broken toward the
lexicographically smallest tile vector.
"""

import os
import random
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import tensors
from .config import FLEX_LINEAR, HardwareConfig, validate_config
from .errors import ConfigError, MappingError, SimulatorError, TunerError
from .graph import OFFLOADABLE_OPS, infer_shapes
from .mapping import enumerate_space, resolve_mapping
from .simulator import count_psums, simulate_flexible_conv, simulate_flexible_fc

OBJECTIVES = ("cycles", "psums")
STRATEGIES = ("grid", "random", "genetic")

# evaluation chunk; fixed so early stopping triggers at the same trial
# index no matter how many workers run the chunk
_CHUNK = 64

# grid search beyond this is refused; use random/genetic or the divisors policy
GRID_LIMIT = 10 ** 6


@dataclass(frozen=True)
class TunerOptions:
    strategy: str = "grid"
    budget: int | None = None
    early_stop: int | None = None
    seed: int = 0
    population: int = 32
    mutation_rate: float = 0.1
    elite_fraction: float = 0.1
    parallelism: int | None = None
    policy: str = "divisors"

    def check(self):
        if self.strategy not in STRATEGIES:
            raise TunerError(f"unknown strategy {self.strategy!r}")
        if self.budget is not None and self.budget < 1:
            raise TunerError(f"budget must be >= 1, got {self.budget}")
        if self.early_stop is not None and self.early_stop < 1:
            raise TunerError(f"early_stop must be >= 1, got {self.early_stop}")
        if self.strategy == "genetic":
            if not 0 < self.mutation_rate < 1:
                raise TunerError(f"mutation_rate must be in (0, 1), got {self.mutation_rate}")
            if self.population < 2:
                raise TunerError(f"population must be >= 2, got {self.population}")


@dataclass(frozen=True)
class TuneResult:
    best_mapping: object
    best_cost: int
    trials_evaluated: int
    history: tuple     # ((mapping, cost), ...) in trial order
    converged: bool


@dataclass(frozen=True)
class ModelTuneResult:
    results: dict      # layer id -> TuneResult
    errors: dict       # layer id -> error message


def _layer_rng(layer, salt):
    return np.random.default_rng([zlib.crc32(layer.id.encode()), salt])


def _trial_data(layer):
    """Deterministic operands for cycle-objective trials."""
    params = layer.params
    if layer.op_kind == "conv2d":
        x = tensors.random_tensor("NHWC", (1, params.h, params.w, params.c),
                                  _layer_rng(layer, 1))
        w = tensors.random_weights("RSCK", (params.r, params.s, params.c_g, params.k),
                                   _layer_rng(layer, 2))
        return x, w
    x = tensors.random_tensor(tensors.MAT_TAG, (1, params.in_features), _layer_rng(layer, 1))
    w = tensors.random_weights(tensors.MAT_TAG,
                               (params.in_features, params.out_features),
                               _layer_rng(layer, 2))
    return x, w


def trial_cost(layer, m, cfg, objective, data=None):
    """Deterministic scalar cost of one mapping."""
    if objective == "psums":
        return count_psums(layer, m)
    if objective != "cycles":
        raise TunerError(f"unknown objective {objective!r}")
    if data is None:
        data = _trial_data(layer)
    x, w = data
    if layer.op_kind == "conv2d":
        return simulate_flexible_conv(x, w, layer.params, m, cfg).cycles
    return simulate_flexible_fc(x, w, layer.params, m, cfg).cycles


def _parallelism(options):
    if options.parallelism is not None:
        return max(1, options.parallelism)
    env = os.environ.get("BIFROST_PARALLELISM")
    return max(1, int(env)) if env else 1


def _evaluate(evaluate, batch, workers):
    if workers > 1 and len(batch) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(evaluate, batch))
    return [evaluate(m) for m in batch]


class _Recorder:
    """Consumes (mapping, cost) pairs in trial order; applies early stopping."""

    def __init__(self, early_stop):
        self.history = []
        self.best = None
        self.early_stop = early_stop
        self.stale = 0
        self.converged = False

    def consume(self, pairs):
        """Record pairs one at a time; True while the search should continue."""
        for m, cost in pairs:
            self.history.append((m, cost))
            key = (cost, m.astuple())
            if self.best is None or key < self.best:
                self.best = key
                self.stale = 0
            else:
                self.stale += 1
                if self.early_stop is not None and self.stale >= self.early_stop:
                    self.converged = True
                    return False
        return True

    def result(self, space):
        best_cost, best_tiles = self.best
        best = space.mapping_type(**dict(zip(space.names, best_tiles)))
        return TuneResult(best_mapping=best, best_cost=best_cost,
                          trials_evaluated=len(self.history),
                          history=tuple(self.history), converged=self.converged)


def tune_layer(layer, cfg, objective, options):
    """Search the layer's mapping space for the lowest-cost tile vector."""
    options.check()
    if objective not in OBJECTIVES:
        raise TunerError(f"unknown objective {objective!r}")
    if cfg.controller_type != FLEX_LINEAR:
        raise TunerError(
            f"mapping tuning targets the flexible array; got a {cfg.controller_type} config")
    if layer.op_kind not in OFFLOADABLE_OPS:
        raise TunerError(f"layer {layer.id!r}: op {layer.op_kind!r} has no mapping space")
    space = enumerate_space(layer, cfg, options.policy)
    size = space.size()
    if size == 0:
        raise TunerError(f"layer {layer.id!r}: empty mapping space")
    data = _trial_data(layer) if objective == "cycles" else None

    def evaluate(m):
        return m, trial_cost(layer, m, cfg, objective, data)

    workers = _parallelism(options)

    if options.strategy == "grid":
        if size > GRID_LIMIT:
            raise TunerError(
                f"grid search over {size} mappings refused; use the random or genetic "
                f"strategy, or the divisors policy, for spaces above {GRID_LIMIT}")
        if options.budget is not None and options.budget < size:
            raise TunerError(
                f"grid search needs budget >= space size ({size}), got {options.budget}")
        rec = _Recorder(early_stop=None)  # grid is exhaustive by definition
        batch = []
        for m in space:
            batch.append(m)
            if len(batch) == _CHUNK:
                rec.consume(_evaluate(evaluate, batch, workers))
                batch = []
        if batch:
            rec.consume(_evaluate(evaluate, batch, workers))
        return rec.result(space)

    if options.budget is None:
        raise TunerError(f"the {options.strategy} strategy requires a budget")

    if options.strategy == "random":
        rng = random.Random(options.seed)
        ranks = rng.sample(range(size), min(options.budget, size))
        rec = _Recorder(options.early_stop)
        for lo in range(0, len(ranks), _CHUNK):
            batch = [space.unrank(i) for i in ranks[lo:lo + _CHUNK]]
            if not rec.consume(_evaluate(evaluate, batch, workers)):
                break
        return rec.result(space)

    return _tune_genetic(space, evaluate, options, workers)


def _tune_genetic(space, evaluate, options, workers):
    rng = random.Random(options.seed)
    levels = space.candidates
    size = space.size()
    budget = options.budget
    pop_size = min(options.population, size, budget)
    n_elite = max(1, int(options.elite_fraction * pop_size))

    def genome_of(m):
        vals = m.astuple()
        return tuple(levels[i].index(v) for i, v in enumerate(vals))

    def decode(genome):
        vals = tuple(levels[i][g] for i, g in enumerate(genome))
        return space.mapping_type(**dict(zip(space.names, vals)))

    def feasible(genome):
        fp = 1
        for i, g in enumerate(genome):
            fp *= levels[i][g]
        return fp <= space.budget

    seen = set()
    rec = _Recorder(options.early_stop)
    costs = {}

    def run_batch(genomes):
        """Evaluate unseen genomes; False when the search should stop."""
        genomes = genomes[:budget - len(seen)]
        for g in genomes:
            seen.add(g)
        pairs = _evaluate(evaluate, [decode(g) for g in genomes], workers)
        for g, (m, cost) in zip(genomes, pairs):
            costs[g] = cost
        return rec.consume(pairs) and len(seen) < budget and len(seen) < size

    def random_fresh(guard):
        # unrank only produces feasible genomes; retry on duplicates
        while True:
            g = genome_of(space.unrank(rng.randrange(size)))
            if g not in seen and g not in guard:
                return g

    population = []
    guard = set()
    while len(population) < pop_size:
        g = random_fresh(guard)
        guard.add(g)
        population.append(g)
    going = run_batch(population)

    def tournament():
        a = population[rng.randrange(len(population))]
        b = population[rng.randrange(len(population))]
        ka = (costs[a], decode(a).astuple())
        kb = (costs[b], decode(b).astuple())
        return a if ka <= kb else b

    while going:
        ordered = sorted(population, key=lambda g: (costs[g], decode(g).astuple()))
        next_pop = ordered[:n_elite]
        fresh = []
        batch_guard = set(next_pop)
        while len(next_pop) < pop_size:
            if len(seen) + len(fresh) >= size:
                break
            pa, pb = tournament(), tournament()
            child = tuple(a if rng.random() < 0.5 else b for a, b in zip(pa, pb))
            child = tuple(rng.randrange(len(levels[i])) if rng.random() < options.mutation_rate else g
                          for i, g in enumerate(child))
            if not feasible(child) or child in seen or child in batch_guard:
                child = random_fresh(batch_guard)
            batch_guard.add(child)
            next_pop.append(child)
            fresh.append(child)
        if not fresh:
            break
        going = run_batch(fresh)
        population = next_pop
    return rec.result(space)


def tune_model(model, cfg, objective, options):
    """Tune every offloadable layer independently; errors do not stop the rest."""
    model = infer_shapes(model)
    results, errors = {}, {}
    for layer in model.layers:
        if layer.op_kind not in OFFLOADABLE_OPS:
            continue
        try:
            results[layer.id] = tune_layer(layer, cfg, objective, options)
        except TunerError as exc:
            errors[layer.id] = str(exc)
    return ModelTuneResult(results=results, errors=errors)


@dataclass(frozen=True)
class SweepRow:
    value: object
    best_cost: int | None
    ok: bool
    detail: str


def sweep_hardware(target, base_cfg, param, values, objective, options=None,
                   raw_mappings=None):
    """Evaluate a hardware parameter over explicit values, one row per value.

    With a mapping document the cost of the given mappings is evaluated
    directly; otherwise each offloadable layer is tuned per value.  A
    value that fails config validation is reported in its row and the
    sweep continues.
    """
    if param not in HardwareConfig.__dataclass_fields__:
        raise TunerError(f"unknown hardware parameter {param!r}")
    options = options or TunerOptions()
    layers = _sweep_layers(target)
    rows = []
    for value in values:
        try:
            cfg = validate_config(replace(_as_hw(base_cfg), **{param: value}))
        except ConfigError as exc:
            rows.append(SweepRow(value, None, False, "; ".join(exc.diagnostics)))
            continue
        try:
            total = 0
            for layer in layers:
                if raw_mappings is not None:
                    m = resolve_mapping(layer, cfg, raw_mappings)
                    total += trial_cost(layer, m, cfg, objective)
                else:
                    total += tune_layer(layer, cfg, objective, options).best_cost
            rows.append(SweepRow(value, total, True, ""))
        except (TunerError, ConfigError, SimulatorError, MappingError) as exc:
            rows.append(SweepRow(value, None, False, str(exc)))
    return rows


def _as_hw(cfg):
    if isinstance(cfg, HardwareConfig):
        return cfg
    return HardwareConfig(**{name: getattr(cfg, name)
                             for name in HardwareConfig.__dataclass_fields__})


def _sweep_layers(target):
    if hasattr(target, "layers"):
        model = infer_shapes(target)
        layers = [l for l in model.layers if l.op_kind in OFFLOADABLE_OPS]
        if not layers:
            raise TunerError("model has no offloadable layers to sweep")
        return layers
    if target.op_kind not in OFFLOADABLE_OPS:
        raise TunerError(f"layer {target.id!r}: op {target.op_kind!r} cannot be swept")
    if target.op_kind == "conv2d" and target.params.p is None:
        model_like = infer_shapes(_single_layer_model(target))
        return [model_like.layers[0]]
    return [target]


def _single_layer_model(layer):
    from .graph import Model
    return Model(name="layer", seed=0, layers=(layer,))
