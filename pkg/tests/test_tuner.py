import itertools
import json

import pytest

from bifrost.errors import TunerError
from bifrost.graph import infer_shapes, load_bundled, parse_model
from bifrost.mapping import (enumerate_space, load_mapping_file,
                             mapping_from_dict, save_mapping_file,
                             validate_mapping)
from bifrost.simulator import count_psums
from bifrost.tuner import (TunerOptions, sweep_hardware, trial_cost,
                           tune_layer, tune_model)
from conftest import conv_layer, fc_layer, flex_cfg, sparse_cfg

FIG_CONV = dict(r=3, s=3, c=2, k=4, h=10, w=10)


def brute_force_best(layer, cfg, objective, policy="divisors"):
    """Independent oracle: cross product, footprint filter, running minimum."""
    space = enumerate_space(layer, cfg, policy)
    best = None
    for combo in itertools.product(*space.candidates):
        fp = 1
        for v in combo:
            fp *= v
        if fp > space.budget:
            continue
        m = space.mapping_type(**dict(zip(space.names, combo)))
        key = (trial_cost(layer, m, cfg, objective), combo)
        if best is None or key < best:
            best = key
    return best


def test_trial_cost_examples():
    fc = fc_layer(in_features=6, out_features=4)
    cfg = flex_cfg(ms_size=8)
    m = mapping_from_dict("dense", {"t_k": 6})
    assert trial_cost(fc, m, cfg, "psums") == 4
    from bifrost.simulator import simulate_flexible_fc
    from bifrost.tuner import _trial_data
    x, w = _trial_data(fc)
    assert trial_cost(fc, m, cfg, "cycles") == simulate_flexible_fc(
        x, w, fc.params, m, cfg).cycles
    assert trial_cost(fc, m, cfg, "cycles") == trial_cost(fc, m, cfg, "cycles")
    with pytest.raises(TunerError, match="unknown objective"):
        trial_cost(fc, m, cfg, "watts")


def test_grid_finds_fc_psum_optimum():
    fc = fc_layer(in_features=6, out_features=4)
    result = tune_layer(fc, flex_cfg(128), "psums", TunerOptions(strategy="grid"))
    assert result.trials_evaluated == 12
    assert result.best_cost == 4
    assert result.best_mapping.t_k == 6
    assert not result.converged
    assert result.best_cost == min(c for _, c in result.history)


def test_singleton_space_returns_default():
    layer = conv_layer(r=1, s=1, c=1, k=1, h=1, w=1)
    result = tune_layer(layer, flex_cfg(8), "cycles", TunerOptions(strategy="grid"))
    assert result.trials_evaluated == 1
    assert result.best_mapping.astuple() == (1,) * 8


@pytest.mark.parametrize("objective", ["cycles", "psums"])
def test_grid_matches_brute_force(objective):
    layer = conv_layer(**FIG_CONV)
    for ms in (8, 32):
        cfg = flex_cfg(ms)
        result = tune_layer(layer, cfg, objective, TunerOptions(strategy="grid"))
        cost, tiles = brute_force_best(layer, cfg, objective)
        assert result.best_cost == cost
        assert result.best_mapping.astuple() == tiles  # lexicographic tie-break


def test_random_and_genetic_with_full_coverage_match_grid():
    layer = conv_layer(**FIG_CONV)
    cfg = flex_cfg(32)
    size = enumerate_space(layer, cfg).size()
    grid = tune_layer(layer, cfg, "cycles", TunerOptions(strategy="grid"))
    rnd = tune_layer(layer, cfg, "cycles",
                     TunerOptions(strategy="random", budget=size, seed=5))
    gen = tune_layer(layer, cfg, "cycles",
                     TunerOptions(strategy="genetic", budget=size, seed=5))
    assert rnd.best_cost == grid.best_cost
    assert gen.best_cost == grid.best_cost
    assert rnd.trials_evaluated == size
    assert gen.trials_evaluated == size


def test_stochastic_strategies_bounded_below_by_grid_and_always_valid():
    layer = conv_layer(**FIG_CONV)
    cfg = flex_cfg(64)
    grid = tune_layer(layer, cfg, "cycles", TunerOptions(strategy="grid"))
    for seed in range(5):
        for strategy in ("random", "genetic"):
            res = tune_layer(layer, cfg, "cycles",
                             TunerOptions(strategy=strategy, budget=30, seed=seed,
                                          population=10))
            assert res.best_cost >= grid.best_cost
            validate_mapping(res.best_mapping, layer, cfg)
            for m, _ in res.history:
                validate_mapping(m, layer, cfg)


def test_seeded_reproducibility_independent_of_parallelism():
    layer = conv_layer(**FIG_CONV)
    cfg = flex_cfg(64)
    results = []
    for workers in (1, 8):
        opts = TunerOptions(strategy="genetic", budget=60, seed=9, population=12,
                            parallelism=workers)
        results.append(tune_layer(layer, cfg, "cycles", opts))
    a, b = results
    assert a.best_mapping == b.best_mapping and a.best_cost == b.best_cost
    assert a.history == b.history
    again = tune_layer(layer, cfg, "cycles",
                       TunerOptions(strategy="genetic", budget=60, seed=9,
                                    population=12, parallelism=1))
    assert again.history == a.history


def test_early_stopping():
    layer = conv_layer(**FIG_CONV)
    cfg = flex_cfg(32)
    size = enumerate_space(layer, cfg).size()
    res = tune_layer(layer, cfg, "psums",
                     TunerOptions(strategy="random", budget=size, seed=0, early_stop=10))
    assert res.converged
    assert res.trials_evaluated < size


def test_option_validation():
    layer = fc_layer()
    with pytest.raises(TunerError, match="budget"):
        tune_layer(layer, flex_cfg(), "psums",
                   TunerOptions(strategy="random", budget=0))
    with pytest.raises(TunerError, match="requires a budget"):
        tune_layer(layer, flex_cfg(), "psums", TunerOptions(strategy="random"))
    with pytest.raises(TunerError, match="unknown strategy"):
        tune_layer(layer, flex_cfg(), "psums", TunerOptions(strategy="anneal", budget=1))
    with pytest.raises(TunerError, match="flexible array"):
        tune_layer(layer, sparse_cfg(), "psums", TunerOptions())


def test_grid_refuses_oversized_space():
    # a wide-open budget leaves the full-range space in the millions
    layer = conv_layer(r=4, s=4, c=24, k=24, h=28, w=28)
    cfg = flex_cfg(2 ** 20)
    assert enumerate_space(layer, cfg, "full").size() > 10 ** 6
    with pytest.raises(TunerError, match="refused"):
        tune_layer(layer, cfg, "psums", TunerOptions(strategy="grid", policy="full"))


def test_tune_model_alexnet_layer_set():
    model = load_bundled("alexnet")
    tuned = tune_model(model, flex_cfg(128), "psums",
                       TunerOptions(strategy="genetic", budget=100, seed=1))
    assert not tuned.errors
    assert sorted(tuned.results) == ["conv1", "conv2", "conv3", "conv4", "conv5",
                                     "fc1", "fc2", "fc3"]
    # the emitted mapping file re-validates against the model
    doc = save_mapping_file({lid: r.best_mapping for lid, r in tuned.results.items()})
    raw = load_mapping_file(doc)
    cfg = flex_cfg(128)
    for layer in infer_shapes(model).layers:
        if layer.id in raw:
            validate_mapping(mapping_from_dict(layer.op_kind, raw[layer.id]), layer, cfg)


def test_tune_model_without_offloadable_layers():
    model = parse_model(json.dumps({"name": "acts", "seed": 0, "layers": [
        {"id": "r1", "op": "relu"}, {"id": "r2", "op": "relu"}]}))
    tuned = tune_model(model, flex_cfg(), "psums", TunerOptions(strategy="grid"))
    assert tuned.results == {} and tuned.errors == {}


def test_sweep_ms_size_rows_and_invalid_value():
    from bifrost.config import HardwareConfig
    layer = conv_layer(**FIG_CONV)
    base = HardwareConfig("FLEX_LINEAR", ms_size=8)
    rows = sweep_hardware(layer, base, "ms_size", [8, 12, 16], "psums",
                          TunerOptions(strategy="grid"))
    assert [r.value for r in rows] == [8, 12, 16]
    assert rows[0].ok and rows[2].ok
    assert not rows[1].ok and "not a power of two" in rows[1].detail
    assert rows[2].best_cost <= rows[0].best_cost
    single = sweep_hardware(layer, base, "ms_size", [8], "psums",
                            TunerOptions(strategy="grid"))
    direct = tune_layer(layer, flex_cfg(8), "psums", TunerOptions(strategy="grid"))
    assert single[0].best_cost == direct.best_cost
    with pytest.raises(TunerError, match="unknown hardware parameter"):
        sweep_hardware(layer, base, "pe_count", [8], "psums")


def test_sweep_fixed_mapping_uses_supplied_tiles():
    layer = conv_layer(**FIG_CONV, lid="conv")
    from bifrost.config import HardwareConfig
    base = HardwareConfig("FLEX_LINEAR", ms_size=64)
    raw = {"conv": {"t_r": 3, "t_s": 3, "t_c": 2}}
    rows = sweep_hardware(layer, base, "ms_size", [64], "psums", raw_mappings=raw)
    m = mapping_from_dict("conv2d", raw["conv"])
    assert rows[0].best_cost == count_psums(layer, m)
