"""Command-line interface: validate, run, tune, and sweep.

Diagnostics go to stderr; data goes to the output files only, so runs
with identical inputs, flags, and seeds produce byte-identical files.
Exit codes: 0 success, 2 invalid config, 3 invalid model, 4 simulation
or tuning failure, 5 I/O failure.
"""

import argparse
import csv
import sys
from dataclasses import replace

from . import graph, mapping, runner, tensors, tuner
from .config import load_config, validate_config
from .errors import (BifrostError, ConfigError, MappingError, ModelError,
                     ShapeError, SimulatorError, TunerError)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_SIM = 4
EXIT_IO = 5

RUN_COLUMNS = ("layer_id", "op", "offloaded", "cycles", "psums", "macs",
               "skipped_macs", "utilization")
HISTORY_COLUMNS = ("trial_index", "layer_id", "t_r", "t_s", "t_c", "t_k",
                   "t_g", "t_n", "t_x", "t_y", "cost", "best_so_far")
SWEEP_COLUMNS = ("param", "value", "best_cost", "valid", "detail")

_TUNER_NAMES = {"grid": "grid", "random": "random", "ga": "genetic"}


def _build_parser():
    parser = argparse.ArgumentParser(prog="bifrost", description=__doc__)
    sub = parser.add_subparsers(dest="action", required=True)

    p = sub.add_parser("validate", help="check a hardware config against every rule")
    p.add_argument("-c", "--config", required=True)

    p = sub.add_parser("run", help="execute a model on the simulated accelerator")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-c", "--config", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--mappings", help="mapping file keyed by layer id")
    group.add_argument("--tune-first", action="store_true",
                       help="generate mappings with a quick psums-objective tune")
    p.add_argument("--input", help="raw little-endian float32 input blob")
    p.add_argument("--seed", type=int, help="override the model's data seed")
    p.add_argument("--data-mode", choices=("int", "float"), default="int")
    p.add_argument("--verify", action="store_true",
                   help="recompute with reference kernels and fail on any mismatch")
    p.add_argument("-o", "--output", required=True, help="per-layer report CSV")

    p = sub.add_parser("tune", help="search mapping space for each offloadable layer")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--objective", required=True, choices=tuner.OBJECTIVES)
    p.add_argument("--tuner", required=True, choices=tuple(_TUNER_NAMES))
    p.add_argument("--budget", type=int)
    p.add_argument("--early-stop", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", choices=("divisors", "full"), default="divisors")
    p.add_argument("-o", "--output", required=True, help="best-mapping file")
    p.add_argument("--history", help="tuning-history CSV")

    p = sub.add_parser("sweep", help="evaluate a hardware parameter over a value list")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--objective", required=True, choices=tuner.OBJECTIVES)
    p.add_argument("--tuner", choices=tuple(_TUNER_NAMES), default="grid")
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", choices=("divisors", "full"), default="divisors")
    p.add_argument("--mappings", help="fixed mapping file instead of tuning")
    p.add_argument("-o", "--output", required=True, help="sweep CSV")
    return parser


def _read(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _load_validated_config(path):
    return validate_config(load_config(_read(path)))


def _load_model(path, seed=None):
    model = graph.parse_model(_read(path))
    if seed is not None:
        model = replace(model, seed=seed)
    return graph.infer_shapes(model)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _report_notices(cfg, notices):
    for note in cfg.corrections + cfg.warnings + tuple(notices or ()):
        print(f"notice: {note}", file=sys.stderr)


def _cmd_validate(args):
    cfg = _load_validated_config(args.config)
    _report_notices(cfg, None)
    print("config valid", file=sys.stderr)
    return EXIT_OK


def _options_from(args, strategy):
    budget = args.budget
    if budget is None and strategy in ("random", "genetic"):
        budget = 1000
    return tuner.TunerOptions(
        strategy=strategy, budget=budget,
        early_stop=getattr(args, "early_stop", None),
        seed=getattr(args, "seed", 0) or 0,
        policy=args.policy,
    )


def _cmd_run(args):
    cfg = _load_validated_config(args.config)
    model = _load_model(args.model, args.seed)
    notices = []
    raw_mappings = None
    if args.mappings:
        raw_mappings = mapping.load_mapping_file(_read(args.mappings))
    elif args.tune_first:
        options = tuner.TunerOptions(strategy="genetic", budget=128,
                                     seed=args.seed or 0, policy="divisors")
        tuned = tuner.tune_model(model, cfg, "psums", options)
        if tuned.errors:
            for lid, msg in tuned.errors.items():
                print(f"error: layer {lid!r}: {msg}", file=sys.stderr)
            return EXIT_SIM
        raw_mappings = {lid: mapping.mapping_to_dict(r.best_mapping)
                        for lid, r in tuned.results.items()}
    input_tensor = None
    if args.input:
        first = next((l for l in model.layers if l.in_shape is not None), None)
        if first is None:
            raise ShapeError("model has no shaped layer; cannot size the input blob")
        input_tensor = tensors.load_blob(args.input, first.in_tag, first.in_shape)
    report = runner.run_model(model, cfg, raw_mappings, input_tensor,
                              data_mode=args.data_mode, notices=notices)
    _report_notices(cfg, notices)
    rows = []
    for entry in report.entries:
        if entry.offloaded:
            r = entry.report
            rows.append((entry.layer_id, entry.op_kind, "true", r.cycles, r.psums,
                         r.macs, r.skipped_macs, f"{r.utilization:.6f}"))
        else:
            rows.append((entry.layer_id, entry.op_kind, "false", 0, 0, 0, 0, ""))
    rows.append(("TOTAL", "", "", report.cycles, report.psums, report.macs,
                 report.skipped_macs, ""))
    _write_csv(args.output, RUN_COLUMNS, rows)
    if args.verify:
        table = runner.verify_against_reference(model, input_tensor, report,
                                                data_mode=args.data_mode)
        bad = [lid for lid, ok in table if not ok]
        if bad:
            print(f"verification FAILED for layers: {', '.join(bad)}", file=sys.stderr)
            return EXIT_SIM
        print(f"verification passed for all {len(table)} layers", file=sys.stderr)
    return EXIT_OK


def _tile_cells(m):
    cells = dict.fromkeys(HISTORY_COLUMNS[2:10], "")
    for name, value in mapping.mapping_to_dict(m).items():
        cells[name] = value
    return [cells[name] for name in HISTORY_COLUMNS[2:10]]


def _cmd_tune(args):
    cfg = _load_validated_config(args.config)
    model = _load_model(args.model)
    strategy = _TUNER_NAMES[args.tuner]
    if strategy == "grid":
        for layer in model.layers:
            if layer.op_kind not in graph.OFFLOADABLE_OPS:
                continue
            raw = mapping.enumerate_space(layer, cfg, args.policy).raw_size()
            if raw > tuner.GRID_LIMIT:
                print(f"error: layer {layer.id!r}: grid search over {raw} raw combinations "
                      f"refused; use --tuner random|ga or --policy divisors",
                      file=sys.stderr)
                return EXIT_SIM
    options = _options_from(args, strategy)
    tuned = tuner.tune_model(model, cfg, args.objective, options)
    for lid, msg in tuned.errors.items():
        print(f"error: layer {lid!r}: {msg}", file=sys.stderr)
    best = {lid: r.best_mapping for lid, r in tuned.results.items()}
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(mapping.save_mapping_file(best))
        fh.write("\n")
    if args.history:
        rows = []
        for lid in sorted(tuned.results):
            running = None
            for idx, (m, cost) in enumerate(tuned.results[lid].history):
                running = cost if running is None else min(running, cost)
                rows.append([idx, lid, *_tile_cells(m), cost, running])
        _write_csv(args.history, HISTORY_COLUMNS, rows)
    for lid in sorted(tuned.results):
        r = tuned.results[lid]
        print(f"layer {lid}: best {args.objective}={r.best_cost} "
              f"after {r.trials_evaluated} trials"
              + (" (early stop)" if r.converged else ""), file=sys.stderr)
    return EXIT_SIM if tuned.errors else EXIT_OK


def _parse_values(text):
    values = []
    for item in text.split(","):
        item = item.strip()
        if item.lower() in ("true", "false"):
            values.append(item.lower() == "true")
            continue
        try:
            values.append(int(item))
        except ValueError:
            raise TunerError(f"sweep values must be integers or true/false, got {item!r}")
    return values


def _cmd_sweep(args):
    base = load_config(_read(args.config))
    model = _load_model(args.model)
    values = _parse_values(args.values)
    raw_mappings = mapping.load_mapping_file(_read(args.mappings)) if args.mappings else None
    options = _options_from(args, _TUNER_NAMES[args.tuner])
    rows = tuner.sweep_hardware(model, base, args.param, values, args.objective,
                                options, raw_mappings)
    out = []
    for row in rows:
        out.append((args.param, row.value,
                    "" if row.best_cost is None else row.best_cost,
                    "true" if row.ok else "false", row.detail))
        if not row.ok:
            print(f"notice: {args.param}={row.value}: {row.detail}", file=sys.stderr)
    _write_csv(args.output, SWEEP_COLUMNS, out)
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {"validate": _cmd_validate, "run": _cmd_run,
                "tune": _cmd_tune, "sweep": _cmd_sweep}
    try:
        return handlers[args.action](args)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (SimulatorError, TunerError, MappingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BifrostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
