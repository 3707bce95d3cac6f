"""Command line entry point: ``copselect <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from typing import List, Optional

from .config import ConfigError, ExperimentConfig, configure_logging, echo_config, load_config, parse_label
from .cop import GenerationError, InstanceParseError, Objective, deserialize, random_instance, serialize
from .evolver import SelectionError, SubsetKind, dump_population, evolve, load_population, select_subset
from .features import write_feature_table
from .harness import Pipeline, emit_report, parse_report_csv, run_benchmark, run_pipeline
from .model import ModelError, load_model, save_model
from .seeds import derive_seed
from .solvers import SOLVER_ORDER, SolverKind, measure_all, write_performance

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
log = logging.getLogger("copselect.cli")


class DataError(RuntimeError):
    pass


def _read_instances(path: str) -> list:
    files = sorted(glob.glob(os.path.join(path, "*.json"))) if os.path.isdir(path) else [path]
    files = [f for f in files if os.path.basename(f) != "run.json"]
    if not files:
        raise DataError(f"no instance documents found at {path}")
    out = []
    for f in files:
        with open(f) as fh:
            out.append(deserialize(fh.read()))
    return out


def _out(args, *parts) -> str:
    path = os.path.join(args.out, *parts)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    return path


# -- subcommands ----------------------------------------------------------------------

def cmd_gen(args, cfg: ExperimentConfig) -> None:
    obj, n_lin, n_quad = parse_label(args.label)
    spec = Pipeline(cfg).bench_spec(obj, n_lin, n_quad)
    for i in range(args.count):
        inst = random_instance(spec, derive_seed(cfg.seed, ("gen", args.label, i)) % (2 ** 31),
                               id=f"{args.label}-{i + 1}")
        with open(_out(args, "instances", f"{inst.id}.json"), "w") as fh:
            fh.write(serialize(inst))
    print(f"wrote {args.count} instances to {os.path.join(args.out, 'instances')}")


def cmd_evolve(args, cfg: ExperimentConfig) -> None:
    pipe = Pipeline(cfg)
    n_lin = cfg.slots // 2
    base = pipe.bench_spec(args.objective, n_lin, cfg.slots - n_lin)
    target = SolverKind(args.target)
    res = evolve(pipe.evolver_config(target, args.sense), base,
                 derive_seed(cfg.seed, ("evolve", args.objective, target.value, args.sense)), pipe.configs)
    directory = os.path.join(args.out, "evolve", f"{args.objective}-{target.value}-{args.sense}")
    dump_population(res, directory)
    best = max(res.front(), key=lambda e: e.hardness_gap, default=None)
    gap = f", best hardness gap {best.hardness_gap:.2f}" if best else ""
    print(f"front of {len(res.front())}, archive of {len(res.archive)}{gap}; wrote {directory}")


def cmd_measure(args, cfg: ExperimentConfig) -> None:
    pipe = Pipeline(cfg)
    records = [measure_all(inst, pipe.configs, cfg.budget, cfg.precision, cfg.repeats,
                           derive_seed(cfg.seed, ("measure", inst.id)) % (2 ** 31))
               for inst in _read_instances(args.instances)]
    path = _out(args, "performance.csv")
    write_performance(records, path)
    print(f"wrote {path}")


def cmd_features(args, cfg: ExperimentConfig) -> None:
    pipe = Pipeline(cfg)
    rows = [(inst.id, pipe.features(inst)) for inst in _read_instances(args.instances)]
    path = _out(args, "features.csv")
    write_feature_table(rows, path)
    print(f"wrote {path}")


def cmd_train(args, cfg: ExperimentConfig) -> None:
    pops = [load_population(d) for d in args.populations]
    objective = pops[0].base.objective.value
    members = select_subset(pops, args.subset, cfg.train_size, derive_seed(cfg.seed, ("subset", objective)))
    model = Pipeline(cfg).train(members, SubsetKind(args.subset).value, objective)
    path = _out(args, "models", f"{objective}-{args.subset}.json")
    save_model(model, path)
    print(f"trained on {len(members)} instances ({model.metadata['stop_reason']}); wrote {path}")


def cmd_predict(args, cfg: ExperimentConfig) -> None:
    model = load_model(args.model)
    pipe = Pipeline(cfg)
    lines = ["instance_id,best," + ",".join(f"fen_{k.value}" for k in SOLVER_ORDER)]
    for inst in _read_instances(args.instances):
        res = pipe.predict(model, inst)
        lines.append(",".join([inst.id, res.best.value] + [repr(res.predicted_fen[k]) for k in SOLVER_ORDER]))
    path = _out(args, "predictions.csv")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {path}")


def cmd_bench(args, cfg: ExperimentConfig) -> None:
    if args.model_a is None and args.model_b is None:
        result = run_pipeline(cfg, args.out)
        print(emit_report(result.benchmark, "markdown"), end="")
        return
    if args.model_a is None or args.model_b is None:
        raise ConfigError("bench needs both --model-a and --model-b, or neither to run the whole pipeline")
    rows = run_benchmark(Pipeline(cfg), cfg.bench_labels, load_model(args.model_a), load_model(args.model_b))
    with open(_out(args, "benchmark.csv"), "w") as fh:
        fh.write(emit_report(rows, "csv"))
    print(emit_report(rows, "markdown"), end="")


def cmd_report(args, cfg: ExperimentConfig) -> None:
    with open(args.csv) as fh:
        text = fh.read()
    try:
        rows = parse_report_csv(text)
    except (ValueError, IndexError) as exc:
        raise DataError(f"{args.csv} is not a benchmark report: {exc}") from exc
    print(emit_report(rows, args.format), end="")


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="copselect", description="Constraint-feature algorithm selection for COPs.")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    p.add_argument("--profile", choices=("desk", "full"), default=None)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--config", default=None, help="INI config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key, e.g. --set solvers.repeats=7")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen", help="generate random instances for a problem label")
    s.add_argument("label", help="e.g. sphere-2lin")
    s.add_argument("--count", type=int, default=1)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("evolve", help="run the multi-objective evolver")
    s.add_argument("--objective", choices=[o.value for o in Objective], default="sphere")
    s.add_argument("--target", choices=[k.value for k in SolverKind], default="DE")
    s.add_argument("--sense", choices=("hard", "easy"), default="hard")
    s.set_defaults(func=cmd_evolve)

    s = sub.add_parser("measure", help="measure all solvers on instance documents")
    s.add_argument("instances", help="instance document or directory of them")
    s.set_defaults(func=cmd_measure)

    s = sub.add_parser("features", help="extract constraint features")
    s.add_argument("instances")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", help="train a model on a subset of evolver populations")
    s.add_argument("populations", nargs="+", help="population dump directories")
    s.add_argument("--subset", choices=[k.value for k in SubsetKind], default="PFR")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predict the best solver for instances")
    s.add_argument("--model", required=True)
    s.add_argument("instances")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("bench", help="benchmark PFR- against RO-trained models (whole pipeline without models)")
    s.add_argument("--model-a", default=None, help="PFR-trained model file")
    s.add_argument("--model-b", default=None, help="RO-trained model file")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("report", help="render a benchmark csv")
    s.add_argument("csv")
    s.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    s.set_defaults(func=cmd_report)
    return p


def _overrides(items: List[str], seed: Optional[int]) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    if seed is not None:
        out["seed"] = seed
    return out


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        cfg = load_config(args.config, _overrides(args.overrides, args.seed), args.profile)
        os.makedirs(args.out, exist_ok=True)
        echo_config(cfg, args.out)
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, InstanceParseError, ModelError, SelectionError, GenerationError, FileNotFoundError,
            json.JSONDecodeError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
