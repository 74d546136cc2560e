"""Command-line pipeline: simulate -> train -> predict -> allocate, plus benchmark.

Every flag may also come from a JSON ``--config`` file; explicit flags win.
Errors print ``error: CODE: message`` on stderr and exit with
2 (configuration/validation), 3 (I/O or parse), 4 (infeasible) or 5 (divergence).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import io
from .benchmark import DEFAULT_SCALES, FIELDS, check_scales, run_benchmark
from .domain import is_feasible
from .errors import ConfigError, DataFormatError, FundAllocError, InfeasibleError
from .optimizer import SOLVERS, solve
from .predictor import PredictorModel, TrainConfig, predict_matrix, train
from .synth import (
    GeneratorConfig,
    generate_instance,
    generate_training_data,
    worked_example_config,
)

DEFAULTS = {
    "simulate": {"n": 1000, "m": 8, "k": 1, "seed": 0, "samples": None, "q": 0.9,
                 "out": ".", "with_revenue": False, "golden": False},
    "train": {"data": None, "model": "model.json", "loss": "esj", "epsilon": 0.0, "seed": 0,
              "epochs": 10, "lr": 3e-3, "batch_size": 512},
    "predict": {"model": None, "customers": None, "funds": None, "out": "revenue.csv",
                "unshifted": False},
    "allocate": {"customers": None, "funds": None, "revenue": None, "k": 1,
                 "solver": "ha-eq8", "priority": None, "lazy": False,
                 "out": "allocation.csv", "stats": "stats.json"},
    "benchmark": {"scales": ",".join(map(str, DEFAULT_SCALES)), "m": 8, "k": 1, "seed": 0,
                  "format": "csv", "out": None},
}
REQUIRED = {
    "train": ("data",),
    "predict": ("model", "customers", "funds"),
    "allocate": ("customers", "funds", "revenue"),
}


def _parser():
    p = argparse.ArgumentParser(prog="fundalloc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON file supplying any of the flags")
        return sp

    s = add("simulate", "write a synthetic instance, training data and ground truth")
    s.add_argument("--n", type=int, help="customers")
    s.add_argument("--m", type=int, help="funds")
    s.add_argument("--k", type=int, help="funds exposed per customer")
    s.add_argument("--seed", type=int)
    s.add_argument("--samples", type=int, help="training pairs (default 10 per customer)")
    s.add_argument("--q", type=float, help="observed fraction of intended conversions")
    s.add_argument("--out", help="output directory")
    s.add_argument("--with-revenue", action="store_true", default=None,
                   help="also write revenue.csv with the true expected revenue")
    s.add_argument("--golden", action="store_true", default=None,
                   help="write the 3x2 worked example instead of a random instance")

    t = add("train", "fit the expected-revenue model")
    t.add_argument("--data", help="training CSV")
    t.add_argument("--model", help="output model JSON")
    t.add_argument("--loss", choices=("esj", "ziln", "mse"))
    t.add_argument("--epsilon", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)

    pr = add("predict", "write the expected-revenue matrix for an instance")
    pr.add_argument("--model")
    pr.add_argument("--customers")
    pr.add_argument("--funds")
    pr.add_argument("--out")
    pr.add_argument("--unshifted", action="store_true", default=None,
                    help="report revenue with the +1 label shift removed")

    a = add("allocate", "assign funds to customers")
    a.add_argument("--customers")
    a.add_argument("--funds")
    a.add_argument("--revenue")
    a.add_argument("--k", type=int)
    a.add_argument("--solver", choices=SOLVERS)
    a.add_argument("--priority", help="fund ids in priority order for the manual solver, e.g. f2,f1")
    a.add_argument("--lazy", action="store_true", default=None)
    a.add_argument("--out")
    a.add_argument("--stats")

    b = add("benchmark", "compare HA, manual and exact flow across scales")
    b.add_argument("--scales", help="comma-separated, strictly increasing")
    b.add_argument("--m", type=int)
    b.add_argument("--k", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--format", choices=("csv", "json"))
    b.add_argument("--out", help="report file (stdout if omitted)")
    return p


def _resolve(args):
    """Defaults, then the config file, then explicit flags."""
    opts = dict(DEFAULTS[args.command])
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise DataFormatError("IO_ERROR", str(exc), path=args.config) from exc
        except json.JSONDecodeError as exc:
            raise DataFormatError("PARSE_ERROR", exc.msg, path=args.config,
                                  line=exc.lineno, column=exc.colno) from exc
        if not isinstance(raw, dict):
            raise ConfigError("INVALID_CONFIG", "config file must hold a JSON object")
        for key, value in raw.items():
            key = key.replace("-", "_")
            if key not in opts:
                raise ConfigError("INVALID_CONFIG", f"unknown option {key!r} for {args.command}")
            opts[key] = value
    for key in opts:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    for key in REQUIRED.get(args.command, ()):
        if opts[key] is None:
            raise ConfigError("INVALID_CONFIG", f"--{key.replace('_', '-')} is required")
    return argparse.Namespace(**opts)


def _say(msg):
    print(msg, flush=True)


def cmd_simulate(o):
    if o.golden:
        config = worked_example_config()
    else:
        if o.n is None or o.n < 1 or o.m is None or o.m < 1:
            raise ConfigError("INVALID_CONFIG", "--n and --m must be >= 1")
        samples = o.samples if o.samples is not None else 10 * o.n
        config = GeneratorConfig(n_customers=o.n, n_funds=o.m, k=o.k, seed=o.seed,
                                 n_samples=samples, delayed_q=o.q)
    instance, truth = generate_instance(config)
    out = Path(o.out)
    io.ensure_dir(out)
    io.write_instance(instance, out, with_revenue=bool(o.with_revenue or o.golden))
    io.write_truth(instance, truth, out / io.TRUTH_CSV)
    if not o.golden:
        io.write_training_data(generate_training_data(config), out / io.TRAIN_CSV)
    _say(f"wrote {instance.n_customers} customers x {instance.n_funds} funds to {out}")
    return 0


def cmd_train(o):
    data = io.read_training_data(o.data)
    config = TrainConfig(loss=o.loss, epsilon=o.epsilon, seed=o.seed, epochs=o.epochs,
                         learning_rate=o.lr, batch_size=o.batch_size)
    model, history = train(data, config, return_history=True)
    try:
        model.save(o.model)
    except OSError as exc:
        raise DataFormatError("IO_ERROR", str(exc), path=o.model) from exc
    _say(f"trained {config.loss} model on {len(data)} samples; best epoch {history.best_epoch}, "
         f"validation loss {history.val_loss[history.best_epoch]:.6f}")
    return 0


def _load_model(path):
    try:
        return PredictorModel.load(path)
    except OSError as exc:
        raise DataFormatError("IO_ERROR", str(exc), path=path) from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FundAllocError):
            raise
        raise DataFormatError("PARSE_ERROR", f"unreadable model file: {exc}", path=path) from exc


def cmd_predict(o):
    model = _load_model(o.model)
    cid, tol, cx = io.read_customers(o.customers)
    fid, lvl, _, fx = io.read_funds(o.funds)
    revenue = predict_matrix(model, cx, fx, tol, lvl, shifted=not o.unshifted)
    io.write_revenue(revenue, cid, fid, o.out)
    _say(f"wrote {int(revenue.eligible.sum())} eligible pairs to {o.out}")
    return 0


def _parse_priority(text, fund_ids):
    pos = {int(f): j for j, f in enumerate(fund_ids)}
    order = []
    for token in str(text).split(","):
        token = token.strip()
        digits = token[1:] if token[:1] in ("f", "F") else token
        try:
            fid = int(digits)
        except ValueError:
            raise ConfigError("INVALID_CONFIG", f"bad fund id {token!r} in --priority") from None
        if fid not in pos:
            raise ConfigError("INVALID_CONFIG", f"unknown fund id {token!r} in --priority")
        order.append(pos[fid])
    return order


def cmd_allocate(o):
    instance = io.read_instance(o.customers, o.funds, o.revenue, k=o.k)
    priority = None
    if o.priority:
        priority = _parse_priority(o.priority, instance.fund_ids)
    result, stats = solve(instance, o.solver, priority=priority, lazy=bool(o.lazy))
    if not is_feasible(result.assignment, instance):
        raise InfeasibleError("INFEASIBLE_OUTPUT", f"{o.solver} returned an infeasible allocation")
    io.write_result(result, instance, o.out)
    try:
        with open(o.stats, "w", encoding="utf-8") as fh:
            json.dump(stats.to_record(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise DataFormatError("IO_ERROR", str(exc), path=o.stats) from exc
    _say(f"{o.solver}: objective {result.objective!r}, {len(result.pairs())} exposures")
    return 0


def cmd_benchmark(o):
    try:
        scales = check_scales(str(o.scales).split(",") if isinstance(o.scales, str) else o.scales)
    except ValueError as exc:
        if isinstance(exc, FundAllocError):
            raise
        raise ConfigError("INVALID_CONFIG", f"bad --scales {o.scales!r}") from None
    rows = run_benchmark(scales, n_funds=o.m, k=o.k, seed=o.seed)
    fh = sys.stdout if o.out is None else open(o.out, "w", encoding="utf-8", newline="")
    try:
        if o.format == "json":
            json.dump({"schema": 1, "rows": [r.as_dict() for r in rows]}, fh, indent=2)
            fh.write("\n")
        else:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(FIELDS)
            for r in rows:
                w.writerow([r.scale, r.solver, repr(r.objective), f"{r.gap:.6f}",
                            f"{r.wall_ms:.3f}", r.rounds])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "predict": cmd_predict,
    "allocate": cmd_allocate,
    "benchmark": cmd_benchmark,
}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](_resolve(args))
    except FundAllocError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: IO_ERROR: {exc}", file=sys.stderr)
        return DataFormatError.exit_code


if __name__ == "__main__":
    sys.exit(main())
