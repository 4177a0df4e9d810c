"""Batch command-line front end.

Subcommands: ``train`` (one optimizer run), ``compare`` (several optimizers on
a shared seed), ``sweep`` (penalty-weight or memory-depth grids), and
``verify`` (the invariant suite).  Every command writes its artifacts plus a
``manifest.json`` into the output directory.  A plain ``key=value`` config
file can seed any command's options; explicit flags win.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anderson import AAConfig
from .baselines import BaselineConfig, adam_train, gd_train, plain_altmin_train
from .data import DataFormatError, Dataset, load_csv, normalize_features, split, synth_blobs
from .linalg import NonFiniteError
from .model import ProblemSpec, Regularizer
from .runio import (
    RunManifest,
    weights_checksum,
    write_metrics_csv,
    write_metrics_jsonl,
)
from .subproblems import BacktrackDivergenceError
from .trainer import TrainConfig, init_weights, train
from .verify import run_all

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


class ConfigError(ValueError):
    pass


def _read_config_file(path: str) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    out: dict[str, str] = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{lineno}: expected key=value")
        key, val = line.split("=", 1)
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _out_dir(args) -> Path:
    base = args.out or os.environ.get("AA_DLADMM_OUT_DIR") or "runs"
    p = Path(base)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _load_dataset(args) -> tuple[Dataset, Dataset]:
    """Resolve --data into (train, test) datasets."""
    if args.data == "synth":
        ds = synth_blobs(args.synth_n, args.synth_d, args.synth_classes,
                         args.synth_spread, seed=args.seed)
    else:
        path = Path(args.data)
        if not path.exists():
            raise ConfigError(f"data file not found: {path}")
        ds = load_csv(path, has_header=args.has_header)
    ds = normalize_features(ds, args.normalize)
    return split(ds, args.train_frac, seed=args.seed)


def _problem_spec(args, num_features: int, num_classes: int) -> ProblemSpec:
    hidden = _parse_int_list(args.hidden) if args.hidden else []
    if args.reg == "none":
        reg = Regularizer()
    else:
        reg = Regularizer(args.reg, args.lam)
    return ProblemSpec(
        layer_dims=(num_features, *hidden, num_classes),
        activation=args.activation,
        loss=args.loss,
        regularizer=reg,
        rho=args.rho,
        eps0=args.eps0,
        eps_floor=args.eps_floor,
    )


def _aa_config(args) -> AAConfig:
    return AAConfig(m=args.m, theta_bar=args.theta_bar, tau_gs=args.tau_gs,
                    d_safe=args.d_safe, eps_safe=args.eps_safe, alpha_mix=args.alpha_mix)


def _train_config(args, aa_on: bool) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, aa=_aa_config(args) if aa_on else None,
                       seed=args.seed, fista_iters=args.fista_iters, fista_tol=args.fista_tol)


def _config_snapshot(args) -> dict:
    skip = {"config", "func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _run_one(kind: str, train_ds: Dataset, test_ds: Dataset, spec: ProblemSpec, args):
    """Dispatch one optimizer run; returns (metrics, checksum)."""
    W0, b0 = init_weights(spec, args.seed)
    checksum = weights_checksum(W0, b0)
    if kind == "aa":
        res = train(train_ds, spec, _train_config(args, aa_on=True), test_data=test_ds)
        return res.metrics, checksum
    if kind == "plain":
        res = train(train_ds, spec, _train_config(args, aa_on=False), test_data=test_ds)
        return res.metrics, checksum
    if kind in ("gd", "adam"):
        lr = args.gd_lr if kind == "gd" else args.adam_lr
        cfg = BaselineConfig(kind=kind, lr=lr, epochs=args.epochs, seed=args.seed)
        fn = gd_train if kind == "gd" else adam_train
        _, _, metrics = fn(train_ds, spec, cfg, test_data=test_ds)
        return metrics, checksum
    raise ConfigError(f"unknown optimizer kind {kind!r}")


def cmd_train(args) -> int:
    out = _out_dir(args)
    train_ds, test_ds = _load_dataset(args)
    spec = _problem_spec(args, train_ds.num_features, train_ds.num_classes)
    aa_on = args.aa == "on"
    res = train(train_ds, spec, _train_config(args, aa_on), test_data=test_ds)

    csv_path = out / "metrics.csv"
    write_metrics_csv(csv_path, res.metrics, fixed_timing=args.fixed_timing)
    outputs = [csv_path.name]
    if args.jsonl:
        jl = out / "metrics.jsonl"
        write_metrics_jsonl(jl, res.metrics, fixed_timing=args.fixed_timing)
        outputs.append(jl.name)

    last = res.metrics[-1]
    summary = {
        "final_objective": last.objective,
        "final_residual": last.residual_norm,
        "train_acc": last.train_acc,
        "test_acc": last.test_acc,
        "epochs": args.epochs,
        "aa": aa_on,
        "aa_accepted_steps": sum(m.aa_accepted for m in res.metrics),
        "init_checksum": weights_checksum(*init_weights(spec, args.seed)),
    }
    import json
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    outputs.append("summary.json")

    manifest = RunManifest("train", _config_snapshot(args), train_ds.name, args.seed,
                           outputs=outputs)
    manifest.write(out / "manifest.json")
    print(f"wrote {csv_path} (final test_acc={last.test_acc:.4f}, objective={last.objective:.6g})")
    return EXIT_OK


def cmd_compare(args) -> int:
    out = _out_dir(args)
    kinds = [k.strip() for k in args.optimizers.split(",") if k.strip()]
    if not kinds:
        raise ConfigError("no optimizers given")
    train_ds, test_ds = _load_dataset(args)
    spec = _problem_spec(args, train_ds.num_features, train_ds.num_classes)
    outputs = []
    columns = {}
    checksums = {}
    for kind in kinds:
        metrics, checksum = _run_one(kind, train_ds, test_ds, spec, args)
        path = out / f"{kind}_metrics.csv"
        write_metrics_csv(path, metrics, fixed_timing=args.fixed_timing)
        outputs.append(path.name)
        columns[kind] = [m.test_acc for m in metrics]
        checksums[kind] = checksum
    if len(set(checksums.values())) != 1:
        raise ConfigError("optimizers disagree on the initial weights; seeds out of sync")
    joined = out / "compare_test_acc.csv"
    with joined.open("w", encoding="utf-8") as fh:
        fh.write("epoch," + ",".join(f"{k}_test_acc" for k in kinds) + "\n")
        for epoch in range(args.epochs):
            row = [str(epoch)] + [repr(float(columns[k][epoch])) for k in kinds]
            fh.write(",".join(row) + "\n")
    outputs.append(joined.name)
    manifest = RunManifest("compare", {**_config_snapshot(args), "init_checksum": checksums[kinds[0]]},
                           train_ds.name, args.seed, outputs=outputs)
    manifest.write(out / "manifest.json")
    print(f"wrote {len(outputs)} files to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    rho_grid = _parse_float_list(args.rho_grid) if args.rho_grid else []
    m_grid = _parse_int_list(args.m_grid) if args.m_grid else []
    if bool(rho_grid) == bool(m_grid):
        raise ConfigError("give exactly one of --rho-grid or --m-grid (non-empty)")
    train_ds, test_ds = _load_dataset(args)

    # table columns: accuracy at five evenly spaced checkpoints ending at the
    # final epoch (epochs 40/80/120/160/200 for a 200-epoch run)
    step = args.epochs // 5
    if step < 1:
        raise ConfigError("sweep needs at least 5 epochs")
    checkpoints = [step * i for i in range(1, 6)]
    checkpoints[-1] = args.epochs

    grid = [("rho", v) for v in rho_grid] or [("m", v) for v in m_grid]
    rows = []
    outputs = []
    for name, value in grid:
        point_args = argparse.Namespace(**vars(args))
        if name == "rho":
            point_args.rho = float(value)
        else:
            point_args.m = int(value)
        spec = _problem_spec(point_args, train_ds.num_features, train_ds.num_classes)
        res = train(train_ds, spec, _train_config(point_args, aa_on=True), test_data=test_ds)
        accs = {m.epoch + 1: m.test_acc for m in res.metrics}
        rows.append((value, [accs[c] for c in checkpoints]))
        sub = out / f"{name}_{value}"
        sub.mkdir(exist_ok=True)
        write_metrics_csv(sub / "metrics.csv", res.metrics, fixed_timing=args.fixed_timing)
        outputs.append(f"{name}_{value}/metrics.csv")

    table = out / f"sweep_{grid[0][0]}.csv"
    with table.open("w", encoding="utf-8") as fh:
        fh.write(grid[0][0] + "," + ",".join(f"acc_epoch_{c}" for c in checkpoints) + "\n")
        for value, accs in rows:
            fh.write(",".join([str(value)] + [repr(float(a)) for a in accs]) + "\n")
    outputs.append(table.name)
    manifest = RunManifest("sweep", _config_snapshot(args), train_ds.name, args.seed,
                           outputs=outputs)
    manifest.write(out / "manifest.json")
    print(f"wrote {table}")
    return EXIT_OK


def cmd_verify(args) -> int:
    failures = 0
    for name, ok, detail in run_all(inject_fault=args.inject_fault):
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failures += not ok
    print(f"{failures} failing invariant(s)" if failures else "all invariants hold")
    return EXIT_VERIFY_FAILED if failures else EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; explicit flags win")
    p.add_argument("--out", help="output directory (default $AA_DLADMM_OUT_DIR or ./runs)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--fixed-timing", action="store_true",
                   help="write wall_ms as 0 for byte-reproducible CSVs")
    p.add_argument("--jsonl", action="store_true", help="also write metrics as JSON lines")
    # data
    p.add_argument("--data", default="synth", help="'synth' or a CSV path (rows=samples, last col=label)")
    p.add_argument("--has-header", action="store_true")
    p.add_argument("--normalize", default="none", choices=("none", "unit_rows", "standardize"))
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--synth-n", type=int, default=100, help="samples per class for --data synth")
    p.add_argument("--synth-d", type=int, default=10)
    p.add_argument("--synth-classes", type=int, default=2)
    p.add_argument("--synth-spread", type=float, default=0.5)
    # network / objective
    p.add_argument("--hidden", default="16,16", help="comma list of hidden layer widths")
    p.add_argument("--activation", default="relu", choices=("relu", "sigmoid", "tanh"))
    p.add_argument("--loss", default="cross_entropy_softmax",
                   choices=("cross_entropy_softmax", "least_squares"))
    p.add_argument("--reg", default="none", choices=("none", "l1", "l2"))
    p.add_argument("--lam", type=float, default=1e-4)
    p.add_argument("--rho", type=float, default=1e-3)
    p.add_argument("--eps0", type=float, default=100.0)
    p.add_argument("--eps-floor", type=float, default=0.001)
    p.add_argument("--fista-iters", type=int, default=10)
    p.add_argument("--fista-tol", type=float, default=1e-8)
    # acceleration
    p.add_argument("--m", type=int, default=8, help="acceleration memory depth")
    p.add_argument("--theta-bar", type=float, default=0.01)
    p.add_argument("--tau-gs", type=float, default=0.01)
    p.add_argument("--d-safe", type=float, default=1e6)
    p.add_argument("--eps-safe", type=float, default=1e-6)
    p.add_argument("--alpha-mix", type=float, default=1.0)
    # baseline learning rates
    p.add_argument("--gd-lr", type=float, default=0.01)
    p.add_argument("--adam-lr", type=float, default=1e-3)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aa-dladmm",
                                     description="Train and benchmark gradient-free MLP optimizers")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model and write metrics")
    _add_common(p_train)
    p_train.add_argument("--aa", default="on", choices=("on", "off"))
    p_train.set_defaults(func=cmd_train)

    p_cmp = sub.add_parser("compare", help="run several optimizers with a shared seed")
    _add_common(p_cmp)
    p_cmp.add_argument("--optimizers", default="aa,plain,gd,adam")
    p_cmp.set_defaults(func=cmd_compare)

    p_sweep = sub.add_parser("sweep", help="grid over rho or the memory depth m")
    _add_common(p_sweep)
    p_sweep.add_argument("--rho-grid", help="comma list, e.g. 1e-5,1e-4,1e-3,1e-2")
    p_sweep.add_argument("--m-grid", help="comma list, e.g. 6,8,10,12")
    p_sweep.set_defaults(func=cmd_sweep)

    p_ver = sub.add_parser("verify", help="run the invariant suite")
    p_ver.add_argument("--inject-fault", action="store_true",
                       help="add a failing check to exercise the harness")
    p_ver.set_defaults(func=cmd_verify)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Prepend config-file values as defaults by rewriting argv: values from
    the file come first, so later explicit flags override them."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise ConfigError("--config needs a path")
    conf = _read_config_file(argv[idx + 1])
    injected: list[str] = []
    for key, val in conf.items():
        flag = "--" + key.replace("_", "-")
        if val.lower() in ("true", "false"):
            if val.lower() == "true":
                injected.append(flag)
        else:
            injected.extend([flag, val])
    # keep the subcommand first, then injected values, then the original flags
    return argv[:1] + injected + argv[1:]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteError, BacktrackDivergenceError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
