"""Command line interface.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .base_transforms import NumericalError
from .bdrate import BdRateError, bd_rate
from .datasets import DatasetFormatError, ResidualDataset, load_dataset, save_dataset
from .experiment import (
    ConfigError,
    ExperimentNumericalError,
    load_mode_data,
    dtt_plus_8bit,
    encode,
    fixed_mts_set,
    int_dtt_plus_transform,
    run_experiment,
    validate_config,
    write_report,
)
from .fixedpoint import AccumulatorOverflowError
from .graph_learning import LearningError, LearningProblem, LearningSolution, solve
from .integer_kernel import count_ops, quality
from .mode_clustering import axis_bits, cluster_weights, memory_bits, write_groups_csv
from .rdot import QuantizerSpec

logger = logging.getLogger("intdtt")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _config(args) -> dict:
    cfg = _read_json(args.config) if getattr(args, "config", None) else {}
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _load_params(path) -> dict:
    """``{mode: DttPlusParams}`` from a ``learn`` output file."""
    data = _read_json(path)
    try:
        return {m: LearningSolution.from_dict(rec).params for m, rec in sorted(data["modes"].items())}
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: not a learned-parameter file") from exc


def cmd_synth(args) -> int:
    cfg = validate_config(_config(args))
    if cfg["train_dataset"] is not None:
        raise ConfigError("synth needs synthetic modes, not dataset paths")
    data = load_mode_data(cfg)
    out = _out(args)
    names = [name for name, _, _ in data]
    for split, col in (("train", 1), ("test", 2)):
        blocks = np.concatenate([d[col] for d in data])
        labels = np.concatenate([np.full(d[col].shape[0], i) for i, d in enumerate(data)])
        save_dataset(ResidualDataset(cfg["n"], blocks, labels, names, f"synth seed={cfg['seed']}"), out / f"{split}.dttp")
    print(f"wrote {out / 'train.dttp'} and {out / 'test.dttp'} ({len(names)} modes)")
    return EXIT_OK


def cmd_learn(args) -> int:
    ds = load_dataset(args.data)
    modes = [args.mode] if args.mode else ds.mode_names
    result = {}
    for name in modes:
        if name not in ds.mode_names:
            raise ConfigError(f"mode {name!r} not in dataset")
        blocks = ds.select(name)
        if blocks.shape[0] == 0:
            continue
        try:
            sol = solve(LearningProblem.from_blocks(blocks))
        except LearningError as exc:
            raise ExperimentNumericalError(f"mode {name}: {exc}") from exc
        result[name] = sol.to_dict()
        p = sol.params
        print(f"{name}: i=({p.i_r},{p.i_c}) alpha/beta=({p.row_loop_weight:.4g},{p.col_loop_weight:.4g})")
    _dump({"format": "dtt-plus-params", "version": 1, "modes": result}, _out(args) / "learned.json")
    return EXIT_OK


def _axes_record(phi, n, p_d, p_f):
    _, axes = int_dtt_plus_transform(phi, n, p_d, p_f)
    rec = {}
    for label, ax in zip(("row", "col"), axes):
        q = quality(ax.int_kernel, ax.float_kernel.k_matrix)
        rec[label] = {
            "base": ax.base.value,
            "fallback": ax.fallback,
            "ops": count_ops(ax.int_kernel),
            "bits": axis_bits(ax),
            "quality": {"orthogonality": q.orthogonality, "closeness": q.closeness, "norm_dev": q.norm_dev},
            "kernel": ax.int_kernel.to_dict() if not ax.fallback else
            {"dense": ax.int_kernel.matrix.tolist(), "shift": ax.int_kernel.shift},
        }
    return rec, axes


def cmd_quantize_kernel(args) -> int:
    params = _load_params(args.params)
    out = {}
    for name, phi in params.items():
        rec, axes = _axes_record(phi, args.n, args.p_d, args.p_f)
        rec["bits"] = memory_bits([tuple(axes)])
        out[name] = rec
        print(f"{name}: mults row/col = {rec['row']['ops']['multiplications']}/{rec['col']['ops']['multiplications']},"
              f" {rec['bits']} bits")
    _dump({"format": "int-dtt-plus-set", "version": 1, "kernels": out}, _out(args) / "kernels.json")
    return EXIT_OK


def cmd_encode(args) -> int:
    ds = load_dataset(args.data)
    params = _load_params(args.params) if args.params else {}
    cfg = validate_config(_config(args))
    fixed = fixed_mts_set(ds.n)
    rows = []
    for name in ds.mode_names:
        blocks = ds.select(name)
        if blocks.shape[0] == 0:
            continue
        sets = {"mts": fixed}
        if name in params:
            phi = params[name]
            sets["mts+dtt+"] = fixed + [dtt_plus_8bit(phi, ds.n)]
            sets["mts+int-dtt+"] = fixed + [int_dtt_plus_transform(phi, ds.n, cfg["p_d"], cfg["p_f"])[0]]
        for conf, tset in sets.items():
            for step in cfg["steps"]:
                lam = cfg["lambda_factor"] * step * step
                res = encode(blocks, tset, QuantizerSpec(step, cfg["deadzone_offset"]), lam, cfg["peak"])
                rows.append((conf, name, lam, res.rate, res.psnr))
    write_report({"rd_rows": rows, "summary": {"format": "intdtt-encode", "version": 1}}, _out(args))
    print(f"wrote {len(rows)} RD points to {Path(args.out_dir) / 'rd.csv'}")
    return EXIT_OK


def _read_rd(path):
    curves = defaultdict(list)
    with Path(path).open() as fh:
        reader = csv.DictReader(fh)
        need = {"config", "mode", "lambda", "rate", "psnr"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ConfigError(f"{path}: expected columns {sorted(need)}")
        for row in reader:
            try:
                curves[(row["config"], row["mode"])].append((float(row["rate"]), float(row["psnr"])))
            except ValueError as exc:
                raise ConfigError(f"{path}: bad number ({exc})") from exc
    return curves


def cmd_bdrate(args) -> int:
    curves = _read_rd(args.rd)
    modes = sorted({m for c, m in curves if c == args.anchor})
    result = {}
    for mode in modes:
        if (args.test, mode) not in curves:
            continue
        result[mode] = bd_rate(curves[(args.anchor, mode)], curves[(args.test, mode)])
    if not result:
        raise ConfigError(f"no mode has both {args.anchor!r} and {args.test!r} curves")
    for mode, v in result.items():
        print(f"{mode}: {v:+.3f} %")
    avg = float(np.mean(list(result.values())))
    print(f"average: {avg:+.3f} %")
    if args.out_dir:
        _dump({"anchor": args.anchor, "test": args.test, "per_mode": result, "average": avg},
              _out(args) / "bdrate.json")
    return EXIT_OK


def cmd_report(args) -> int:
    report = run_experiment(_config(args), args.out_dir)
    for conf, rec in report["summary"]["bd_rate"].items():
        avg = rec["average"]
        print(f"{conf}: {'n/a' if avg is None else f'{avg:+.3f} %'} BD-rate vs mts")
    return EXIT_OK


def cmd_cluster_modes(args) -> int:
    params = _load_params(args.params)
    names = list(params)
    res = cluster_weights([params[m] for m in names], args.k, seed=args.seed or 0)
    out = _out(args)
    write_groups_csv(out / f"groups_k{args.k}.csv", names, res.assignment)
    axes = [tuple(int_dtt_plus_transform(c, args.n)[1]) for c in res.centroids]
    _dump({
        "k": args.k,
        "assignment": {m: int(g) for m, g in zip(names, res.assignment)},
        "centroids": [c.to_dict() for c in res.centroids],
        "objective_trace": res.objective_trace,
        "int_dtt_plus_bits": memory_bits(axes),
    }, out / f"clusters_k{args.k}.json")
    print(f"k={args.k}: objective {res.objective:.4g}, {memory_bits(axes)} bits")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intdtt", description="DTT+ / INT-DTT+ transform experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, config=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=".")
        if config:
            p.add_argument("--config", help="JSON experiment config")
        p.set_defaults(func=func)
        return p

    add("synth", cmd_synth, "generate train/test residual datasets")
    p = add("learn", cmd_learn, "learn DTT+ parameters per mode", config=False)
    p.add_argument("--data", required=True)
    p.add_argument("--mode")
    p = add("quantize-kernel", cmd_quantize_kernel, "build INT-DTT+ kernels from learned parameters", config=False)
    p.add_argument("--params", required=True)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--p-d", type=int, default=128)
    p.add_argument("--p-f", type=int, default=4)
    p = add("encode", cmd_encode, "RD-encode a dataset with the fixed set and learned transforms")
    p.add_argument("--data", required=True)
    p.add_argument("--params")
    p = add("bdrate", cmd_bdrate, "BD-rate between two configs of an rd.csv", config=False)
    p.add_argument("--rd", required=True)
    p.add_argument("--anchor", default="mts")
    p.add_argument("--test", required=True)
    add("report", cmd_report, "run the full experiment and write rd.csv / summary.json")
    p = add("cluster-modes", cmd_cluster_modes, "k-means grouping of learned parameters", config=False)
    p.add_argument("--params", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, default=8)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ExperimentNumericalError, LearningError, NumericalError, AccumulatorOverflowError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, DatasetFormatError, BdRateError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
