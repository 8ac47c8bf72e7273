"""End-to-end experiment: train per-mode transforms, encode a test split, report RD results.

Configuration is a flat JSON object; every key is optional.

``seed`` (int, 0)
    Master seed; per-mode data and RDOT seeds are derived from it.
``n`` (int, 8)
    Block size.
``train_count`` / ``test_count`` (int, 2000 / 5000)
    Synthetic blocks per mode.
``modes`` (list of objects)
    Synthetic mode models (keys of :class:`intdtt.datasets.SynthModel` except
    ``n``, ``count`` and ``seed``).  ``name`` labels the mode.
``train_dataset`` / ``test_dataset`` (paths or null)
    Residual dataset files; when given they replace the synthetic data and the
    mode list is taken from the training file.
``steps`` (list of >= 4 numbers)
    Quantizer steps of the evaluation sweep.
``lambda_factor`` (float, 0.1)
    Evaluation Lagrangian ``lambda = lambda_factor * step**2``.
``train_lambda_factor`` (float or null)
    Lagrangian factor during RDOT; defaults to ``lambda_factor``.
``train_step`` (float or null)
    Quantizer step used for RDOT; defaults to the median of ``steps``.
``n_learned`` (int, 1), ``rdot_tol`` (0.01), ``rdot_max_iter`` (20)
    RDOT settings per mode.
``deadzone_offset`` (1/6), ``p_d`` (128), ``p_f`` (4), ``peak`` (255)
``configs`` (list)
    Any of ``mts``, ``mts+sep-klt``, ``mts+dtt+``, ``mts+int-dtt+``.
    ``mts`` is always evaluated as the BD-rate anchor.
``cluster_k`` (list of int)
    Numbers of INT-DTT+ kernels after weight clustering to evaluate.

Every candidate transform is evaluated with its per-axis gain removed (each
quantized analysis matrix is divided by its RMS row norm), modeling a codec
that folds the constant kernel gain into its dequantization scale.  Row-to-row
norm deviations are kept.

Outputs written to ``out_dir``: ``rd.csv`` with ``config,mode,lambda,rate,psnr``
rows (rate in bits per sample, PSNR against the unquantized residual with
peak 255), ``summary.json``, and ``groups_k<k>.csv`` per clustering size.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base_transforms import (
    EigenSystem,
    NumericalError,
    closed_form_dct2,
    closed_form_dct8,
    closed_form_dst7,
    quantize_basis,
)
from .bdrate import RdCurve, bd_rate
from .datasets import SynthModel, load_dataset, synth_residuals
from .fixedpoint import AccumulatorOverflowError
from .graph_learning import LearningError
from .integer_kernel import build_axis_kernel, count_ops, quality
from .mode_clustering import angle_bin_groups, axis_bits, cluster_weights, memory_bits, sep_klt_bits, write_groups_csv
from .rdot import (
    QuantizerSpec,
    SeparableTransform,
    deadzone_quantize,
    dtt_plus_transform,
    entropy_bits,
    rd_costs,
    rdot_design,
    tie_argmin,
)
from .sepklt import sep_klt_learner

__all__ = [
    "ALL_CONFIGS",
    "ConfigError",
    "DEFAULT_CONFIG",
    "ExperimentNumericalError",
    "encode",
    "dtt_plus_8bit",
    "fixed_mts_set",
    "unit_gain",
    "int_dtt_plus_transform",
    "load_mode_data",
    "run_experiment",
    "validate_config",
]

logger = logging.getLogger(__name__)

ALL_CONFIGS = ("mts", "mts+sep-klt", "mts+dtt+", "mts+int-dtt+")

DEFAULT_MODES = [
    {"name": "planar", "rho_r": 0.85, "rho_c": 0.85, "boundary_r": 0.5, "boundary_c": 0.5},
    {"name": "horizontal", "rho_r": 0.9, "rho_c": 0.6, "boundary_r": 0.3, "boundary_c": 1.0},
    {"name": "vertical", "rho_r": 0.6, "rho_c": 0.9, "boundary_r": 1.0, "boundary_c": 0.3},
    {"name": "diagonal", "rho_r": 0.8, "rho_c": 0.8, "boundary_r": 0.3, "boundary_c": 0.3},
]

DEFAULT_CONFIG = {
    "seed": 0,
    "n": 8,
    "train_count": 2000,
    "test_count": 5000,
    "modes": DEFAULT_MODES,
    "train_dataset": None,
    "test_dataset": None,
    "steps": [6, 10, 16, 26, 42],
    "lambda_factor": 0.1,
    "train_lambda_factor": None,
    "train_step": None,
    "n_learned": 1,
    "rdot_tol": 0.01,
    "rdot_max_iter": 20,
    "deadzone_offset": 1.0 / 6.0,
    "p_d": 128,
    "p_f": 4,
    "peak": 255.0,
    "configs": list(ALL_CONFIGS),
    "cluster_k": [],
}


class ConfigError(ValueError):
    pass


class ExperimentNumericalError(RuntimeError):
    pass


def _is_pow2(v) -> bool:
    return isinstance(v, int) and v > 0 and v & (v - 1) == 0


def validate_config(config: dict | None) -> dict:
    """Defaults merged with ``config``; raises :class:`ConfigError` on bad input."""
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    config = dict(config or {})
    unknown = set(config) - set(cfg)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(config)

    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    for key in ("seed", "n", "train_count", "test_count", "n_learned", "rdot_max_iter"):
        need(isinstance(cfg[key], int) and not isinstance(cfg[key], bool), f"{key} must be an integer")
    need(cfg["seed"] >= 0, "seed must be non-negative")
    need(2 <= cfg["n"] <= 64, "n must lie in [2, 64]")
    need(cfg["train_count"] >= 1 and cfg["test_count"] >= 1, "counts must be positive")
    need(cfg["n_learned"] >= 1, "n_learned must be >= 1")
    need(cfg["rdot_max_iter"] >= 1, "rdot_max_iter must be >= 1")
    steps = cfg["steps"]
    need(isinstance(steps, list) and len(steps) >= 4, "steps needs at least 4 values")
    need(all(isinstance(s, (int, float)) and s > 0 for s in steps), "steps must be positive numbers")
    need(len(set(steps)) == len(steps), "steps must be distinct")
    cfg["steps"] = sorted(float(s) for s in steps)
    need(isinstance(cfg["lambda_factor"], (int, float)) and cfg["lambda_factor"] >= 0, "lambda_factor must be >= 0")
    if cfg["train_lambda_factor"] is None:
        cfg["train_lambda_factor"] = cfg["lambda_factor"]
    need(cfg["train_lambda_factor"] >= 0, "train_lambda_factor must be >= 0")
    if cfg["train_step"] is None:
        cfg["train_step"] = float(np.median(cfg["steps"]))
    need(cfg["train_step"] > 0, "train_step must be positive")
    need(0 < cfg["rdot_tol"] <= 1, "rdot_tol must lie in (0, 1]")
    need(0 <= cfg["deadzone_offset"] <= 0.5, "deadzone_offset must lie in [0, 0.5]")
    need(_is_pow2(cfg["p_d"]) and _is_pow2(cfg["p_f"]), "p_d and p_f must be powers of two")
    need(cfg["peak"] > 0, "peak must be positive")
    configs = cfg["configs"]
    need(isinstance(configs, list) and configs, "configs must be a non-empty list")
    bad = [c for c in configs if c not in ALL_CONFIGS]
    need(not bad, f"unknown configs {bad}; choose from {list(ALL_CONFIGS)}")
    cfg["configs"] = [c for c in ALL_CONFIGS if c in configs or c == "mts"]
    if cfg["train_dataset"] is None and cfg["test_dataset"] is None:
        modes = cfg["modes"]
        need(isinstance(modes, list) and modes, "modes must be a non-empty list")
        names = []
        for i, mode in enumerate(modes):
            need(isinstance(mode, dict), "each mode must be an object")
            spec = dict(mode)
            names.append(spec.pop("name", f"mode{i}"))
            for key in ("n", "count", "seed", "mode"):
                need(key not in spec, f"mode key '{key}' is set by the experiment")
            try:
                SynthModel.from_dict({**spec, "n": cfg["n"]})
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"mode {names[-1]}: {exc}") from exc
        need(len(set(names)) == len(names), "mode names must be unique")
    else:
        need(cfg["train_dataset"] is not None and cfg["test_dataset"] is not None,
             "train_dataset and test_dataset must be given together")
    ks = cfg["cluster_k"]
    need(isinstance(ks, list) and all(isinstance(k, int) and k >= 1 for k in ks), "cluster_k must list positive ints")
    return cfg


def unit_gain(t: SeparableTransform) -> SeparableTransform:
    """``t`` with each analysis matrix divided by its RMS row norm."""
    def g(a):
        return a / np.sqrt(np.mean(np.sum(a * a, axis=1)))
    return SeparableTransform(t.name, g(t.row_analysis), g(t.col_analysis))


def fixed_mts_set(n: int, bit_depth: int = 8) -> list:
    """DCT-2 x DCT-2 plus the four DST-7/DCT-8 combinations, 8-bit quantized."""
    q = {name: quantize_basis(f(n), bit_depth).to_float()
         for name, f in (("dct2", closed_form_dct2), ("dst7", closed_form_dst7), ("dct8", closed_form_dct8))}
    out = [SeparableTransform("dct2.dct2", q["dct2"], q["dct2"])]
    for r in ("dst7", "dct8"):
        for c in ("dst7", "dct8"):
            out.append(SeparableTransform(f"{r}.{c}", q[r], q[c]))
    return [unit_gain(t) for t in out]


def dtt_plus_8bit(phi, n: int, name: str = "dtt+") -> SeparableTransform:
    """DTT+ with each axis basis quantized to 8 bits (dense kernels)."""
    t = dtt_plus_transform(phi, n, n, name)
    return unit_gain(SeparableTransform(name, _q8(t.row_analysis), _q8(t.col_analysis)))


def int_dtt_plus_transform(phi, n: int, p_d: int = 128, p_f: int = 4, name: str = "int-dtt+"):
    """INT-DTT+ as an effective analysis pair, with its two axis kernels.

    The integer transition runs on the 8-bit integer base DTT.
    """
    row = build_axis_kernel(phi.alpha_r, phi.beta_r, phi.i_r, n, p_d, p_f)
    col = build_axis_kernel(phi.alpha_c, phi.beta_c, phi.i_c, n, p_d, p_f)
    mats = [ax.effective_kernel() @ quantize_basis(ax.base_eig).to_float() for ax in (row, col)]
    return unit_gain(SeparableTransform(name, mats[0], mats[1])), (row, col)


@dataclass
class EncodeResult:
    rate: float  # bits per sample
    psnr: float
    usage: list  # blocks per transform


def encode(blocks, transforms, spec: QuantizerSpec, lagrangian: float, peak: float = 255.0) -> EncodeResult:
    """RD-select a transform per block, then measure entropy rate and PSNR.

    Selection uses the flat ``log2(len(transforms))`` signaling cost; the
    reported rate is the zero-order entropy of the levels (per coefficient
    position) plus that of the chosen transform indices.
    """
    x = np.asarray(blocks, dtype=float)
    m, h, w = x.shape
    cost, dist, _ = rd_costs(x, transforms, spec, lagrangian)
    choice = tie_argmin(cost)
    levels = np.empty(x.shape, dtype=np.int64)
    for t, tr in enumerate(transforms):
        sel = choice == t
        if sel.any():
            levels[sel] = deadzone_quantize(tr.forward(x[sel]), spec)[0]
    # the transform index is entropy coded like the levels
    bits = entropy_bits(levels) + entropy_bits(choice[:, None])
    mse = float(dist[np.arange(m), choice].sum()) / (m * h * w)
    psnr = 10.0 * math.log10(peak * peak / mse) if mse > 0 else math.inf
    return EncodeResult(bits / (m * h * w), psnr, np.bincount(choice, minlength=len(transforms)).tolist())


def _derive_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])


def load_mode_data(cfg: dict):
    """``[(name, train_blocks, test_blocks)]`` per mode."""
    if cfg["train_dataset"] is not None:
        train = load_dataset(cfg["train_dataset"])
        test = load_dataset(cfg["test_dataset"])
        if train.n != cfg["n"] or test.n != cfg["n"]:
            raise ConfigError(f"datasets have block size {train.n}/{test.n}, config n={cfg['n']}")
        out = []
        for name in train.mode_names:
            tr = train.select(name)
            te = test.select(name) if name in test.mode_names else np.zeros((0, cfg["n"], cfg["n"]))
            if tr.shape[0] == 0 or te.shape[0] == 0:
                continue
            out.append((name, tr, te))
        if not out:
            raise ConfigError("no mode has both training and test blocks")
        return out
    root = np.random.SeedSequence(cfg["seed"])
    out = []
    for i, (mode, seq) in enumerate(zip(cfg["modes"], root.spawn(len(cfg["modes"])))):
        spec = dict(mode)
        name = spec.pop("name", f"mode{i}")
        tr_seq, te_seq = seq.spawn(2)
        tr = synth_residuals(SynthModel.from_dict({**spec, "n": cfg["n"], "count": cfg["train_count"],
                                                   "seed": _derive_seed(tr_seq), "mode": name}))
        te = synth_residuals(SynthModel.from_dict({**spec, "n": cfg["n"], "count": cfg["test_count"],
                                                   "seed": _derive_seed(te_seq), "mode": name}))
        out.append((name, tr.blocks, te.blocks))
    return out


def _rdot_summary(state) -> dict:
    return {
        "iterations": state.iterations,
        "converged": state.converged,
        "cost_trace": state.cost_trace,
        "pre_assign_costs": state.pre_assign_costs,
        "cluster_sizes": np.bincount(state.assignments, minlength=len(state.transforms)).tolist(),
    }


def _axis_report(ax) -> dict:
    ik = ax.int_kernel
    q = quality(ik, ax.float_kernel.k_matrix)
    dense = quantize_basis(_float_eig(ax))
    ops = count_ops(ik)
    rec = {
        "base": ax.base.value,
        "fallback": ax.fallback,
        "ops": ops,
        "dense_kernel_ops": count_ops(dense),
        "bits": axis_bits(ax),
        "quality": {"orthogonality": q.orthogonality, "closeness": q.closeness, "norm_dev": q.norm_dev},
        "kernel": ik.to_dict() if hasattr(ik, "to_dict") else {"dense": ik.matrix.tolist(), "shift": ik.shift},
    }
    if not ax.fallback:
        rec["diag_plus_nnz"] = int(ik.n + ik.nnz)
    return rec


def _float_eig(ax):
    return EigenSystem(ax.float_analysis().T, np.zeros(ax.n))


def _curve(points) -> RdCurve:
    return RdCurve(tuple(p[0] for p in points), tuple(p[1] for p in points))


def _safe_bd(anchor, test):
    try:
        return bd_rate(_curve(anchor), _curve(test))
    except ValueError as exc:
        logger.warning("BD-rate unavailable: %s", exc)
        return None


def run_experiment(config: dict | None = None, out_dir=None) -> dict:
    """Run the pipeline; returns ``{"summary": ..., "rd_rows": ...}`` and writes files to ``out_dir``."""
    cfg = validate_config(config)
    n = cfg["n"]
    data = load_mode_data(cfg)
    fixed = fixed_mts_set(n)
    train_spec = QuantizerSpec(cfg["train_step"], cfg["deadzone_offset"])
    train_lambda = cfg["train_lambda_factor"] * cfg["train_step"] ** 2
    rdot_seeds = np.random.SeedSequence([cfg["seed"], 1]).spawn(len(data))

    modes = {}
    sets = {}  # mode -> config -> transform list
    params_all = []
    for (name, train, test), seq in zip(data, rdot_seeds):
        rec = {"train_count": int(train.shape[0]), "test_count": int(test.shape[0])}
        sets[name] = {"mts": fixed}
        seed = _derive_seed(seq)
        try:
            if any(c in cfg["configs"] for c in ("mts+dtt+", "mts+int-dtt+")):
                st = rdot_design(train, cfg["n_learned"], fixed, train_lambda, train_spec, tol=cfg["rdot_tol"],
                                 seed=seed, max_iter=cfg["rdot_max_iter"])
                params = [p for p in st.learned_params if p is not None]
                rec["rdot"] = _rdot_summary(st)
                rec["dtt_plus_params"] = [p.to_dict() for p in params]
                params_all.extend((name, p) for p in params)
                sets[name]["mts+dtt+"] = fixed + [dtt_plus_8bit(p, n, f"dtt+{j}") for j, p in enumerate(params)]
                int_set, axes = [], []
                for j, p in enumerate(params):
                    t, pair = int_dtt_plus_transform(p, n, cfg["p_d"], cfg["p_f"], f"int-dtt+{j}")
                    int_set.append(t)
                    axes.append(pair)
                sets[name]["mts+int-dtt+"] = fixed + int_set
                rec["int_dtt_plus"] = [{"row": _axis_report(r), "col": _axis_report(c)} for r, c in axes]
                rec["int_dtt_plus_bits"] = memory_bits(axes)
            if "mts+sep-klt" in cfg["configs"]:
                st = rdot_design(train, cfg["n_learned"], fixed, train_lambda, train_spec, tol=cfg["rdot_tol"],
                                 seed=seed, max_iter=cfg["rdot_max_iter"], learner=sep_klt_learner)
                rec["sep_klt_rdot"] = _rdot_summary(st)
                learned = [unit_gain(t) for t in st.learned_transforms if t is not None]
                sets[name]["mts+sep-klt"] = fixed + learned
                rec["sep_klt_bits"] = sep_klt_bits(n) * len(learned)
        except (LearningError, NumericalError, AccumulatorOverflowError, np.linalg.LinAlgError,
                FloatingPointError) as exc:
            raise ExperimentNumericalError(f"mode {name}: {exc}") from exc
        modes[name] = rec

    rd_rows = []
    curves = {}
    for name, _, test in data:
        for conf in cfg["configs"]:
            pts = []
            usage = []
            for step in cfg["steps"]:
                lam = cfg["lambda_factor"] * step * step
                res = encode(test, sets[name][conf], QuantizerSpec(step, cfg["deadzone_offset"]), lam, cfg["peak"])
                if not math.isfinite(res.psnr):
                    raise ExperimentNumericalError(f"mode {name}: lossless point at step {step}")
                pts.append((res.rate, res.psnr))
                usage.append(res.usage)
                rd_rows.append((conf, name, lam, res.rate, res.psnr))
            curves[(conf, name)] = pts
            modes[name].setdefault("usage", {})[conf] = usage

    bd = {}
    for conf in cfg["configs"]:
        if conf == "mts":
            continue
        per_mode = {name: _safe_bd(curves[("mts", name)], curves[(conf, name)]) for name, _, _ in data}
        vals = [v for v in per_mode.values() if v is not None]
        bd[conf] = {"per_mode": per_mode, "average": float(np.mean(vals)) if vals else None}

    summary = {
        "format": "intdtt-experiment",
        "version": 1,
        "config": cfg,
        "modes": modes,
        "bd_rate": bd,
        "memory": {"sep_klt_bits_per_kernel": sep_klt_bits(n)},
    }
    if "mts+int-dtt+" in cfg["configs"] and "mts+dtt+" in cfg["configs"]:
        a, b = bd["mts+int-dtt+"]["average"], bd["mts+dtt+"]["average"]
        summary["int_vs_float_gap_pp"] = None if a is None or b is None else a - b
    if params_all:
        summary["op_counts"] = _op_summary(modes)
    groups = {}
    if cfg["cluster_k"] and params_all:
        summary["clustering"], groups = _clustering(cfg, data, params_all, fixed, curves)

    report = {"summary": summary, "rd_rows": rd_rows, "groups": groups}
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def _q8(mat):
    return quantize_basis(EigenSystem(mat.T, np.zeros(mat.shape[0]))).to_float()


def _op_summary(modes: dict) -> dict:
    mults = []
    extra = []
    dense = []
    for rec in modes.values():
        for pair in rec.get("int_dtt_plus", []):
            for ax in (pair["row"], pair["col"]):
                mults.append(ax["ops"]["multiplications"])
                dense.append(ax["dense_kernel_ops"]["multiplications"])
                if "diag_plus_nnz" in ax:
                    extra.append(ax["diag_plus_nnz"])
    return {
        "int_dtt_plus_mults_max": max(mults),
        "int_dtt_plus_mults_mean": float(np.mean(mults)),
        "diag_plus_nnz_max": max(extra) if extra else None,
        "dense_kernel_mults_max": max(dense),
    }


def _clustering(cfg, data, params_all, fixed, curves):
    n = cfg["n"]
    owners = [name for name, _ in params_all]
    params = [p for _, p in params_all]
    out = {}
    groups = {}
    for k in sorted(set(cfg["cluster_k"])):
        if k > len(params):
            logger.warning("skipping k=%d: only %d learned kernels", k, len(params))
            continue
        res = cluster_weights(params, k, seed=cfg["seed"])
        axes = []
        transforms = []
        for j, phi in enumerate(res.centroids):
            t, pair = int_dtt_plus_transform(phi, n, cfg["p_d"], cfg["p_f"], f"group{j}")
            transforms.append(t)
            axes.append(pair)
        per_mode = {}
        for name, _, test in data:
            labels = sorted({int(g) for o, g in zip(owners, res.assignment) if o == name})
            tset = fixed + [transforms[g] for g in labels]
            pts = []
            for step in cfg["steps"]:
                lam = cfg["lambda_factor"] * step * step
                r = encode(test, tset, QuantizerSpec(step, cfg["deadzone_offset"]), lam, cfg["peak"])
                pts.append((r.rate, r.psnr))
            per_mode[name] = _safe_bd(curves[("mts", name)], pts)
        vals = [v for v in per_mode.values() if v is not None]
        out[str(k)] = {
            "assignment": [int(g) for g in res.assignment],
            "owners": owners,
            "centroids": [c.to_dict() for c in res.centroids],
            "objective_trace": res.objective_trace,
            "int_dtt_plus_bits": memory_bits(axes),
            "sep_klt_bits": sep_klt_bits(n) * k,
            "angle_bins": angle_bin_groups(len(owners), k).tolist(),
            "bd_rate": {"per_mode": per_mode, "average": float(np.mean(vals)) if vals else None},
        }
        groups[k] = (owners, res.assignment)
    return out, groups


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_report(report: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["config", "mode", "lambda", "rate", "psnr"])
    for conf, mode, lam, rate, psnr in report["rd_rows"]:
        writer.writerow([conf, mode, repr(float(lam)), repr(float(rate)), repr(float(psnr))])
    (out / "rd.csv").write_text(buf.getvalue())
    text = json.dumps(_jsonable(report["summary"]), sort_keys=True, indent=2, allow_nan=False)
    (out / "summary.json").write_text(text + "\n")
    for k, (owners, assignment) in report.get("groups", {}).items():
        write_groups_csv(out / f"groups_k{k}.csv", owners, assignment)
