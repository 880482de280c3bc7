"""Command-line experiment runner.

Subcommands
-----------
``train``      train one network from a config file; writes a run directory
               containing the resolved config snapshot, per-step metrics.csv,
               checkpoint, and a summary.json with the final train PSNR.
``eval``       reconstruct a dataset split with a checkpoint (EMA weights when
               the checkpoint carries them) or, without a checkpoint, with the
               operator pseudo-inverse alone; reports mean and std PSNR.
``benchmark``  train every method listed in [benchmark] under identical
               conditions, then emit overlaid convergence curves, an
               iterations-to-threshold table, and a machine-readable report.

Exit codes: 0 success, 2 config/validation error, 3 divergence. All outputs
land under the config's ``output.dir``; the FASTEI_OUTPUT_ROOT environment
variable, when set, re-roots that directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import data as data_mod
from . import linops, metrics, models, trainers
from .config import ExperimentConfig, apply_overrides, load_config
from .errors import ConfigError, DivergenceError, IngestionError
from .linops import LinearOperator
from .models import ReconstructionNet

OUTPUT_ROOT_ENV = "FASTEI_OUTPUT_ROOT"


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def output_root(cfg: ExperimentConfig) -> Path:
    env = os.environ.get(OUTPUT_ROOT_ENV)
    base = Path(env) if env else Path(".")
    return base / cfg.output.dir


def _split_spec(cfg: ExperimentConfig, split: str) -> dict:
    return {
        "split": split,
        "train_ids": cfg.data.train_ids,
        "test_ids": cfg.data.test_ids,
    }


def load_split(cfg: ExperimentConfig, split: str) -> data_mod.ImageDataset:
    return data_mod.load_dataset(cfg.data.source, cfg.data.size,
                                 _split_spec(cfg, split))


def _checkpoint_model(ckpt_path) -> Tuple[ReconstructionNet, dict]:
    model, _, extra = models.load_checkpoint(ckpt_path)
    if "ema_state_dict" in extra:
        model = trainers.ema_model(model, extra["ema_state_dict"])
    return model, extra


def _check_compatible(model: ReconstructionNet, cfg: ExperimentConfig):
    size = model.spec.get("image_size")
    if size is not None and int(size) != cfg.data.size:
        raise ConfigError(
            f"checkpoint expects {size}x{size} images but config uses "
            f"{cfg.data.size}x{cfg.data.size}"
        )


def evaluate_psnrs(cfg: ExperimentConfig, split: str,
                   model: Optional[ReconstructionNet]) -> Dict[int, float]:
    """Per-sample PSNR of reconstructions on a split.

    With a model, reconstructions are G(y); without one, the operator
    pseudo-inverse (for tomography, filtered back-projection) is the baseline.
    """
    ds = load_split(cfg, split)
    operator = trainers.build_operator(cfg)
    noise_model = linops.MeasurementModel(operator=operator,
                                          noise_std=cfg.data.noise_std)
    mset = data_mod.build_measurements(ds, noise_model, seed=cfg.seed.noise)
    out: Dict[int, float] = {}
    for sid, y, x in data_mod.paired_examples(ds, mset):
        recon = (models.reconstruct(model, y, operator) if model is not None
                 else operator.pinv(y))
        out[sid] = metrics.psnr(x, recon)
    return out


def _mean_std(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(list(values), dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _final_epoch_mean(log: metrics.MetricLog, column: str = "psnr_train") -> float:
    last_epoch = log.rows[-1]["epoch"]
    vals = [r[column] for r in log.rows if r["epoch"] == last_epoch]
    return float(np.mean(vals))


def _write_run_artifacts(run_dir: Path, cfg: ExperimentConfig,
                         state: trainers.TrainState,
                         log: metrics.MetricLog, kind: str) -> dict:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(cfg.snapshot())
    log.write_csv(run_dir / "metrics.csv")

    eval_model = trainers.ema_model(state, getattr(state, "ema_state_dict", None))
    operator = state.operator
    ds = load_split(cfg, "train")
    noise_model = linops.MeasurementModel(operator=operator,
                                          noise_std=cfg.data.noise_std)
    mset = data_mod.build_measurements(ds, noise_model, seed=cfg.seed.noise)
    per_sample = {}
    for sid, y, x in data_mod.paired_examples(ds, mset):
        per_sample[sid] = metrics.psnr(x, models.reconstruct(eval_model, y, operator))
    mean, std = _mean_std(per_sample.values())
    summary = {
        "method": kind,
        "steps": state.step,
        "config_hash": cfg.hash(),
        "weights": "ema" if getattr(state, "ema_state_dict", None) is not None else "raw",
        "final_train_psnr_mean": mean,
        "final_train_psnr_std": std,
        "final_train_psnr_curve": _final_epoch_mean(log),
        "per_sample_psnr": {str(k): v for k, v in per_sample.items()},
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def run_one(cfg: ExperimentConfig, run_dir: Path, kind: Optional[str] = None,
            run_id: Optional[str] = None) -> Tuple[trainers.TrainState, metrics.MetricLog, dict]:
    kind = kind or cfg.trainer.kind
    ds = load_split(cfg, "train")
    state, log = trainers.run_training(cfg, ds, out_dir=run_dir, kind=kind,
                                       run_id=run_id or run_dir.name)
    summary = _write_run_artifacts(run_dir, cfg, state, log, kind)
    return state, log, summary


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = apply_overrides(load_config(args.config), args.override)
    name = args.name or f"{cfg.trainer.kind}-{cfg.hash()[:8]}"
    run_dir = output_root(cfg) / name
    state, log, summary = run_one(cfg, run_dir)
    print(f"run dir: {run_dir}")
    print(f"steps: {summary['steps']}")
    print(f"final train PSNR: {summary['final_train_psnr_mean']:.2f} "
          f"± {summary['final_train_psnr_std']:.2f} dB ({summary['weights']} weights)")
    return 0


def cmd_eval(args) -> int:
    cfg = apply_overrides(load_config(args.config), args.override)
    model = None
    source = "pseudo-inverse (no checkpoint)"
    if args.checkpoint:
        if not Path(args.checkpoint).is_file():
            raise ConfigError(f"checkpoint not found: {args.checkpoint}")
        model, extra = _checkpoint_model(args.checkpoint)
        _check_compatible(model, cfg)
        source = f"{model.arch} checkpoint ({'ema' if 'ema_state_dict' in extra else 'raw'} weights)"
    per_sample = evaluate_psnrs(cfg, args.split, model)
    mean, std = _mean_std(per_sample.values())
    print(f"eval: {source}, split={args.split}, {len(per_sample)} samples")
    for sid in sorted(per_sample):
        print(f"  sample {sid:4d}: {per_sample[sid]:7.2f} dB")
    print(f"mean PSNR: {mean:.2f} ± {std:.2f} dB")
    if args.out:
        payload = {
            "split": args.split,
            "source": source,
            "psnr_mean": mean,
            "psnr_std": std,
            "per_sample_psnr": {str(k): v for k, v in per_sample.items()},
        }
        Path(args.out).write_text(json.dumps(payload, indent=2))
    return 0


def cmd_benchmark(args) -> int:
    cfg = apply_overrides(load_config(args.config), args.override)
    kinds = list(cfg.benchmark.kinds)
    if len(kinds) < 2:
        raise ConfigError("benchmark needs at least two trainer kinds")
    if cfg.benchmark.threshold_method not in kinds:
        raise ConfigError(
            f"benchmark.threshold_method {cfg.benchmark.threshold_method!r} "
            f"is not among benchmark.kinds {kinds}"
        )
    name = args.name or f"benchmark-{cfg.hash()[:8]}"
    bench_dir = output_root(cfg) / name
    bench_dir.mkdir(parents=True, exist_ok=True)

    results: Dict[str, dict] = {}
    logs: Dict[str, List[dict]] = {}
    for kind in kinds:
        run_dir = bench_dir / kind
        extra = cfg.benchmark.kind_overrides(kind)
        kind_cfg = apply_overrides(cfg, extra) if extra else cfg
        t0 = time.perf_counter()
        try:
            state, log, summary = run_one(kind_cfg, run_dir, kind=kind)
        except (DivergenceError, ConfigError) as exc:
            results[kind] = {"status": "failed", "error": str(exc)}
            print(f"[{kind}] FAILED: {exc}")
            continue
        test_psnr = evaluate_psnrs(
            cfg, "test", trainers.ema_model(state, getattr(state, "ema_state_dict", None))
        )
        test_mean, test_std = _mean_std(test_psnr.values())
        results[kind] = {
            "status": "ok",
            "steps": state.step,
            "train_psnr_curve_final": summary["final_train_psnr_curve"],
            "train_psnr_eval": summary["final_train_psnr_mean"],
            "train_psnr_eval_std": summary["final_train_psnr_std"],
            "test_psnr_mean": test_mean,
            "test_psnr_std": test_std,
            "wall_time_s": time.perf_counter() - t0,
        }
        if extra:
            results[kind]["overrides"] = extra
        logs[kind] = log.rows
        print(f"[{kind}] train {summary['final_train_psnr_curve']:.2f} dB, "
              f"test {test_mean:.2f} ± {test_std:.2f} dB")

    fbp_train = _mean_std(evaluate_psnrs(cfg, "train", None).values())
    fbp_test = _mean_std(evaluate_psnrs(cfg, "test", None).values())
    report = {
        "config_hash": cfg.hash(),
        "kinds": kinds,
        "fbp": {"train_psnr_mean": fbp_train[0], "train_psnr_std": fbp_train[1],
                "test_psnr_mean": fbp_test[0], "test_psnr_std": fbp_test[1]},
        "methods": results,
    }

    ref = cfg.benchmark.threshold_method
    if results.get(ref, {}).get("status") == "ok":
        threshold = results[ref]["train_psnr_curve_final"]
        report["threshold_psnr"] = threshold
        report["threshold_method"] = ref
        for kind, res in results.items():
            if res.get("status") != "ok":
                continue
            rows = logs[kind]
            hit = next((r["step"] for r in rows if r["psnr_train"] >= threshold), None)
            res["iterations_to_threshold"] = hit
            res["iterations_total"] = rows[-1]["step"]
        ref_iters = results[ref]["iterations_to_threshold"]
        for kind, res in results.items():
            if res.get("status") == "ok" and res.get("iterations_to_threshold"):
                if ref_iters:
                    res["speedup_vs_" + ref] = ref_iters / res["iterations_to_threshold"]

    (bench_dir / "report.json").write_text(json.dumps(report, indent=2))
    if logs:
        metrics.render_curves(logs, bench_dir, threshold=report.get("threshold_psnr"))
    rows = [
        metrics.SummaryRow(method=k, count=len(cfg_ids(cfg, "test")),
                           mean=r["test_psnr_mean"], std=r["test_psnr_std"])
        for k, r in results.items() if r.get("status") == "ok"
    ]
    rows.append(metrics.SummaryRow(method="fbp", count=len(cfg_ids(cfg, "test")),
                                   mean=fbp_test[0], std=fbp_test[1]))
    metrics.write_summary_csv(rows, bench_dir / "summary.csv")
    print(metrics.format_summary_table(rows))
    print(f"report: {bench_dir / 'report.json'}")
    ok = any(r.get("status") == "ok" for r in results.values())
    return 0 if ok else 3


def cfg_ids(cfg: ExperimentConfig, split: str) -> tuple:
    spec = data_mod._resolve_split(_split_spec(cfg, split))
    return spec[1]


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fastei",
        description="Measurement-only training of image reconstruction networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one network from a config")
    p_train.add_argument("--config", required=True, help="config file path")
    p_train.add_argument("--override", action="append", default=[],
                         metavar="SECTION.KEY=VALUE")
    p_train.add_argument("--name", help="run directory name")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint or the FBP baseline")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint", help="checkpoint to evaluate; omit for FBP only")
    p_eval.add_argument("--split", choices=("train", "test"), default="test")
    p_eval.add_argument("--override", action="append", default=[],
                        metavar="SECTION.KEY=VALUE")
    p_eval.add_argument("--out", help="optional JSON output path")
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser("benchmark", help="train and compare several methods")
    p_bench.add_argument("--config", required=True)
    p_bench.add_argument("--override", action="append", default=[],
                         metavar="SECTION.KEY=VALUE")
    p_bench.add_argument("--name", help="benchmark directory name")
    p_bench.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IngestionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
