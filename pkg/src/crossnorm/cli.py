"""Command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 I/O or format error,
3 numerical failure (non-finite loss, failed gradient check).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

# CROSSNORM_THREADS caps internal parallelism; BLAS pools only honor a cap
# set before numpy first loads, so apply it before any heavy import.
_threads = os.environ.get("CROSSNORM_THREADS", "").strip()
if _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import numpy as np

from . import checkpoint as ckpt_io
from . import data as data_mod
from . import evaluate as eval_mod
from . import gradcheck
from . import pfm
from . import trainer as trainer_mod
from .data import DataError, LightSpec
from .model import ConfigError, CrossModalModel
from .tensor import NumericalError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="crossnorm", description="Cross-modal face-normal estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paired", type=int, default=0)
    p.add_argument("--image-only", type=int, default=0)
    p.add_argument("--normal-only", type=int, default=0)
    p.add_argument("--res", type=int, default=64)
    p.add_argument("--bumps", type=int, default=data_mod.DEFAULT_N_BUMPS)
    p.add_argument("--rotate", action="store_true", help="in-plane rotation augmentation")

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True, help="JSON file mirroring TrainConfig/ModelConfig keys")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", default="model.ckpt")

    p = sub.add_parser("predict", help="predict normals for one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="output PFM path")
    p.add_argument("--png", default=None, help="optional color-coded PNG")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint or prediction dir on a dataset")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--pred-dir", default=None, help="directory of <sample_id>.pred.pfm files")
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="report path prefix")

    p = sub.add_parser("enhance", help="shade a depth map with and without predicted normals")
    p.add_argument("--normals", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--light", required=True, help="X,Y,Z light direction (normalized)")
    p.add_argument("--intensity", type=float, default=1.0)
    p.add_argument("--ambient", type=float, default=0.1)
    p.add_argument("--out", required=True, help="output path prefix")

    p = sub.add_parser("grad-check", help="run the full gradient-check suite")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)

    return parser


def _load_train_config(path, data_dir, steps):
    file_values = {}
    if path is not None:
        with open(path) as f:
            try:
                file_values = json.load(f)
            except json.JSONDecodeError as e:
                raise UsageError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(file_values, dict):
            raise UsageError(f"config file {path} must hold a JSON object")
    try:
        config = trainer_mod.TrainConfig.from_dict(file_values)
    except (ConfigError, TypeError) as e:
        raise UsageError(str(e)) from None
    if steps is not None:
        config.steps = steps
    if data_dir is not None:
        config.data_dir = data_dir
    return config


def _write_resolved_config(config, out_path):
    resolved = Path(str(out_path) + ".resolved.json")
    with open(resolved, "w") as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return resolved


def cmd_gen_data(args):
    data_mod.generate_dataset(
        args.out,
        seed=args.seed,
        n_paired=args.paired,
        n_image_only=args.image_only,
        n_normal_only=args.normal_only,
        resolution=args.res,
        n_bumps=args.bumps,
        rotation_augment=args.rotate,
    )
    print(f"wrote dataset to {args.out}")
    return EXIT_OK


def cmd_train(args):
    config = _load_train_config(args.config, args.data, args.steps)
    samples = data_mod.load_dataset(config.data_dir)
    model = CrossModalModel(config.model)
    log_path = Path(str(args.out) + ".log.csv")
    with open(log_path, "w") as log:
        optimizer, history = trainer_mod.train(model, samples, config, log_stream=log)
    ckpt_io.save(model, optimizer, args.out, step=len(history))
    resolved = _write_resolved_config(config, args.out)
    print(f"trained {len(history)} steps; checkpoint {args.out}; log {log_path}; config {resolved}")
    return EXIT_OK


def cmd_predict(args):
    model, _, _, _ = ckpt_io.load(args.ckpt)
    image = data_mod.read_png(args.image)
    if image.shape[0] == 1:
        image = np.repeat(image, 3, axis=0)
    elif image.shape[0] == 4:
        image = image[:3]
    pred = eval_mod.predict_normals(model, image)
    pfm.write_pfm(pred, args.out)
    if args.png:
        data_mod.write_png(args.png, (pred + 1.0) / 2.0)
    print(f"wrote normals to {args.out}")
    return EXIT_OK


def cmd_evaluate(args):
    if (args.ckpt is None) == (args.pred_dir is None):
        raise UsageError("provide exactly one of --ckpt or --pred-dir")
    model = None
    checkpoint_id = ""
    if args.ckpt is not None:
        model, _, _, _ = ckpt_io.load(args.ckpt)
        checkpoint_id = Path(args.ckpt).name
    report, failures = eval_mod.evaluate_dataset(
        args.data,
        model=model,
        predictions_dir=args.pred_dir,
        checkpoint_id=checkpoint_id,
        report_prefix=args.report,
    )
    print(report.row())
    for sample_id, reason in failures:
        print(f"excluded {sample_id}: {reason}", file=sys.stderr)
    print(f"wrote {args.report}.txt and {args.report}.csv")
    return EXIT_IO if failures else EXIT_OK


def cmd_enhance(args):
    parts = args.light.split(",")
    if len(parts) != 3:
        raise UsageError(f"--light must be X,Y,Z, got {args.light!r}")
    d = np.array([float(v) for v in parts], dtype=np.float64)
    norm = float(np.linalg.norm(d))
    if norm < 1e-12:
        raise UsageError("--light must be a nonzero vector")
    d /= norm
    light = LightSpec(direction=tuple(d), intensity=args.intensity)
    spec = eval_mod.ShadingSpec(light=light, ambient=args.ambient)

    normals = pfm.read_pfm(args.normals)
    depth = pfm.read_pfm(args.depth)
    if depth.shape[0] != 1:
        raise DataError(f"depth PFM must be single channel, got {depth.shape}")
    mask = np.ones(depth.shape[1:], dtype=np.float32)
    baseline, enhanced = eval_mod.enhance_depth(depth[0], normals, spec, mask)
    base_path = Path(str(args.out) + ".baseline.png")
    enh_path = Path(str(args.out) + ".enhanced.png")
    data_mod.write_png(base_path, baseline)
    data_mod.write_png(enh_path, enhanced)
    print(f"wrote {base_path} and {enh_path}")
    return EXIT_OK


def cmd_grad_check(args):
    reports = gradcheck.standard_suite(tolerance=args.tol, seed=args.seed)
    print(f"{'op':<28} {'max rel err':>12} {'tol':>10}  status")
    for r in reports:
        print(r.row())
    if any(not r.passed for r in reports):
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE

    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "predict": cmd_predict,
        "evaluate": cmd_evaluate,
        "enhance": cmd_enhance,
        "grad-check": cmd_grad_check,
    }
    try:
        return handlers[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError,) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
