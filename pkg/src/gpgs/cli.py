"""Command-line interface.

Subcommands wire the pipeline stages together: build-dataset, train,
densify, evaluate, and pipeline (all four in sequence). Every command is
deterministic given its inputs, flags, and seed. Exit codes: 0 success,
1 usage error, 2 input-data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import densify as dn
from . import gp, metrics, model_io, sfm_io
from .errors import (
    EmptyDataset,
    InputDataError,
    MissingFile,
    NumericalError,
    UsageError,
)

SEED_ENV_VAR = "GPGS_SEED"


@dataclass
class RunConfig:
    """Effective configuration of a run after merging defaults, the config
    file, the GPGS_SEED fallback, and command-line flags (in that order)."""

    model_dir: Optional[str] = None
    dataset: Optional[str] = None
    gp_model: Optional[str] = None
    output: Optional[str] = None
    depth_dir: Optional[str] = None
    kernel: str = gp.MATERN
    nu: float = 0.5
    key_frames: int = 1
    beta: float = 0.25
    angular_resolution: int = 8
    filter_quantile: float = 0.75
    iterations: int = 1000
    learning_rate: float = 0.01
    l2_weight: float = 1e-6
    max_train_points: int = 2000
    train_fraction: float = 0.8
    seed: int = 0
    ply_binary: bool = True

    def kernel_template(self) -> gp.KernelConfig:
        return gp.default_kernel(self.kernel, self.nu if self.kernel == gp.MATERN else None)

    def train_config(self) -> gp.TrainConfig:
        return gp.TrainConfig(
            iterations=self.iterations,
            learning_rate=self.learning_rate,
            l2_weight=self.l2_weight,
            max_train_points=self.max_train_points,
            seed=self.seed,
        )

    def sampling_config(self) -> dn.SamplingConfig:
        return dn.SamplingConfig(beta=self.beta, angular_resolution=self.angular_resolution)

    def filter_config(self) -> dn.FilterConfig:
        return dn.FilterConfig(quantile=self.filter_quantile)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _convert(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind in ("Optional[str]", "str"):
        return raw
    if kind == "bool":
        lowered = raw.lower()
        if lowered in _BOOL_TRUE:
            return True
        if lowered in _BOOL_FALSE:
            return False
        raise UsageError(f"config value for {key} must be boolean, got {raw!r}")
    try:
        return int(raw) if kind == "int" else float(raw)
    except ValueError as exc:
        raise UsageError(f"config value for {key}: {exc}") from exc


def parse_config_file(path) -> dict:
    """Plain-text `key = value` lines; '#' starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"missing config file {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _FIELD_TYPES:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _convert(key, value.strip())
    return values


def write_run_config(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [
        f"{field.name} = {getattr(cfg, field.name)}"
        for field in dataclasses.fields(RunConfig)
    ]
    (out_dir / "run-config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required for this command")


def _suffixed(path: Path, image_id: int, multi: bool) -> Path:
    if not multi:
        return path
    return path.with_name(f"{path.stem}_frame{image_id}{path.suffix}")


def _depth_for_frame(cfg: RunConfig, model: sfm_io.SparseModel, image_id: int):
    if cfg.depth_dir is None:
        return None
    name = Path(model.image_by_id(image_id).name).stem + ".pfm"
    path = Path(cfg.depth_dir) / name
    if not path.is_file():
        raise MissingFile(f"missing depth file {path} for key frame {image_id}")
    return sfm_io.read_depth_pfm(path)


def cmd_build_dataset(cfg: RunConfig) -> list[Path]:
    """Parse the SfM model, rank key frames, and write dataset CSVs."""
    _require(cfg, "model_dir", "output")
    model = sfm_io.parse_colmap_model(cfg.model_dir)
    frames = sfm_io.select_key_frames(model, cfg.key_frames)

    print("rank  image_id  linked  name")
    for rank, image_id in enumerate(frames, start=1):
        img = model.image_by_id(image_id)
        print(f"{rank:<5} {image_id:<9} {img.linked_count():<7} {img.name}")

    out = Path(cfg.output)
    write_run_config(cfg, out.parent if out.parent != Path("") else Path("."))
    written = []
    for image_id in frames:
        depth = _depth_for_frame(cfg, model, image_id)
        ds = sfm_io.build_pixel_dataset(model, image_id, depth)
        if depth is not None:
            before = len(ds)
            ds = ds.drop_missing_depth()
            if len(ds) < before:
                print(f"frame {image_id}: dropped {before - len(ds)} samples on invalid depth")
        path = _suffixed(out, image_id, multi=len(frames) > 1)
        sfm_io.write_dataset_csv(ds, path)
        print(f"frame {image_id}: wrote {len(ds)} samples to {path}")
        written.append(path)
    return written


def _write_loss_csv(model: gp.TrainedGP, path: Path) -> None:
    lines = ["iter,output,loss"]
    for j, curve in enumerate(model.loss_curves):
        lines += [f"{it},{j},{loss:.17g}" for it, loss in enumerate(curve)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_train(cfg: RunConfig) -> Path:
    """Train the six GPs on a dataset CSV and write the model file."""
    _require(cfg, "dataset", "output")
    ds = sfm_io.read_dataset_csv(cfg.dataset)
    model = gp.train_gp(ds, cfg.kernel_template(), cfg.train_config())
    out = Path(cfg.output)
    write_run_config(cfg, out.parent if out.parent != Path("") else Path("."))
    model_io.save_model(model, out)
    loss_path = out.with_name(out.stem + "_loss.csv")
    _write_loss_csv(model, loss_path)
    finals = "  ".join(
        f"{name}={curve[-1]:.6g}" for name, curve in zip(metrics.OUTPUT_NAMES, model.loss_curves)
    )
    print(f"trained on {model.X.shape[0]} points; final per-output NLL: {finals}")
    print(f"model: {out}\nloss curve: {loss_path}")
    return out


def _print_variance_report(report: dn.VarianceReport) -> None:
    print("channel   original      filtered      reduction")
    for name in dn.VarianceReport.CHANNELS:
        print(
            f"{name:<9} {report.original[name]:<13.6g} "
            f"{report.filtered[name]:<13.6g} {report.reduction_pct[name]:.2f}%"
        )


def _write_variance_csv(report: dn.VarianceReport, path: Path) -> None:
    lines = ["channel,original,filtered,reduction_pct"]
    for name in dn.VarianceReport.CHANNELS:
        lines.append(
            f"{name},{report.original[name]:.17g},"
            f"{report.filtered[name]:.17g},{report.reduction_pct[name]:.17g}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _densify_one(cfg: RunConfig, model: gp.TrainedGP, sparse, image_id=None):
    """Sample candidates around the model's training pixels and predict."""
    pixels = np.stack(
        [model.X[:, 0] * model.width, model.X[:, 1] * model.height], axis=1
    )
    candidates = dn.generate_samples(
        pixels, model.width, model.height, cfg.sampling_config(), seed=cfg.seed
    )
    if model.input_dim == 3:
        if image_id is None:
            raise UsageError(
                "depth-trained model needs --dataset (for the key frame id) and --depth-dir"
            )
        depth = _depth_for_frame(cfg, sparse, image_id)
        if depth is None:
            raise UsageError("--depth-dir is required for a depth-trained model")
        candidates = dn.attach_depth(candidates, depth, model.width, model.height)
    preds = dn.infer_dense(model, candidates)
    return dn.filter_by_variance(preds, cfg.filter_config())


def _concat_predictions(parts: list[dn.PredictedPointSet]) -> dn.PredictedPointSet:
    if len(parts) == 1:
        return parts[0]
    return dn.PredictedPointSet(
        pixels=tuple(p for part in parts for p in part.pixels),
        mean6=np.concatenate([part.mean6 for part in parts]),
        var6=np.concatenate([part.var6 for part in parts]),
        mean_rgb_var=np.concatenate([part.mean_rgb_var for part in parts]),
        retained=np.concatenate([part.retained for part in parts]),
    )


def cmd_densify(cfg: RunConfig) -> Path:
    """Predict new points from a trained model and merge with the SfM cloud."""
    _require(cfg, "model_dir", "gp_model", "output")
    model = model_io.load_model(cfg.gp_model)
    sparse = sfm_io.parse_colmap_model(cfg.model_dir)
    image_id = None
    if model.input_dim == 3 and cfg.dataset is not None:
        image_id = sfm_io.read_dataset_csv(cfg.dataset).image_id
    filtered = _densify_one(cfg, model, sparse, image_id)
    cloud = dn.merge_clouds(sparse, filtered)

    out = Path(cfg.output)
    write_run_config(cfg, out.parent if out.parent != Path("") else Path("."))
    sfm_io.write_ply(cloud, out, binary=cfg.ply_binary)
    report = dn.variance_reduction_report(filtered)
    print(
        f"sparse points: {len(sparse.points3d)}  candidates: {len(filtered)}  "
        f"retained: {filtered.retained_count()}  output points: {len(cloud)}"
    )
    _print_variance_report(report)
    _write_variance_csv(report, out.with_name(out.stem + "_variance.csv"))
    print(f"cloud: {out}")
    return out


def _write_metrics_csv(report: metrics.HoldoutReport, path: Path) -> None:
    lines = ["metric,output,value"]
    bundle = report.bundle
    lines.append(f"r2,joint,{bundle.r2:.17g}")
    lines.append(f"rmse,joint,{bundle.rmse:.17g}")
    lines.append(f"chamfer,joint,{bundle.chamfer:.17g}")
    lines.append(f"sample_count,joint,{bundle.sample_count}")
    for out_metrics in report.per_output:
        r2_text = "" if out_metrics.r2 is None else f"{out_metrics.r2:.17g}"
        lines.append(f"r2,{out_metrics.name},{r2_text}")
        lines.append(f"rmse,{out_metrics.name},{out_metrics.rmse:.17g}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_evaluate(cfg: RunConfig) -> Path:
    """Hold out a test split, train on the rest, and report metrics."""
    _require(cfg, "dataset", "output")
    ds = sfm_io.read_dataset_csv(cfg.dataset)
    split = sfm_io.split_dataset(ds, cfg.train_fraction, cfg.seed)
    if len(split.test) == 0:
        raise EmptyDataset(
            f"test split is empty (n={len(ds)}, train_fraction={cfg.train_fraction})"
        )
    model = gp.train_gp(split.train, cfg.kernel_template(), cfg.train_config())
    report = metrics.evaluate_holdout(model, split.test)

    out = Path(cfg.output)
    write_run_config(cfg, out.parent if out.parent != Path("") else Path("."))
    _write_metrics_csv(report, out)
    bundle = report.bundle
    print(
        f"holdout n={bundle.sample_count}: r2={bundle.r2:.4f} "
        f"rmse={bundle.rmse:.6g} chamfer={bundle.chamfer:.6g}"
    )
    print("output  r2        rmse")
    for om in report.per_output:
        r2_text = "-" if om.r2 is None else f"{om.r2:.4f}"
        print(f"{om.name:<7} {r2_text:<9} {om.rmse:.6g}")
    print(f"report: {out}")
    return out


def cmd_pipeline(cfg: RunConfig) -> None:
    """build-dataset, train, densify, and evaluate in sequence.

    With several key frames, each frame trains its own GP; the retained
    predictions of all frames are unioned before merging with the sparse
    cloud.
    """
    _require(cfg, "model_dir", "output")
    out_dir = Path(cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_run_config(cfg, out_dir)

    build_cfg = dataclasses.replace(cfg, output=str(out_dir / "dataset.csv"))
    ds_paths = cmd_build_dataset(build_cfg)

    sparse = sfm_io.parse_colmap_model(cfg.model_dir)
    filtered_parts = []
    for ds_path in ds_paths:
        ds = sfm_io.read_dataset_csv(ds_path)
        if len(ds) == 0:
            print(f"skipping empty dataset {ds_path}")
            continue
        tag = ds_path.stem.removeprefix("dataset")
        model_path = out_dir / f"model{tag}.txt"
        train_cfg = dataclasses.replace(cfg, dataset=str(ds_path), output=str(model_path))
        cmd_train(train_cfg)

        model = model_io.load_model(model_path)
        filtered_parts.append(_densify_one(cfg, model, sparse, ds.image_id))

        metrics_path = out_dir / f"metrics{tag}.csv"
        eval_cfg = dataclasses.replace(cfg, dataset=str(ds_path), output=str(metrics_path))
        cmd_evaluate(eval_cfg)

    if not filtered_parts:
        raise EmptyDataset("no key frame produced a usable dataset")
    combined = _concat_predictions(filtered_parts)
    cloud = dn.merge_clouds(sparse, combined)
    ply_path = out_dir / "cloud.ply"
    sfm_io.write_ply(cloud, ply_path, binary=cfg.ply_binary)
    report = dn.variance_reduction_report(combined)
    print(
        f"sparse points: {len(sparse.points3d)}  candidates: {len(combined)}  "
        f"retained: {combined.retained_count()}  output points: {len(cloud)}"
    )
    _print_variance_report(report)
    _write_variance_csv(report, out_dir / "cloud_variance.csv")
    print(f"cloud: {ply_path}")


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="gpgs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("build-dataset", "parse a COLMAP model and write pixel-to-point dataset CSVs"),
        ("train", "train the six GPs on a dataset CSV"),
        ("densify", "sample, infer, filter, and merge into a PLY cloud"),
        ("evaluate", "train/test split evaluation of the GP"),
        ("pipeline", "run all stages into an output directory"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="plain-text key = value config file")
        p.add_argument("--model-dir", help="COLMAP text model directory")
        p.add_argument("--dataset", help="pixel-to-point dataset CSV")
        p.add_argument("--gp-model", help="trained model file (densify)")
        p.add_argument("--output", help="output file, or directory for pipeline")
        p.add_argument("--depth-dir", help="directory of per-frame PFM depth maps")
        p.add_argument("--kernel", choices=(gp.MATERN, gp.RBF))
        p.add_argument("--nu", type=float, choices=gp.SUPPORTED_NU)
        p.add_argument("--key-frames", type=int)
        p.add_argument("--beta", type=float)
        p.add_argument("--angular-resolution", type=int)
        p.add_argument("--filter-quantile", type=float)
        p.add_argument("--iterations", type=int)
        p.add_argument("--learning-rate", type=float)
        p.add_argument("--l2-weight", type=float)
        p.add_argument("--max-train-points", type=int)
        p.add_argument("--train-fraction", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument(
            "--ascii-ply", action="store_true", default=None,
            help="write ASCII instead of binary PLY",
        )
    return parser


def build_run_config(args: argparse.Namespace) -> RunConfig:
    merged = {}
    if args.config:
        merged.update(parse_config_file(args.config))
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None and "seed" not in merged:
        try:
            merged["seed"] = int(env_seed)
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}") from exc
    for key in _FIELD_TYPES:
        if key == "ply_binary":
            continue
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if getattr(args, "ascii_ply", None):
        merged["ply_binary"] = False
    try:
        return RunConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


_COMMANDS = {
    "build-dataset": cmd_build_dataset,
    "train": cmd_train,
    "densify": cmd_densify,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = build_run_config(args)
        # Range validation lives in the module configs; trigger it here so
        # bad values exit as usage errors before any file is touched.
        cfg.train_config()
        cfg.sampling_config()
        cfg.filter_config()
        cfg.kernel_template()
        _COMMANDS[args.command](cfg)
        return 0
    except (UsageError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except InputDataError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
