"""Plain-text serialization of trained GP models.

The format is versioned ("gpgs-model v1") and stores the per-output
hyperparameters, the normalizer, and the embedded training data at 17
significant digits, which round-trips float64 exactly. Reloading
refactorises with the same arithmetic order, so posterior outputs are
bit-identical to the model that was saved.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import IoFailure, MalformedLine, MissingFile
from .gp import MATERN, KernelConfig, OutputNormalizer, TrainedGP

MODEL_HEADER = "gpgs-model v1"


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def save_model(model: TrainedGP, path) -> None:
    lines = [
        MODEL_HEADER,
        f"width {model.width}",
        f"height {model.height}",
        f"input_dim {model.input_dim}",
        f"train_points {model.X.shape[0]}",
        f"outputs {model.n_outputs}",
    ]
    for j, cfg in enumerate(model.configs):
        lines += [
            f"output {j}",
            f"family {cfg.family}",
            f"nu {cfg.nu if cfg.family == MATERN else 'none'}",
            f"log_signal_var {_fmt(cfg.log_signal_var)}",
            f"log_lengthscale {_fmt(cfg.log_lengthscale)}",
            f"log_noise_var {_fmt(cfg.log_noise_var)}",
            f"norm_mean {_fmt(model.normalizer.mean[j])}",
            f"norm_std {_fmt(model.normalizer.std[j])}",
            f"jitter {_fmt(model.jitters[j])}",
        ]
    lines.append("inputs")
    for row in model.X:
        lines.append(" ".join(_fmt(v) for v in row))
    lines.append("targets")
    for row in model.Z:
        lines.append(" ".join(_fmt(v) for v in row))
    lines.append("end")
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_model(path) -> TrainedGP:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"missing model file {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise MalformedLine(path, 1, f"expected header {MODEL_HEADER!r}")

    pos = 1

    def take_kv(key: str) -> str:
        nonlocal pos
        if pos >= len(lines):
            raise MalformedLine(path, pos + 1, f"unexpected end of file, wanted {key!r}")
        tokens = lines[pos].split(None, 1)
        if len(tokens) != 2 or tokens[0] != key:
            raise MalformedLine(path, pos + 1, f"expected {key!r}, got {lines[pos]!r}")
        pos += 1
        return tokens[1].strip()

    width = int(take_kv("width"))
    height = int(take_kv("height"))
    input_dim = int(take_kv("input_dim"))
    n = int(take_kv("train_points"))
    n_outputs = int(take_kv("outputs"))

    configs: list[KernelConfig] = []
    means, stds, jitters = [], [], []
    for j in range(n_outputs):
        if int(take_kv("output")) != j:
            raise MalformedLine(path, pos, f"output blocks out of order near line {pos}")
        family = take_kv("family")
        nu_token = take_kv("nu")
        nu = None if nu_token == "none" else float(nu_token)
        configs.append(
            KernelConfig(
                family=family,
                nu=nu,
                log_signal_var=float(take_kv("log_signal_var")),
                log_lengthscale=float(take_kv("log_lengthscale")),
                log_noise_var=float(take_kv("log_noise_var")),
            )
        )
        means.append(float(take_kv("norm_mean")))
        stds.append(float(take_kv("norm_std")))
        jitters.append(float(take_kv("jitter")))

    def take_matrix(tag: str, rows: int, cols: int) -> np.ndarray:
        nonlocal pos
        if pos >= len(lines) or lines[pos].strip() != tag:
            raise MalformedLine(path, pos + 1, f"expected section {tag!r}")
        pos += 1
        out = np.empty((rows, cols))
        for i in range(rows):
            if pos >= len(lines):
                raise MalformedLine(path, pos + 1, f"{tag} section truncated at row {i}")
            tokens = lines[pos].split()
            if len(tokens) != cols:
                raise MalformedLine(path, pos + 1, f"expected {cols} values, got {len(tokens)}")
            out[i] = [float(t) for t in tokens]
            pos += 1
        return out

    X = take_matrix("inputs", n, input_dim)
    Z = take_matrix("targets", n, n_outputs)
    if pos >= len(lines) or lines[pos].strip() != "end":
        raise MalformedLine(path, pos + 1, "missing 'end' marker")

    normalizer = OutputNormalizer(np.array(means), np.array(stds))
    return TrainedGP.fit(
        X, Z, configs, normalizer, width, height, jitter=tuple(jitters)
    )
