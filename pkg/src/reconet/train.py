"""Desk-scale training on synthetic colored-rectangle segmentation maps."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from reconet.model import ModelParams, init_model, loss_and_grad, model_logits

POLY_POWER = 0.9


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class ToyConfig:
    rank: int = 8
    steps: int = 500
    lr: float = 0.5
    seed: int = 0
    num_images: int = 16
    channels: int = 8
    height: int = 16
    width: int = 16
    num_classes: int = 3
    max_rects: int = 2
    noise: float = 0.3
    c_out: int = 0  # 0 means "same as channels"

    def __post_init__(self):
        if self.height > 32 or self.width > 32:
            raise ValueError("toy images are limited to 32 x 32")
        if not 2 <= self.num_classes <= 5:
            raise ValueError("toy datasets use 2 to 5 classes")
        if self.num_classes > self.channels:
            raise ValueError("need at least as many channels as classes for distinct class colors")


def parse_config(text: str) -> ToyConfig:
    """Read a flat ``key=value`` config; blank lines and ``#`` comments are ignored."""
    types = {f.name: f.type for f in fields(ToyConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = float(value) if types[key] == "float" else int(value)
    return ToyConfig(**values)


def format_config(config: ToyConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in asdict(config).items())


def make_dataset(config: ToyConfig):
    """Images of axis-aligned rectangles over a background (class 0).

    Each class has a fixed color drawn as a row of a random orthogonal matrix,
    scaled by 2; pixels get that color plus Gaussian noise.
    """
    rng = np.random.Generator(np.random.PCG64([config.seed, 7]))
    q, _ = np.linalg.qr(rng.normal(size=(config.channels, config.channels)))
    colors = 2.0 * q[: config.num_classes]
    images, labels = [], []
    H, W = config.height, config.width
    for _ in range(config.num_images):
        lab = np.zeros((H, W), dtype=np.int64)
        for _ in range(rng.integers(1, config.max_rects + 1)):
            h0, w0 = rng.integers(0, H - 2), rng.integers(0, W - 2)
            h1, w1 = rng.integers(h0 + 2, H + 1), rng.integers(w0 + 2, W + 1)
            lab[h0:h1, w0:w1] = rng.integers(1, config.num_classes)
        x = colors[lab].transpose(2, 0, 1) + config.noise * rng.normal(size=(config.channels, H, W))
        images.append(np.ascontiguousarray(x))
        labels.append(lab)
    return images, labels


def pixel_accuracy(params: ModelParams, images, labels) -> float:
    correct = total = 0
    for x, lab in zip(images, labels):
        logits, _ = model_logits(x, params)
        correct += int((logits.argmax(axis=0) == lab).sum())
        total += lab.size
    return correct / total


@dataclass
class TrainingReport:
    losses_main: list[float] = field(default_factory=list)
    losses_aux: list[float] = field(default_factory=list)
    losses_total: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    initial_accuracy: float = 0.0
    final_accuracy: float = 0.0
    params: ModelParams | None = field(default=None, repr=False, compare=False)

    def to_csv(self) -> str:
        rows = ["step,loss_main,loss_aux,loss_total"]
        for i, (m, a, t) in enumerate(zip(self.losses_main, self.losses_aux, self.losses_total)):
            rows.append(f"{i},{m!r},{a!r},{t!r}")
        rows.append(f"# steps={len(self.losses_total)} final_pixel_accuracy={self.final_accuracy:.6f}")
        return "\n".join(rows) + "\n"


def _worker_count() -> int:
    return max(1, int(os.environ.get("RECONET_THREADS", "1")))


def toy_train(config: ToyConfig, seed: int | None = None) -> TrainingReport:
    """Full-batch gradient descent with poly learning-rate decay.

    The rate is also halved whenever the loss rises from one step to the next.
    Per-image gradients are reduced in image order, so the run is bitwise
    deterministic for any RECONET_THREADS setting.
    """
    if seed is not None:
        config = ToyConfig(**{**asdict(config), "seed": seed})
    images, labels = make_dataset(config)
    params = init_model(
        config.channels, config.rank, config.num_classes, config.seed, c_out=config.c_out or None
    )
    arrays = params.arrays()
    report = TrainingReport(initial_accuracy=pixel_accuracy(params, images, labels))
    n = len(images)
    factor = 1.0
    workers = _worker_count()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    mapper = map if pool is None else pool.map
    try:
        for step in range(config.steps):
            results = list(mapper(lambda xl: loss_and_grad(params, *xl), zip(images, labels)))
            main = sum(r[0].main for r in results) / n
            aux = sum(r[0].aux for r in results) / n
            total = sum(r[0].total for r in results) / n
            if not math.isfinite(total):
                raise TrainingDiverged(f"non-finite loss {total} at step {step}")
            if report.losses_total and total > report.losses_total[-1]:
                factor *= 0.5
            lr = config.lr * (1.0 - step / config.steps) ** POLY_POWER * factor
            report.losses_main.append(main)
            report.losses_aux.append(aux)
            report.losses_total.append(total)
            report.learning_rates.append(lr)
            for name, arr in arrays.items():
                grad = results[0][1][name].copy()
                for r in results[1:]:
                    grad += r[1][name]
                arr -= (lr / n) * grad
    finally:
        if pool is not None:
            pool.shutdown()
    report.final_accuracy = pixel_accuracy(params, images, labels)
    report.params = params
    return report
