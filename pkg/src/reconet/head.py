"""Global pooling branch, concatenation classifier, and the segmentation losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from reconet.tensor import Shape3, ShapeError, add_bias, contract, pool_spatial

AUX_WEIGHT = 0.2


@dataclass
class GpmParams:
    weight: np.ndarray  # (C_out, C)
    bias: np.ndarray  # (C_out,)


@dataclass
class HeadParams:
    weight: np.ndarray  # (K, C + C + C_out)
    bias: np.ndarray  # (K,)

    @property
    def num_classes(self) -> int:
        return self.bias.shape[0]


@dataclass(frozen=True)
class LossBreakdown:
    main: float
    aux: float
    total: float
    alpha: float = AUX_WEIGHT


def gpm_forward(x: np.ndarray, p: GpmParams) -> np.ndarray:
    if p.weight.shape[1] != Shape3.of(x).C:
        raise ShapeError(f"GPM weight {p.weight.shape} does not match C={x.shape[0]}")
    return add_bias(contract(p.weight, pool_spatial(x)), p.bias)


def concat_features(x: np.ndarray, y: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Stack x, y and the pixel-broadcast global vector g along the channel axis."""
    if x.shape != y.shape:
        raise ShapeError(f"x {x.shape} and y {y.shape} differ")
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 1:
        raise ShapeError(f"global context must be a vector, got shape {g.shape}")
    _, H, W = x.shape
    return np.concatenate([x, y, np.broadcast_to(g[:, None, None], (g.size, H, W))], axis=0)


def head_forward(x: np.ndarray, y: np.ndarray, g: np.ndarray, p: HeadParams) -> np.ndarray:
    """Per-pixel linear classifier over concat(x, y, g); returns K x H x W logits."""
    features = concat_features(x, y, g)
    if p.weight.shape[1] != features.shape[0]:
        raise ShapeError(f"classifier expects {p.weight.shape[1]} features, got {features.shape[0]}")
    return add_bias(contract(p.weight, features), p.bias)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=0, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))


def check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integers")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]")
    return labels


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean over pixels of -log softmax(logits)[label], with max-subtraction."""
    K, H, W = Shape3.of(logits)
    labels = check_labels(labels, K)
    if labels.shape != (H, W):
        raise ShapeError(f"labels {labels.shape} do not match logits {(H, W)}")
    logp = log_softmax(logits)
    picked = np.take_along_axis(logp, labels[None], axis=0)
    return float(-picked.mean())


def total_loss(main: float, aux: float) -> LossBreakdown:
    if main < 0 or aux < 0:
        raise ValueError(f"losses must be nonnegative, got main={main}, aux={aux}")
    return LossBreakdown(main=main, aux=aux, total=main + AUX_WEIGHT * aux)
