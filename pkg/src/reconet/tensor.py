"""Dense C x H x W tensors and the exact primitives built on them.

Tensors are plain C-contiguous ``float64`` arrays of shape ``(C, H, W)``, so the
flat layout is ``(c*H + h)*W + w``. Vectors are 1-D arrays. Reductions are
written as strictly sequential sums so that results match naive loops bit for
bit; means are taken relative to the first pooled element.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

_ONE_MINUS_ULP = np.nextafter(1.0, 0.0)
_TINY = np.finfo(np.float64).tiny


class ShapeError(ValueError):
    """Raised when operand shapes are inconsistent."""


class Shape3(NamedTuple):
    C: int
    H: int
    W: int

    @classmethod
    def of(cls, t: np.ndarray) -> "Shape3":
        if t.ndim != 3:
            raise ShapeError(f"expected a 3-D tensor, got shape {t.shape}")
        return cls(*t.shape)

    def validate(self) -> "Shape3":
        if min(self) < 1:
            raise ShapeError(f"all dimensions must be >= 1, got {tuple(self)}")
        return self

    @property
    def size(self) -> int:
        return self.C * self.H * self.W


def as_tensor(values, shape: Shape3 | tuple[int, int, int] | None = None) -> np.ndarray:
    """Coerce ``values`` to a contiguous float64 tensor, reshaping flat input if a shape is given."""
    t = np.ascontiguousarray(values, dtype=np.float64)
    if shape is not None:
        shape = Shape3(*shape).validate()
        if t.size != shape.size:
            raise ShapeError(f"{t.size} values cannot fill shape {tuple(shape)}")
        t = t.reshape(shape)
    if t.ndim != 3:
        raise ShapeError(f"expected a 3-D tensor, got shape {t.shape}")
    return t


def _check_same(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def outer3(vc: np.ndarray, vh: np.ndarray, vw: np.ndarray) -> np.ndarray:
    """Rank-1 tensor ``T[c,h,w] = vc[c] * (vh[h] * vw[w])``.

    The spatial product is formed first, so a separable spatial map built with
    ``np.multiply.outer(vh, vw)`` reproduces this tensor bit for bit.
    """
    vc, vh, vw = (np.asarray(v, dtype=np.float64) for v in (vc, vh, vw))
    for v in (vc, vh, vw):
        if v.ndim != 1 or v.size == 0:
            raise ShapeError("outer3 expects three non-empty 1-D vectors")
    spatial = vh[:, None] * vw[None, :]
    return vc[:, None, None] * spatial[None, :, :]


def hadamard(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    _check_same(a, x)
    return a * x


def scaled_accumulate(acc: np.ndarray, lam: float, t: np.ndarray) -> np.ndarray:
    """Return ``acc + lam * t`` as a new array; ``acc`` is left untouched."""
    _check_same(acc, t)
    if not np.isfinite(lam):
        raise ValueError(f"lambda must be finite, got {lam}")
    out = np.multiply(t, lam)
    out += acc
    return out


def _sequential_mean(x: np.ndarray, axis: int) -> np.ndarray:
    # offset by the first element so constant input pools back to itself exactly;
    # add.accumulate is strictly left-to-right, unlike the pairwise np.sum
    ref = x.take(0, axis=axis)
    dev = x - np.expand_dims(ref, axis)
    return ref + np.add.accumulate(dev, axis=axis).take(-1, axis=axis) / x.shape[axis]


def pool_spatial(x: np.ndarray) -> np.ndarray:
    """Mean over (h, w) per channel; length-C vector."""
    C, H, W = Shape3.of(x)
    return _sequential_mean(x.reshape(C, H * W), axis=1)


def pool_over_width(x: np.ndarray) -> np.ndarray:
    """Mean over the width axis; C x H matrix."""
    Shape3.of(x)
    return _sequential_mean(x, axis=2)


def pool_over_height(x: np.ndarray) -> np.ndarray:
    """Mean over the height axis; C x W matrix."""
    Shape3.of(x)
    return _sequential_mean(x, axis=1)


def sigmoid_map(v):
    """Logistic function, clamped so every output lies strictly inside (0, 1)."""
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(-np.abs(v))
    out = np.where(v >= 0, 1.0, e) / (1.0 + e)
    return np.clip(out, _TINY, _ONE_MINUS_ULP)


def contract(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Contract the last axis of ``w`` with the first axis of ``v``.

    Covers matrix-vector products, weight-vector collapse of a pooled matrix,
    and 1x1 convolutions applied to a whole tensor.
    """
    w = np.asarray(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n = w.shape[-1]
    if n != v.shape[0]:
        raise ShapeError(f"cannot contract {w.shape} with {v.shape}")
    out = w.reshape(-1, n) @ v.reshape(n, -1)
    return out.reshape(w.shape[:-1] + v.shape[1:])


def add_bias(t: np.ndarray, b) -> np.ndarray:
    """Add ``b`` along the leading axes of ``t`` (bias per channel, or a scalar)."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != t.shape[: b.ndim]:
        raise ShapeError(f"bias of shape {b.shape} does not lead {t.shape}")
    return t + b.reshape(b.shape + (1,) * (t.ndim - b.ndim))


def matricize(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-n unfolding (modes 1, 2, 3); columns follow the remaining axes, slower axis first."""
    C, H, W = Shape3.of(t)
    if mode == 1:
        return t.reshape(C, H * W)
    if mode == 2:
        return t.transpose(1, 0, 2).reshape(H, C * W)
    if mode == 3:
        return t.transpose(2, 0, 1).reshape(W, C * H)
    raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")


def max_minor(m: np.ndarray) -> float:
    """Largest absolute 2x2 minor of a matrix."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape[0] < 2 or m.shape[1] < 2:
        return 0.0
    minors = np.einsum("ij,kl->ijkl", m, m) - np.einsum("il,kj->ijkl", m, m)
    return float(np.abs(minors).max())


def rank1_deviation(t: np.ndarray) -> float:
    """Largest 2x2 minor over all three unfoldings, relative to the squared largest entry.

    Zero (up to rounding) exactly when ``t`` is a rank-1 tensor.
    """
    scale = float(np.abs(t).max()) ** 2
    if scale == 0.0:
        return 0.0
    return max(max_minor(matricize(t, mode)) for mode in (1, 2, 3)) / scale
