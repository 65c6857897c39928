"""Tensor reconstruction: rank-1 sub-attention maps, their weighted sum, and context application."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from reconet.tensor import Shape3, ShapeError, hadamard, outer3, scaled_accumulate
from reconet.tgm import FragmentSet, FragmentTriplet, TgmParams, generate_fragments


@dataclass(frozen=True)
class SubAttentionMap:
    tensor: np.ndarray
    source_index: int


@dataclass(frozen=True)
class ForwardOverrides:
    """Injection points for the forward pass. Any field left as None is computed normally."""

    height: np.ndarray | None = None
    width: np.ndarray | None = None
    lambdas: np.ndarray | None = None


def sub_attention(t: FragmentTriplet, i: int, shape: Shape3 | None = None) -> SubAttentionMap:
    if shape is not None and (t.vc.size, t.vh.size, t.vw.size) != tuple(shape):
        raise ShapeError(
            f"triplet lengths {(t.vc.size, t.vh.size, t.vw.size)} do not match shape {tuple(shape)}"
        )
    return SubAttentionMap(outer3(t.vc, t.vh, t.vw), i)


def reconstruct(frags: FragmentSet, shape: Shape3) -> np.ndarray:
    """Sum of lambda_i-weighted sub-attention maps, accumulated in ascending i."""
    shape = Shape3(*shape).validate()
    if len(frags.lambdas) != frags.rank:
        raise ShapeError(f"{frags.rank} triplets but {len(frags.lambdas)} lambdas")
    a = np.zeros(shape)
    for i, triplet in enumerate(frags.triplets, start=1):
        a = scaled_accumulate(a, float(frags.lambdas[i - 1]), sub_attention(triplet, i, shape).tensor)
    return a


def apply_context(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    return hadamard(a, x)


def _override(frags: FragmentSet, overrides: ForwardOverrides) -> FragmentSet:
    triplets = [
        FragmentTriplet(
            t.vc,
            t.vh if overrides.height is None else np.asarray(overrides.height, dtype=np.float64),
            t.vw if overrides.width is None else np.asarray(overrides.width, dtype=np.float64),
        )
        for t in frags.triplets
    ]
    lambdas = frags.lambdas if overrides.lambdas is None else np.asarray(overrides.lambdas, dtype=np.float64)
    return FragmentSet(triplets, lambdas)


def tgm_trm_forward(
    x: np.ndarray, params: TgmParams, overrides: ForwardOverrides | None = None
) -> tuple[np.ndarray, np.ndarray, FragmentSet]:
    """Run generation, reconstruction and context application on ``x``.

    Returns ``(y, a, frags)``: the context feature, the attention map and the
    fragments that built it.
    """
    frags = generate_fragments(x, params)
    if overrides is not None:
        frags = _override(frags, overrides)
    a = reconstruct(frags, Shape3.of(x))
    return apply_context(a, x), a, frags
