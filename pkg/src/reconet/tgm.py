"""Tensor generation: r independent channel/height/width context fragments per input."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from reconet.tensor import (
    Shape3,
    ShapeError,
    add_bias,
    contract,
    pool_over_height,
    pool_over_width,
    pool_spatial,
    sigmoid_map,
)


@dataclass
class TgmRepetitionParams:
    channel_weight: np.ndarray  # (C, C)
    channel_bias: np.ndarray  # (C,)
    height_weight: np.ndarray  # (C,) collapses channels of the width-pooled C x H map
    height_bias: np.ndarray  # scalar
    width_weight: np.ndarray  # (C,)
    width_bias: np.ndarray  # scalar


@dataclass
class TgmParams:
    """Generator weights for all r repetitions, stacked along a leading rank axis."""

    channel_weight: np.ndarray  # (r, C, C)
    channel_bias: np.ndarray  # (r, C)
    height_weight: np.ndarray  # (r, C)
    height_bias: np.ndarray  # (r,)
    width_weight: np.ndarray  # (r, C)
    width_bias: np.ndarray  # (r,)
    lambda_raw: np.ndarray  # (r,)

    FIELDS = (
        "channel_weight",
        "channel_bias",
        "height_weight",
        "height_bias",
        "width_weight",
        "width_bias",
        "lambda_raw",
    )

    def __post_init__(self):
        r, C = self.channel_bias.shape
        expected = {
            "channel_weight": (r, C, C),
            "channel_bias": (r, C),
            "height_weight": (r, C),
            "height_bias": (r,),
            "width_weight": (r, C),
            "width_bias": (r,),
            "lambda_raw": (r,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def rank(self) -> int:
        return self.channel_bias.shape[0]

    @property
    def channels(self) -> int:
        return self.channel_bias.shape[1]

    def rep(self, i: int) -> TgmRepetitionParams:
        return TgmRepetitionParams(
            self.channel_weight[i],
            self.channel_bias[i],
            self.height_weight[i],
            self.height_bias[i],
            self.width_weight[i],
            self.width_bias[i],
        )

    def arrays(self) -> dict[str, np.ndarray]:
        """Live references to every parameter array, keyed by field name."""
        return {name: getattr(self, name) for name in self.FIELDS}

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays().values())

    def permuted(self, order) -> "TgmParams":
        order = np.asarray(order)
        return TgmParams(**{k: v[order].copy() for k, v in self.arrays().items()})

    @classmethod
    def zeros(cls, C: int, r: int) -> "TgmParams":
        return cls(
            channel_weight=np.zeros((r, C, C)),
            channel_bias=np.zeros((r, C)),
            height_weight=np.zeros((r, C)),
            height_bias=np.zeros(r),
            width_weight=np.zeros((r, C)),
            width_bias=np.zeros(r),
            lambda_raw=np.zeros(r),
        )


@dataclass
class FragmentTriplet:
    vc: np.ndarray
    vh: np.ndarray
    vw: np.ndarray


@dataclass
class FragmentSet:
    triplets: list[FragmentTriplet]
    lambdas: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.triplets)


def init_tgm(C: int, r: int, seed: int) -> TgmParams:
    """Uniform(-1/sqrt(C), 1/sqrt(C)) weights from a PCG64 stream; zero biases; lambda_raw = 0."""
    if C < 1 or r < 1:
        raise ValueError(f"need C >= 1 and r >= 1, got C={C}, r={r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    bound = 1.0 / np.sqrt(C)
    p = TgmParams.zeros(C, r)
    p.channel_weight[...] = rng.uniform(-bound, bound, size=(r, C, C))
    p.height_weight[...] = rng.uniform(-bound, bound, size=(r, C))
    p.width_weight[...] = rng.uniform(-bound, bound, size=(r, C))
    return p


def _check_channels(x: np.ndarray, p: TgmRepetitionParams) -> None:
    C = Shape3.of(x).C
    if p.channel_bias.shape != (C,):
        raise ShapeError(f"parameters built for C={p.channel_bias.shape[0]}, input has C={C}")


def channel_fragment(x: np.ndarray, p: TgmRepetitionParams) -> np.ndarray:
    _check_channels(x, p)
    return sigmoid_map(add_bias(contract(p.channel_weight, pool_spatial(x)), p.channel_bias))


def height_fragment(x: np.ndarray, p: TgmRepetitionParams) -> np.ndarray:
    _check_channels(x, p)
    return sigmoid_map(add_bias(contract(p.height_weight, pool_over_width(x)), p.height_bias))


def width_fragment(x: np.ndarray, p: TgmRepetitionParams) -> np.ndarray:
    _check_channels(x, p)
    return sigmoid_map(add_bias(contract(p.width_weight, pool_over_height(x)), p.width_bias))


def generate_fragments(x: np.ndarray, params: TgmParams) -> FragmentSet:
    C, H, W = Shape3.of(x)
    if params.channels != C:
        raise ShapeError(f"parameters built for C={params.channels}, input has C={C}")
    if params.rank > min(C, H, W):
        warnings.warn(
            f"rank {params.rank} exceeds min(C, H, W) = {min(C, H, W)}",
            RuntimeWarning,
            stacklevel=2,
        )
    triplets = []
    for i in range(params.rank):
        rep = params.rep(i)
        triplets.append(
            FragmentTriplet(channel_fragment(x, rep), height_fragment(x, rep), width_fragment(x, rep))
        )
    return FragmentSet(triplets, sigmoid_map(params.lambda_raw))
