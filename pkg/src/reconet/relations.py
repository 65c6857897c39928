"""SENet and CBAM attention maps as degenerate low-rank reconstructions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from reconet.tensor import Shape3, ShapeError, hadamard, outer3
from reconet.tgm import TgmParams, channel_fragment
from reconet.trm import ForwardOverrides, tgm_trm_forward


def ones_vector(length: int) -> np.ndarray:
    return np.ones(length)


def senet_attention(vc: np.ndarray, H: int, W: int) -> np.ndarray:
    """Channel-only attention: ``vc ⊗ e_H ⊗ e_W``, constant over every spatial slice."""
    return outer3(vc, ones_vector(H), ones_vector(W))


def cbam_attention(vc: np.ndarray, m_hw: np.ndarray) -> np.ndarray:
    """Channel vector times a full spatial map: ``A[c,h,w] = vc[c] * m_hw[h,w]``."""
    vc = np.asarray(vc, dtype=np.float64)
    m_hw = np.asarray(m_hw, dtype=np.float64)
    if vc.ndim != 1 or m_hw.ndim != 2:
        raise ShapeError(f"expected a vector and a matrix, got {vc.shape} and {m_hw.shape}")
    return vc[:, None, None] * m_hw[None, :, :]


def spatial_spread(a: np.ndarray) -> float:
    """Largest max-minus-min over the spatial slices ``a[c, :, :]``."""
    flat = a.reshape(a.shape[0], -1)
    return float((flat.max(axis=1) - flat.min(axis=1)).max())


@dataclass
class Check:
    name: str
    passed: bool
    deviation: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} max_deviation={self.deviation:.3e}"


def verify_senet_degeneration(params: TgmParams, x: np.ndarray) -> list[Check]:
    """Rank-1 forward with ones for the height/width fragments and lambda forced to 1.

    Both the attention map and the context feature must match the channel-only
    construction exactly, and every spatial slice of the map must be constant.
    """
    if params.rank != 1:
        raise ValueError(f"SENet degeneration needs rank 1, got rank {params.rank}")
    _, H, W = Shape3.of(x)
    overrides = ForwardOverrides(height=ones_vector(H), width=ones_vector(W), lambdas=np.ones(1))
    y, a, _ = tgm_trm_forward(x, params, overrides)
    a_se = senet_attention(channel_fragment(x, params.rep(0)), H, W)
    y_se = hadamard(a_se, x)
    return [
        Check("senet_attention_map", bool(np.array_equal(a, a_se)), float(np.abs(a - a_se).max())),
        Check("senet_context_feature", bool(np.array_equal(y, y_se)), float(np.abs(y - y_se).max())),
        Check("senet_spatial_constancy", spatial_spread(a) == 0.0, spatial_spread(a)),
    ]
