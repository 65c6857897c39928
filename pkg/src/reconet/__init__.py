"""Tensor low-rank context reconstruction: fragments, CP attention, costs, gradients."""

from reconet.tensor import Shape3, outer3, hadamard, scaled_accumulate, sigmoid_map
from reconet.tgm import TgmParams, FragmentSet, FragmentTriplet, init_tgm, generate_fragments
from reconet.trm import sub_attention, reconstruct, apply_context, tgm_trm_forward

__all__ = [
    "Shape3",
    "outer3",
    "hadamard",
    "scaled_accumulate",
    "sigmoid_map",
    "TgmParams",
    "FragmentSet",
    "FragmentTriplet",
    "init_tgm",
    "generate_fragments",
    "sub_attention",
    "reconstruct",
    "apply_context",
    "tgm_trm_forward",
]

__version__ = "0.1.0"
