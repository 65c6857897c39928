"""The full toy network: TGM+TRM context, GPM, concatenation head and auxiliary classifier.

Two evaluations of the same loss live here. :func:`model_loss` is plain numpy
and doubles as the finite-difference target; :func:`taped_loss` records the
identical computation on an autodiff tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from reconet.autodiff import Tape, Var, backward, record_forward
from reconet.head import (
    AUX_WEIGHT,
    GpmParams,
    HeadParams,
    LossBreakdown,
    gpm_forward,
    head_forward,
    softmax_cross_entropy,
    total_loss,
)
from reconet.tensor import add_bias, contract
from reconet.tgm import TgmParams, init_tgm
from reconet.trm import tgm_trm_forward


@dataclass
class ModelParams:
    tgm: TgmParams
    gpm: GpmParams
    head: HeadParams
    aux: HeadParams  # linear classifier on x alone

    def arrays(self) -> dict[str, np.ndarray]:
        """Every trainable array under a dotted name; values are live references."""
        out = {f"tgm.{k}": v for k, v in self.tgm.arrays().items()}
        out.update({"gpm.weight": self.gpm.weight, "gpm.bias": self.gpm.bias})
        out.update({"head.weight": self.head.weight, "head.bias": self.head.bias})
        out.update({"aux.weight": self.aux.weight, "aux.bias": self.aux.bias})
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ModelParams":
        tgm = TgmParams(**{k[4:]: v for k, v in arrays.items() if k.startswith("tgm.")})
        return cls(
            tgm=tgm,
            gpm=GpmParams(arrays["gpm.weight"], arrays["gpm.bias"]),
            head=HeadParams(arrays["head.weight"], arrays["head.bias"]),
            aux=HeadParams(arrays["aux.weight"], arrays["aux.bias"]),
        )

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays({k: v.copy() for k, v in self.arrays().items()})


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_model(C: int, r: int, K: int, seed: int, c_out: int | None = None) -> ModelParams:
    if K < 2:
        raise ValueError(f"need at least two classes, got K={K}")
    c_out = C if c_out is None else c_out
    tgm = init_tgm(C, r, seed)
    # separate stream so the generator weights match init_tgm(C, r, seed) exactly
    rng = np.random.Generator(np.random.PCG64([seed, 1]))
    features = 2 * C + c_out
    return ModelParams(
        tgm=tgm,
        gpm=GpmParams(_uniform(rng, C, (c_out, C)), np.zeros(c_out)),
        head=HeadParams(_uniform(rng, features, (K, features)), np.zeros(K)),
        aux=HeadParams(_uniform(rng, C, (K, C)), np.zeros(K)),
    )


def model_logits(x: np.ndarray, params: ModelParams):
    y, a, frags = tgm_trm_forward(x, params.tgm)
    g = gpm_forward(x, params.gpm)
    logits = head_forward(x, y, g, params.head)
    aux_logits = add_bias(contract(params.aux.weight, x), params.aux.bias)
    return logits, aux_logits


def model_loss(params: ModelParams, x: np.ndarray, labels: np.ndarray) -> LossBreakdown:
    logits, aux_logits = model_logits(x, params)
    return total_loss(softmax_cross_entropy(logits, labels), softmax_cross_entropy(aux_logits, labels))


def taped_logits(tape: Tape, leaves: dict[str, Var], x: np.ndarray) -> tuple[Var, Var, Var]:
    """Record the forward pass; returns (main logits, aux logits, attention map)."""
    xv = tape.const(x)
    pooled = tape.pool_spatial(xv)
    by_row = tape.pool_over_width(xv)
    by_col = tape.pool_over_height(xv)
    # all r repetitions at once: stacked weights contract to (r, C), (r, H) and (r, W)
    vc = tape.sigmoid(
        tape.add_bias(tape.contract(leaves["tgm.channel_weight"], pooled), leaves["tgm.channel_bias"])
    )
    vh = tape.sigmoid(
        tape.add_bias(tape.contract(leaves["tgm.height_weight"], by_row), leaves["tgm.height_bias"])
    )
    vw = tape.sigmoid(
        tape.add_bias(tape.contract(leaves["tgm.width_weight"], by_col), leaves["tgm.width_bias"])
    )
    a = tape.cp_reconstruct(tape.sigmoid(leaves["tgm.lambda_raw"]), vc, vh, vw)
    y = tape.hadamard(a, xv)
    g = tape.add_bias(tape.contract(leaves["gpm.weight"], pooled), leaves["gpm.bias"])
    logits = tape.add_bias(tape.contract(leaves["head.weight"], tape.concat(xv, y, g)), leaves["head.bias"])
    aux_logits = tape.add_bias(tape.contract(leaves["aux.weight"], xv), leaves["aux.bias"])
    return logits, aux_logits, a


def taped_loss(tape: Tape, leaves: dict[str, Var], x: np.ndarray, labels: np.ndarray) -> tuple[Var, Var, Var]:
    """Returns (total, main, aux) loss nodes."""
    logits, aux_logits, _ = taped_logits(tape, leaves, x)
    main = tape.softmax_ce(logits, labels)
    aux = tape.softmax_ce(aux_logits, labels)
    return tape.add(main, tape.scale(aux, AUX_WEIGHT)), main, aux


def loss_and_grad(params: ModelParams, x: np.ndarray, labels: np.ndarray):
    """Loss breakdown and reverse-mode gradients for one image."""
    parts = {}

    def computation(tape, leaves):
        total, main, aux = taped_loss(tape, leaves, x, labels)
        parts["main"], parts["aux"] = main, aux
        return total

    total, tape = record_forward(computation, params.arrays())
    grads = backward(tape)
    loss = LossBreakdown(float(parts["main"].value), float(parts["aux"].value), float(total))
    return loss, grads


def random_instance(C: int, H: int, W: int, r: int, K: int, seed: int):
    """A generic gradient-check point: N(0, 0.5^2) parameters, U(0, 1) features, uniform labels."""
    rng = np.random.default_rng(seed)
    params = init_model(C, r, K, seed)
    for arr in params.arrays().values():
        arr[...] = rng.normal(0.0, 0.5, arr.shape)
    x = rng.uniform(0.0, 1.0, (C, H, W))
    labels = rng.integers(0, K, (H, W))
    return params, x, labels


def check_gradients(C=6, H=5, W=4, r=3, K=3, seed=0, tolerance=1e-6, eps=1e-5):
    """Finite-difference check of the full loss at :func:`random_instance`."""
    from reconet.autodiff import gradcheck

    params, x, labels = random_instance(C, H, W, r, K, seed)
    return gradcheck(
        lambda arrays: model_loss(ModelParams.from_arrays(arrays), x, labels).total,
        params.arrays(),
        tolerance,
        grad_fn=lambda arrays: loss_and_grad(ModelParams.from_arrays(arrays), x, labels)[1],
        eps=eps,
    )
