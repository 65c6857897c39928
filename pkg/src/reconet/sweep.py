"""Capacity sweep: least-squares fits of a rank-r reconstruction to a fixed target tensor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from reconet.tensor import Shape3, outer3
from reconet.tgm import FragmentSet, FragmentTriplet
from reconet.trm import reconstruct


@dataclass
class Factors:
    vc: np.ndarray  # (r, C)
    vh: np.ndarray  # (r, H)
    vw: np.ndarray  # (r, W)

    @property
    def rank(self) -> int:
        return self.vc.shape[0]

    def pack(self) -> np.ndarray:
        return np.concatenate([self.vc.ravel(), self.vh.ravel(), self.vw.ravel()])

    @classmethod
    def unpack(cls, theta: np.ndarray, r: int, shape: Shape3) -> "Factors":
        C, H, W = shape
        vc, vh, vw = np.split(theta, [r * C, r * (C + H)])
        return cls(vc.reshape(r, C), vh.reshape(r, H), vw.reshape(r, W))

    def fragments(self) -> FragmentSet:
        triplets = [FragmentTriplet(c, h, w) for c, h, w in zip(self.vc, self.vh, self.vw)]
        return FragmentSet(triplets, np.ones(self.rank))

    def extended(self, extra: int, rng: np.random.Generator) -> "Factors":
        """Append ``extra`` terms whose channel factor is zero, leaving the tensor unchanged."""
        C, H, W = self.vc.shape[1], self.vh.shape[1], self.vw.shape[1]
        return Factors(
            np.vstack([self.vc, np.zeros((extra, C))]),
            np.vstack([self.vh, rng.normal(size=(extra, H))]),
            np.vstack([self.vw, rng.normal(size=(extra, W))]),
        )


def mse_and_grad(theta: np.ndarray, r: int, target: np.ndarray):
    shape = Shape3.of(target)
    f = Factors.unpack(theta, r, shape)
    resid = np.einsum("rc,rh,rw->chw", f.vc, f.vh, f.vw) - target
    scale = 2.0 / target.size
    g_vc = scale * np.einsum("chw,rh,rw->rc", resid, f.vh, f.vw)
    g_vh = scale * np.einsum("chw,rc,rw->rh", resid, f.vc, f.vw)
    g_vw = scale * np.einsum("chw,rc,rh->rw", resid, f.vc, f.vh)
    return float(np.mean(resid**2)), np.concatenate([g_vc.ravel(), g_vh.ravel(), g_vw.ravel()])


def reconstruction_mse(factors: Factors, target: np.ndarray) -> float:
    a = reconstruct(factors.fragments(), Shape3.of(target))
    return float(np.mean((a - target) ** 2))


def fit(target: np.ndarray, start: Factors, max_iter: int = 5000) -> tuple[Factors, float]:
    """L-BFGS on the mean squared error; never returns a worse point than ``start``."""
    shape = Shape3.of(target)
    r = start.rank
    theta0 = start.pack()
    res = minimize(
        mse_and_grad,
        theta0,
        args=(r, target),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "maxfun": 4 * max_iter, "ftol": 0.0, "gtol": 1e-14},
    )
    best = Factors.unpack(res.x, r, shape)
    best_mse, start_mse = reconstruction_mse(best, target), reconstruction_mse(start, target)
    if start_mse <= best_mse:
        return start, start_mse
    return best, best_mse


@dataclass
class SweepRow:
    rank: int
    mse: float


def _random_factors(r: int, shape: Shape3, rng: np.random.Generator) -> Factors:
    return Factors(rng.normal(size=(r, shape.C)), rng.normal(size=(r, shape.H)), rng.normal(size=(r, shape.W)))


def rank_sweep(
    target: np.ndarray, ranks=(1, 2, 4, 8, 16), seed: int = 0, max_iter: int = 5000
) -> list[SweepRow]:
    """Fit each rank in increasing order.

    Each rank is fitted twice, once warm-started from the previous solution
    padded with zero terms and once from a fresh random point; the better fit
    is kept. The warm start alone guarantees a non-increasing error sequence.
    """
    ranks = sorted(ranks)
    if not ranks or ranks[0] < 1:
        raise ValueError("ranks must be positive")
    shape = Shape3.of(target)
    rng = np.random.Generator(np.random.PCG64([seed, 3]))
    factors = None
    rows = []
    for r in ranks:
        cold, cold_mse = fit(target, _random_factors(r, shape, rng), max_iter)
        if factors is not None:
            warm, warm_mse = fit(target, factors.extended(r - factors.rank, rng), max_iter)
            if warm_mse <= cold_mse:
                cold, cold_mse = warm, warm_mse
        factors = cold
        rows.append(SweepRow(r, cold_mse))
    return rows


def random_target(shape, seed: int) -> np.ndarray:
    return np.random.Generator(np.random.PCG64([seed, 5])).normal(size=tuple(shape))


def rank1_target(shape, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64([seed, 5]))
    C, H, W = shape
    return outer3(rng.normal(size=C), rng.normal(size=H), rng.normal(size=W))
