"""Markov random field smoothing of probability maps by iterated
conditional modes.

The label field minimizes a Potts energy: per-pixel unary cost is the
negative log probability of the assigned class, and each 4-connected
pair of unequal labels pays beta.  Starting from the per-pixel argmax,
raster-order sweeps greedily relabel single pixels while any strict
improvement exists.  Every accepted move lowers the energy, so the
sweep count is finite even without the iteration cap.
"""

from dataclasses import dataclass

import numpy as np

from .tv_loss import validate_prob_map

_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class MrfConfig:
    beta: float = 1.0
    max_iters: int = 10

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValueError("beta must be finite and non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


def argmax_labels(probs: np.ndarray) -> np.ndarray:
    """Most probable class per pixel; ties pick the smallest class index."""
    probs = validate_prob_map(probs)
    return probs.argmax(axis=2).astype(np.uint8)


def potts_energy(labels: np.ndarray, unary: np.ndarray, beta: float) -> float:
    """Total energy of a label field: sum of assigned unary costs plus
    beta per 4-connected pair of unequal labels."""
    h, w = labels.shape
    rr, cc = np.mgrid[0:h, 0:w]
    e = unary[rr, cc, labels].sum()
    e += beta * (labels[1:, :] != labels[:-1, :]).sum()
    e += beta * (labels[:, 1:] != labels[:, :-1]).sum()
    return float(e)


def icm_smooth(probs: np.ndarray, cfg: MrfConfig) -> np.ndarray:
    """Smooth a probability map into a label image by ICM under a Potts
    prior.  Returns a (H, W) uint8 label array."""
    probs = validate_prob_map(probs)
    h, w, k = probs.shape
    unary = -np.log(np.maximum(probs, _PROB_FLOOR))
    labels = probs.argmax(axis=2).astype(np.int64)
    if cfg.beta == 0:
        return labels.astype(np.uint8)

    classes = np.arange(k)
    for _ in range(cfg.max_iters):
        changed = False
        for r in range(h):
            for c in range(w):
                cost = unary[r, c].copy()
                if r > 0:
                    cost += cfg.beta * (classes != labels[r - 1, c])
                if r < h - 1:
                    cost += cfg.beta * (classes != labels[r + 1, c])
                if c > 0:
                    cost += cfg.beta * (classes != labels[r, c - 1])
                if c < w - 1:
                    cost += cfg.beta * (classes != labels[r, c + 1])
                best = int(cost.argmin())
                # relabel only on strict improvement so ties cannot oscillate
                if cost[best] < cost[labels[r, c]]:
                    labels[r, c] = best
                    changed = True
        if not changed:
            break
    return labels.astype(np.uint8)
