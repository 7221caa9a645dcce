"""Mutual-information regularizer over the three sentence representations.

Within a window, sentences labeled as correct answers form the answer set.
A small discriminator network reads ordered pairs of final GCN
representations and is pushed (through a binary cross-entropy sum) toward 1
on answer/answer pairs and 0 on answer/non-answer pairs, encouraging answer
sentences to share information and answer/non-answer pairs not to.

Unknown context labels count as non-answers; self-pairs are excluded from
the positive set. Pairs never cross window boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FFNParams, sigmoid


@dataclass(frozen=True)
class PairIndexSets:
    """Ordered index pairs over (candidate, prev, next) = (0, 1, 2)."""

    positive: tuple[tuple[int, int], ...]
    negative: tuple[tuple[int, int], ...]

    def __bool__(self) -> bool:
        return bool(self.positive or self.negative)


def build_pair_sets(labels: tuple[bool | None, bool | None, bool | None]) -> PairIndexSets:
    """Enumerate answer/answer and answer/non-answer ordered pairs.

    ``None`` (unknown) labels are treated as non-answers.
    """
    answers = [i for i, lab in enumerate(labels) if lab is True]
    others = [i for i, lab in enumerate(labels) if lab is not True]
    positive = tuple((i, j) for i in answers for j in answers if i != j)
    negative = tuple((i, j) for i in answers for j in others)
    return PairIndexSets(positive=positive, negative=negative)


def discriminator(h_i, h_j, disc: FFNParams) -> float:
    """Sigmoid FFN on the concatenation [h_i; h_j]; order matters."""
    h_i = np.asarray(h_i, dtype=np.float64)
    h_j = np.asarray(h_j, dtype=np.float64)
    if h_i.shape != h_j.shape or h_i.ndim != 1:
        raise ValueError(f"pair shapes differ: {h_i.shape} vs {h_j.shape}")
    x = np.concatenate([h_i, h_j])
    a1 = np.maximum(disc.w1 @ x + disc.b1, 0.0)
    z = float((disc.w2 @ a1 + disc.b2)[0])
    p = float(sigmoid(z))
    return min(max(p, 1e-300), 1.0 - 1e-16)


@dataclass
class MIForward:
    """Intermediates of one window's regularizer term, for backprop."""

    pairs: tuple[tuple[int, int], ...]  # positives then negatives
    n_positive: int
    x: np.ndarray  # (P, 2d) concatenated pair inputs
    z1: np.ndarray  # (P, hidden)
    a1: np.ndarray  # (P, hidden)
    z: np.ndarray  # (P,) discriminator logits
    loss: float


def mi_forward(h: np.ndarray, sets: PairIndexSets, disc: FFNParams) -> MIForward:
    """Compute the regularizer term and record intermediates.

    The loss is ``sum(-log U)`` over positive pairs plus ``sum(-log(1-U))``
    over negative pairs, evaluated stably from the discriminator logits.
    Empty index sets contribute zero.
    """
    pairs = sets.positive + sets.negative
    d = h.shape[1]
    if not pairs:
        empty = np.zeros((0, 0))
        return MIForward(pairs=(), n_positive=0, x=np.zeros((0, 2 * d)),
                         z1=empty, a1=empty, z=np.zeros(0), loss=0.0)
    x = np.stack([np.concatenate([h[i], h[j]]) for i, j in pairs])
    z1 = x @ disc.w1.T + disc.b1
    a1 = np.maximum(z1, 0.0)
    z = a1 @ disc.w2.T[:, 0] + disc.b2[0]
    n_pos = len(sets.positive)
    # -log sigmoid(z) for positives, -log(1 - sigmoid(z)) for negatives.
    loss = float(np.logaddexp(0.0, -z[:n_pos]).sum() + np.logaddexp(0.0, z[n_pos:]).sum())
    return MIForward(pairs=pairs, n_positive=n_pos, x=x, z1=z1, a1=a1, z=z, loss=loss)


def mi_loss(h, sets: PairIndexSets, disc: FFNParams) -> float:
    """Regularizer value for one window's final representations ``h`` (3 x d)."""
    return mi_forward(np.asarray(h, dtype=np.float64), sets, disc).loss


def mi_backward(
    fwd: MIForward, disc: FFNParams, scale: float, grads: dict[str, np.ndarray],
    dh: np.ndarray,
) -> None:
    """Accumulate ``scale * d(loss)`` into disc gradients and node grads ``dh``."""
    if not fwd.pairs:
        return
    n_pos = fwd.n_positive
    sig = sigmoid(fwd.z)
    dz = np.empty_like(fwd.z)
    dz[:n_pos] = sig[:n_pos] - 1.0  # d(-log sigmoid(z))/dz
    dz[n_pos:] = sig[n_pos:]  # d(-log(1 - sigmoid(z)))/dz
    dz *= scale

    grads["disc.w2"] += (dz @ fwd.a1)[None, :]
    grads["disc.b2"] += dz.sum(keepdims=True)
    da1 = dz[:, None] * disc.w2[0][None, :]
    dz1 = da1 * (fwd.z1 > 0)
    grads["disc.w1"] += dz1.T @ fwd.x
    grads["disc.b1"] += dz1.sum(axis=0)

    dx = dz1 @ disc.w1  # (P, 2d)
    d = dh.shape[1]
    for k, (i, j) in enumerate(fwd.pairs):
        dh[i] += dx[k, :d]
        dh[j] += dx[k, d:]
