from __future__ import annotations

from typing import Sequence, Tuple, Union

import numpy as np

from app.ctc.posteriors import PosteriorMatrix
from app.errors import ConfigurationError, InfeasibleAlignmentError

BLANK = 0
NEG_INF = -np.inf

Posteriors = Union[PosteriorMatrix, np.ndarray]


def as_array(post: Posteriors) -> np.ndarray:
    return post.values if isinstance(post, PosteriorMatrix) else np.asarray(post, dtype=np.float64)


def required_frames(ref: Sequence[int]) -> int:
    """Shortest alignment length: one frame per label plus a blank between repeats."""
    return len(ref) + sum(1 for a, b in zip(ref, ref[1:]) if a == b)


def _extended(ref: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Blank-interleaved labels and the mask of states that may skip back two."""
    ext = np.zeros(2 * len(ref) + 1, dtype=np.int64)
    ext[1::2] = ref
    skip = np.zeros(len(ext), dtype=bool)
    skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    return ext, skip


def _check(lp: np.ndarray, ref: Sequence[int]) -> None:
    need = required_frames(ref)
    if lp.shape[0] < need:
        raise InfeasibleAlignmentError(lp.shape[0], need)
    if any(not 1 <= k < lp.shape[1] for k in ref):
        raise ConfigurationError(f"reference labels must lie in 1..{lp.shape[1] - 1}")


def _forward(lp: np.ndarray, ext: np.ndarray, skip: np.ndarray) -> np.ndarray:
    T, S = lp.shape[0], len(ext)
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = lp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = lp[0, ext[1]]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        two = np.full(S, NEG_INF)
        two[2:] = np.where(skip[2:], prev[:-2], NEG_INF)
        alpha[t] = np.logaddexp(acc, two) + lp[t, ext]
    return alpha


def _backward(lp: np.ndarray, ext: np.ndarray, skip: np.ndarray) -> np.ndarray:
    """beta[t, s]: log-probability of frames t+1.. given state s at frame t."""
    T, S = lp.shape[0], len(ext)
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + lp[t + 1, ext]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        two = np.full(S, NEG_INF)
        two[:-2] = np.where(skip[2:], nxt[2:], NEG_INF)
        beta[t] = np.logaddexp(acc, two)
    return beta


def _log_likelihood(alpha: np.ndarray) -> float:
    last = alpha[-1]
    return float(np.logaddexp(last[-1], last[-2]) if len(last) > 1 else last[-1])


def ctc_loss(post: Posteriors, ref: Sequence[int]) -> float:
    """-log p(ref | posteriors), summed over every alignment that collapses to ref."""
    lp = as_array(post)
    ref = tuple(ref)
    _check(lp, ref)
    if lp.shape[0] == 0:
        return 0.0
    ext, skip = _extended(ref)
    return -_log_likelihood(_forward(lp, ext, skip))


def ctc_loss_and_grad(post: Posteriors, ref: Sequence[int]) -> Tuple[float, np.ndarray]:
    """Loss plus d(loss)/d(log-posterior): minus the per-frame label occupancy."""
    lp = as_array(post)
    ref = tuple(ref)
    _check(lp, ref)
    grad = np.zeros_like(lp)
    if lp.shape[0] == 0:
        return 0.0, grad
    ext, skip = _extended(ref)
    alpha = _forward(lp, ext, skip)
    beta = _backward(lp, ext, skip)
    log_z = _log_likelihood(alpha)
    occupancy = np.exp(alpha + beta - log_z)
    for s, k in enumerate(ext.tolist()):
        grad[:, k] -= occupancy[:, s]
    return -log_z, grad


def ctc_grad(post: Posteriors, ref: Sequence[int]) -> np.ndarray:
    return ctc_loss_and_grad(post, ref)[1]


def hybrid_loss(ctc: float, attention: float, lam: float = 0.3) -> float:
    """Multi-task objective lam * ctc + (1 - lam) * attention."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigurationError(f"hybrid loss weight must lie in [0, 1], got {lam}")
    return lam * ctc + (1.0 - lam) * attention
