"""Modified training losses for call and ignore masks.

The combined loss over a batch of N valid positions is

    -(1/N) * sum_i [ (1-C_i)(1-I_i) * log p_excl(y_i)  +  C_i * log p(<CALL>) ]

where ``p_excl`` is the predictive distribution with the call token's
probability forced to zero and the rest renormalized. Positions with
I=1, C=0 contribute zero loss and exactly zero gradient; N counts all
valid positions including ignored ones. The ignore-only loss uses its own
normalizer (the count of non-ignored positions) and the plain
distribution; the two conventions are implemented verbatim, not
harmonized, and the difference is covered by tests.
"""
from __future__ import annotations

import numpy as np

from .errors import NumericError
from .kernels import masked_loss_grad, token_nll
from .masks import DelegationMask


def renormalize_excluding_call(dist: np.ndarray, call_id: int, kind: str = "logits") -> np.ndarray:
    """Per-position distribution with the call entry exactly zero.

    ``kind`` is "logits" (masked log-softmax, numerically stable) or
    "probs" (zero the entry and rescale). Raises NumericError when a
    position has no non-call mass left.
    """
    dist = np.asarray(dist, dtype=np.float64)
    squeeze = dist.ndim == 1
    rows = np.atleast_2d(dist)
    if not (0 <= call_id < rows.shape[1]):
        raise ValueError(f"call_id {call_id} out of range for vocab {rows.shape[1]}")
    if kind == "logits":
        x = rows.copy()
        x[:, call_id] = -np.inf
        m = x.max(axis=1, keepdims=True)
        if not np.all(np.isfinite(m)):
            raise NumericError("a position has -inf logits everywhere outside the call token")
        e = np.exp(x - m)
        z = e.sum(axis=1, keepdims=True)
        out = e / z
    elif kind == "probs":
        out = rows.copy()
        out[:, call_id] = 0.0
        z = out.sum(axis=1, keepdims=True)
        if np.any(z <= 0.0):
            raise NumericError("non-call probability mass underflowed to zero")
        out = out / z
    else:
        raise ValueError(f"kind must be 'logits' or 'probs', got {kind!r}")
    out[:, call_id] = 0.0
    return out[0] if squeeze else out


def _as_flat(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits)
    if logits.ndim == 3:
        return logits.reshape(-1, logits.shape[-1])
    if logits.ndim != 2:
        raise ValueError("logits must be (positions, vocab) or (batch, time, vocab)")
    return logits


def loss_with_masks(
    logits: np.ndarray,
    targets: np.ndarray,
    mask: DelegationMask,
    call_id: int,
    valid: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Combined call/ignore loss in nats plus its gradient w.r.t. logits.

    The gradient has the same leading shape as ``logits`` (float64) and is
    exactly zero at ignored and padding positions.
    """
    flat = _as_flat(logits)
    targets = np.asarray(targets).reshape(-1)
    call = np.asarray(mask.call).reshape(-1)
    ignore = np.asarray(mask.ignore).reshape(-1)
    if not (len(flat) == len(targets) == len(call) == len(ignore)):
        raise ValueError("logits, targets, and masks disagree on position count")
    if valid is None:
        valid = np.ones(len(flat), dtype=bool)
    else:
        valid = np.asarray(valid, dtype=bool).reshape(-1)
        if len(valid) != len(flat):
            raise ValueError("valid mask length mismatch")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise NumericError("no valid positions")
    loss_sum, grad = masked_loss_grad(flat, targets, call_id, call, ignore, valid)
    loss = loss_sum / n_valid
    grad = grad / n_valid
    return loss, grad.reshape(np.asarray(logits).shape)


def ignore_only_loss(
    logits: np.ndarray,
    targets: np.ndarray,
    ignore: np.ndarray,
    valid: np.ndarray | None = None,
) -> float:
    """Mean NLL over non-ignored positions under the plain distribution.

    Note the normalizer: it divides by the count of non-ignored valid
    positions, unlike the combined loss which divides by all valid ones.
    """
    flat = _as_flat(logits)
    targets = np.asarray(targets).reshape(-1)
    ignore = np.asarray(ignore, dtype=bool).reshape(-1)
    if valid is None:
        valid = np.ones(len(flat), dtype=bool)
    else:
        valid = np.asarray(valid, dtype=bool).reshape(-1)
    active = valid & ~ignore
    n = int(active.sum())
    if n == 0:
        raise NumericError("all positions ignored: mean is undefined")
    nll = token_nll(flat[active], targets[active])
    return float(nll.sum() / n)
