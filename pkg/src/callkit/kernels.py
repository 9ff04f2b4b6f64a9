"""Hot numeric kernels with numba and pure-numpy twins.

Every kernel has two implementations that compute identical values; the
active one is chosen at import by :mod:`callkit.accel` (numba unless
``CALLKIT_NO_NUMBA=1`` or numba is unavailable). All math runs in float64
regardless of the caller's storage dtype. Kernels are serial on purpose:
the trainer's determinism contract is bit-identical reruns.
"""
from __future__ import annotations

import numpy as np

from .accel import USE_NUMBA, njit


# ---------------------------------------------------------------------------
# fused masked objective: loss sum and gradient w.r.t. logits
# ---------------------------------------------------------------------------

def _masked_loss_grad_numpy(logits, targets, call_id, call, ignore, valid):
    n, v = logits.shape
    grad = np.zeros((n, v), dtype=np.float64)
    loss_sum = 0.0
    active = valid & (call | ~ignore)
    if not np.any(active):
        return 0.0, grad

    rows = np.flatnonzero(active)
    x = logits[rows]
    m_all = x.max(axis=1, keepdims=True)
    e_all = np.exp(x - m_all)
    z_all = e_all.sum(axis=1, keepdims=True)
    log_z_all = m_all + np.log(z_all)

    x_excl = x.copy()
    x_excl[:, call_id] = -np.inf
    m_ex = x_excl.max(axis=1, keepdims=True)
    e_ex = np.exp(x_excl - m_ex)
    z_ex = e_ex.sum(axis=1, keepdims=True)
    log_z_ex = m_ex + np.log(z_ex)

    for k, i in enumerate(rows):
        if call[i]:
            loss_sum += log_z_all[k, 0] - logits[i, call_id]
            grad[i] = e_all[k] / z_all[k, 0]
            grad[i, call_id] -= 1.0
        else:
            t = targets[i]
            loss_sum += log_z_ex[k, 0] - logits[i, t]
            grad[i] = e_ex[k] / z_ex[k, 0]
            grad[i, t] -= 1.0
    return loss_sum, grad


@njit
def _masked_loss_grad_numba(logits, targets, call_id, call, ignore, valid):  # pragma: no cover
    n, v = logits.shape
    grad = np.zeros((n, v), dtype=np.float64)
    loss_sum = 0.0
    for i in range(n):
        if not valid[i]:
            continue
        if ignore[i] and not call[i]:
            continue
        m_all = -np.inf
        for j in range(v):
            if logits[i, j] > m_all:
                m_all = logits[i, j]
        z_all = 0.0
        for j in range(v):
            z_all += np.exp(logits[i, j] - m_all)
        if call[i]:
            loss_sum += m_all + np.log(z_all) - logits[i, call_id]
            for j in range(v):
                grad[i, j] = np.exp(logits[i, j] - m_all) / z_all
            grad[i, call_id] -= 1.0
        else:
            m_ex = -np.inf
            for j in range(v):
                if j != call_id and logits[i, j] > m_ex:
                    m_ex = logits[i, j]
            z_ex = 0.0
            for j in range(v):
                if j != call_id:
                    z_ex += np.exp(logits[i, j] - m_ex)
            t = targets[i]
            loss_sum += m_ex + np.log(z_ex) - logits[i, t]
            for j in range(v):
                if j != call_id:
                    grad[i, j] = np.exp(logits[i, j] - m_ex) / z_ex
            grad[i, t] -= 1.0
    return loss_sum, grad


def masked_loss_grad(logits, targets, call_id, call, ignore, valid):
    """Sum over active positions of the call/ignore objective plus its
    gradient w.r.t. the logits (not yet normalized by position count)."""
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    call = np.ascontiguousarray(call, dtype=np.bool_)
    ignore = np.ascontiguousarray(ignore, dtype=np.bool_)
    valid = np.ascontiguousarray(valid, dtype=np.bool_)
    if USE_NUMBA:
        return _masked_loss_grad_numba(logits, targets, call_id, call, ignore, valid)
    return _masked_loss_grad_numpy(logits, targets, call_id, call, ignore, valid)


# ---------------------------------------------------------------------------
# per-token negative log-likelihoods (plain and call-excluded)
# ---------------------------------------------------------------------------

def _token_nll_numpy(logits, targets, call_id, exclude_call):
    x = logits
    if exclude_call:
        x = x.copy()
        x[:, call_id] = -np.inf
    m = x.max(axis=1, keepdims=True)
    log_z = m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))
    return log_z[:, 0] - x[np.arange(len(targets)), targets]


@njit
def _token_nll_numba(logits, targets, call_id, exclude_call):  # pragma: no cover
    n, v = logits.shape
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        m = -np.inf
        for j in range(v):
            if (not exclude_call or j != call_id) and logits[i, j] > m:
                m = logits[i, j]
        z = 0.0
        for j in range(v):
            if not exclude_call or j != call_id:
                z += np.exp(logits[i, j] - m)
        t = targets[i]
        x_t = -np.inf if (exclude_call and t == call_id) else logits[i, t]
        out[i] = m + np.log(z) - x_t
    return out


def token_nll(logits, targets, call_id=-1, exclude_call=False):
    """Per-position NLL of the targets, optionally under the call-excluded
    renormalized distribution."""
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    if USE_NUMBA:
        return _token_nll_numba(logits, targets, call_id, exclude_call)
    return _token_nll_numpy(logits, targets, call_id, exclude_call)


# ---------------------------------------------------------------------------
# GELU (tanh form), forward producing the tanh cache and backward using it.
# Stays pure numpy on both paths: SIMD-vectorized np.tanh beats a scalar
# libm loop under numba here (see benchmarks/bench_kernels.py).
# ---------------------------------------------------------------------------

_SQRT_2_OVER_PI = 0.7978845608028654
_GELU_C = 0.044715


def gelu_fwd(x):
    t = np.tanh(_SQRT_2_OVER_PI * (x + _GELU_C * x * x * x))
    return 0.5 * x * (1.0 + t), t


def gelu_bwd(dy, x, t):
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * x * x))


# ---------------------------------------------------------------------------
# causal row softmax over attention scores (B, H, T, T)
# ---------------------------------------------------------------------------

def _causal_softmax_fwd_numpy(scores):
    T = scores.shape[-1]
    mask = np.triu(np.full((T, T), -np.inf, dtype=scores.dtype), k=1)
    att = scores + mask
    att = att - att.max(axis=-1, keepdims=True)
    att = np.exp(att)
    att /= att.sum(axis=-1, keepdims=True)
    return att


@njit
def _causal_softmax_fwd_numba(scores):  # pragma: no cover
    B, H, T, _ = scores.shape
    out = np.zeros_like(scores)
    for b in range(B):
        for h in range(H):
            for i in range(T):
                m = scores[b, h, i, 0]
                for j in range(1, i + 1):
                    if scores[b, h, i, j] > m:
                        m = scores[b, h, i, j]
                z = 0.0
                for j in range(i + 1):
                    e = np.exp(scores[b, h, i, j] - m)
                    out[b, h, i, j] = e
                    z += e
                inv = 1.0 / z
                for j in range(i + 1):
                    out[b, h, i, j] *= inv
    return out


def causal_softmax_fwd(scores):
    """Row softmax restricted to positions j <= i; upper triangle is zero.

    Stays on the numpy path: SIMD exp beats a scalar loop here (see
    benchmarks/bench_kernels.py), unlike the mul/add-only backward.
    """
    return _causal_softmax_fwd_numpy(scores)


def _causal_softmax_bwd_numpy(att, datt):
    return att * (datt - (datt * att).sum(axis=-1, keepdims=True))


@njit
def _causal_softmax_bwd_numba(att, datt):  # pragma: no cover
    B, H, T, _ = att.shape
    out = np.zeros_like(att)
    for b in range(B):
        for h in range(H):
            for i in range(T):
                s = 0.0
                for j in range(i + 1):
                    s += datt[b, h, i, j] * att[b, h, i, j]
                for j in range(i + 1):
                    out[b, h, i, j] = att[b, h, i, j] * (datt[b, h, i, j] - s)
    return out


def causal_softmax_bwd(att, datt):
    if USE_NUMBA:
        return _causal_softmax_bwd_numba(np.ascontiguousarray(att), np.ascontiguousarray(datt))
    return _causal_softmax_bwd_numpy(att, datt)
