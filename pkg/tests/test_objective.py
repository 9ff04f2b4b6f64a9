"""Objective correctness against extended-precision oracles."""
import mpmath
import numpy as np
import pytest

from callkit.errors import NumericError
from callkit.masks import DelegationMask, MethodSpec
from callkit.objective import ignore_only_loss, loss_with_masks, renormalize_excluding_call

from oracles import mp_logsumexp, oracle_masked_loss as oracle_loss

mpmath.mp.dps = 50


def random_instance(rng, n_pos=None, vocab=None):
    n = n_pos or int(rng.integers(2, 7))
    v = vocab or int(rng.integers(3, 9))
    call_id = v - 1
    logits = rng.normal(scale=3.0, size=(n, v))
    targets = rng.integers(0, v - 1, size=n)
    call = rng.random(n) < 0.3
    ignore = (~call) & (rng.random(n) < 0.3)
    valid = rng.random(n) > 0.1
    if not valid.any():
        valid[0] = True
    return logits, targets, call, ignore, valid, call_id


def as_mask(call, ignore):
    return DelegationMask(call=call, ignore=ignore, spec=MethodSpec("baseline"))


def test_loss_matches_extended_precision_oracle():
    rng = np.random.default_rng(21)
    for _ in range(300):
        logits, targets, call, ignore, valid, call_id = random_instance(rng)
        loss, _ = loss_with_masks(logits, targets, as_mask(call, ignore), call_id, valid)
        expected = oracle_loss(logits, targets, call, ignore, valid, call_id)
        assert abs(loss - expected) <= 1e-6 * max(1.0, abs(expected))


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(22)
    step = 1e-3
    for _ in range(40):
        logits, targets, call, ignore, valid, call_id = random_instance(rng)
        mask = as_mask(call, ignore)
        _, grad = loss_with_masks(logits, targets, mask, call_id, valid)
        num = np.zeros_like(grad)
        for i in range(logits.shape[0]):
            for j in range(logits.shape[1]):
                up = logits.copy()
                up[i, j] += step
                down = logits.copy()
                down[i, j] -= step
                lp, _ = loss_with_masks(up, targets, mask, call_id, valid)
                lm, _ = loss_with_masks(down, targets, mask, call_id, valid)
                num[i, j] = (lp - lm) / (2 * step)
        assert np.allclose(num, grad, rtol=1e-4, atol=1e-7)


def test_ignored_positions_have_exactly_zero_gradient():
    rng = np.random.default_rng(23)
    for _ in range(50):
        logits, targets, call, ignore, valid, call_id = random_instance(rng)
        _, grad = loss_with_masks(logits, targets, as_mask(call, ignore), call_id, valid)
        dead = (ignore & ~call) | ~valid
        assert np.all(grad[dead] == 0.0)


def test_empty_masks_reduce_to_renormalized_nll():
    rng = np.random.default_rng(24)
    logits, targets, _, _, _, call_id = random_instance(rng, n_pos=6, vocab=8)
    n = len(targets)
    zeros = np.zeros(n, dtype=bool)
    loss, _ = loss_with_masks(logits, targets, as_mask(zeros, zeros), call_id)
    probs = renormalize_excluding_call(logits, call_id)
    manual = -np.log(probs[np.arange(n), targets]).mean()
    assert abs(loss - manual) < 1e-9


def test_certain_call_position_contributes_zero():
    vocab, call_id = 5, 4
    logits = np.zeros((1, vocab))
    logits[0, call_id] = 60.0  # softmax mass 1 on the call token
    call = np.array([True])
    loss, _ = loss_with_masks(logits, np.array([1]), as_mask(call, ~call & False), call_id)
    assert abs(loss) < 1e-12


def test_permutation_invariance():
    rng = np.random.default_rng(25)
    logits, targets, call, ignore, valid, call_id = random_instance(rng, n_pos=6, vocab=7)
    base, _ = loss_with_masks(logits, targets, as_mask(call, ignore), call_id, valid)
    perm = rng.permutation(len(targets))
    permuted, _ = loss_with_masks(logits[perm], targets[perm], as_mask(call[perm], ignore[perm]),
                                  call_id, valid[perm])
    assert abs(base - permuted) < 1e-12


# ignore-only loss -----------------------------------------------------------

def test_ignore_only_matches_oracle():
    rng = np.random.default_rng(26)
    for _ in range(100):
        logits, targets, _, ignore, valid, call_id = random_instance(rng)
        if not (valid & ~ignore).any():
            continue
        got = ignore_only_loss(logits, targets, ignore, valid)
        total = mpmath.mpf(0)
        count = 0
        for i in range(len(targets)):
            if valid[i] and not ignore[i]:
                row = [mpmath.mpf(float(x)) for x in logits[i]]
                total += row[targets[i]] - mp_logsumexp(row)
                count += 1
        expected = float(-total / count)
        assert abs(got - expected) <= 1e-6 * max(1.0, abs(expected))


def test_ignore_none_is_standard_nll():
    rng = np.random.default_rng(27)
    logits, targets, _, _, _, _ = random_instance(rng, n_pos=5, vocab=6)
    got = ignore_only_loss(logits, targets, np.zeros(5, dtype=bool))
    m = logits.max(axis=1, keepdims=True)
    logz = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    expected = (logz - logits[np.arange(5), targets]).mean()
    assert abs(got - expected) < 1e-9


def test_ignore_all_but_one():
    rng = np.random.default_rng(28)
    logits, targets, _, _, _, _ = random_instance(rng, n_pos=4, vocab=6)
    ignore = np.array([True, True, False, True])
    got = ignore_only_loss(logits, targets, ignore)
    only = ignore_only_loss(logits[2:3], targets[2:3], np.array([False]))
    assert abs(got - only) < 1e-12


def test_ignore_all_raises():
    with pytest.raises(NumericError):
        ignore_only_loss(np.zeros((3, 4)), np.zeros(3, dtype=int), np.ones(3, dtype=bool))


def test_normalizer_conventions_differ_deliberately():
    """The combined loss divides by all valid positions; the ignore-only
    loss divides by non-ignored ones and keeps the call token inside its
    distribution. With a nonempty ignore mask and no calls the two differ."""
    rng = np.random.default_rng(29)
    logits, targets, _, _, _, call_id = random_instance(rng, n_pos=6, vocab=8)
    ignore = np.array([True, True, False, False, False, False])
    zeros = np.zeros(6, dtype=bool)
    combined, _ = loss_with_masks(logits, targets, as_mask(zeros, ignore), call_id)
    ignore_only = ignore_only_loss(logits, targets, ignore)
    # combined sums 4 renormalized terms / 6; ignore-only sums 4 plain terms / 4
    assert combined != pytest.approx(ignore_only)
    probs = renormalize_excluding_call(logits, call_id)
    manual = -np.log(probs[np.arange(6), targets])[~ignore].sum() / 6
    assert combined == pytest.approx(manual, abs=1e-9)


# renormalization ------------------------------------------------------------

def test_renormalize_uniform_case():
    probs = renormalize_excluding_call(np.zeros(4), call_id=2)
    assert np.allclose(probs, [1 / 3, 1 / 3, 0.0, 1 / 3])


def test_renormalize_fixed_point_when_call_mass_zero():
    p = np.array([0.4, 0.6, 0.0])
    out = renormalize_excluding_call(p, call_id=2, kind="probs")
    assert np.allclose(out, p)


def test_renormalize_matches_direct_summation_oracle():
    rng = np.random.default_rng(30)
    logits = rng.normal(scale=4.0, size=(20, 8))
    out = renormalize_excluding_call(logits, call_id=3)
    for i in range(20):
        row = [mpmath.e ** mpmath.mpf(float(x)) for x in logits[i]]
        row[3] = mpmath.mpf(0)
        z = mpmath.fsum(row)
        expected = [float(r / z) for r in row]
        assert np.allclose(out[i], expected, atol=1e-12)


def test_renormalize_sums_to_one_call_exactly_zero():
    rng = np.random.default_rng(31)
    logits = rng.normal(scale=6.0, size=(10_000, 12))
    out = renormalize_excluding_call(logits, call_id=5)
    assert np.all(out[:, 5] == 0.0)
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-6)


def test_renormalize_underflow_raises():
    with pytest.raises(NumericError):
        renormalize_excluding_call(np.array([-np.inf, 1.0]), call_id=1)
    with pytest.raises(NumericError):
        renormalize_excluding_call(np.array([0.0, 1.0]), call_id=1, kind="probs")
