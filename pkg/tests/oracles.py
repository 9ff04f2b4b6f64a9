"""Independent brute-force oracles shared by the unit and acceptance tests.

These deliberately re-derive every selection rule with full sorts and
re-seeded draws, and evaluate the objective term by term at 50 decimal
digits, so the production kernels are checked against a separate path.
"""
import mpmath
import numpy as np

from callkit.masks import (
    CLASS_FACT,
    CLASS_OTHER,
    MethodSpec,
    TrainingBatch,
    round_half_up,
)

mpmath.mp.dps = 50


def oracle_top(values, eligible, count):
    order = sorted(np.flatnonzero(eligible), key=lambda i: (-values[i], i))
    return set(order[: min(count, len(order))])


def oracle_mask(batch: TrainingBatch, spec: MethodSpec, judge=None, ordinal=0):
    n = len(batch.token_ids)
    valid = batch.valid
    n_valid = int(valid.sum())
    call = np.zeros(n, dtype=bool)
    ignore = np.zeros(n, dtype=bool)
    target = round_half_up(spec.call_fraction * n_valid)
    starved = spec.call_fraction * n_valid < 1.0
    if starved:
        target = 0
    m = spec.method
    losses = None if batch.losses is None else np.asarray(batch.losses, dtype=np.float64)
    refs = None if batch.ref_losses is None else np.asarray(batch.ref_losses, dtype=np.float64)
    if m == "baseline":
        pass
    elif m == "loss_random":
        if not starved:
            rng = np.random.default_rng([spec.rng_seed, ordinal])
            call = (rng.random(n) < spec.call_fraction) & valid
    elif m == "rho1":
        rho = losses - refs
        order = sorted(np.flatnonzero(valid), key=lambda i: (rho[i], i))
        call[order[:target]] = True
    elif m == "llm_judge":
        call = (np.asarray(judge) != 0) & valid
    elif m == "spacy_only":
        facts = np.flatnonzero((batch.classes == CLASS_FACT) & valid)
        if len(facts) < target:
            call[facts] = True
        elif target > 0:
            rng = np.random.default_rng([spec.rng_seed, ordinal])
            call[rng.choice(facts, size=target, replace=False)] = True
    else:
        scores = refs if m == "spacy_refloss" else losses
        eligible = (batch.classes == CLASS_FACT) & valid
        call[list(oracle_top(scores, eligible, target))] = True
        if m in ("lacy_ignorefacts", "lacy_ignore"):
            ignore = eligible & ~call
        if m == "lacy_ignore":
            quota = round_half_up(spec.ignore_fraction * n_valid)
            deficit = quota - int(ignore.sum())
            if deficit > 0:
                pool = (batch.classes == CLASS_OTHER) & valid & ~call & ~ignore
                ignore[list(oracle_top(losses, pool, deficit))] = True
    return call, ignore


def oracle_eval_mask(logits, fraction, call_id):
    n = len(logits)
    quota = min(round_half_up(fraction * n), n)
    call_logits = logits[:, call_id]
    is_top = call_logits >= logits.max(axis=1)
    ranked = sorted(range(n), key=lambda i: (not is_top[i], -call_logits[i], i))
    return set(ranked[:quota])


def mp_logsumexp(values):
    return mpmath.log(mpmath.fsum(mpmath.e**v for v in values))


def oracle_masked_loss(logits, targets, call, ignore, valid, call_id):
    n_valid = sum(1 for v in valid if v)
    total = mpmath.mpf(0)
    for i in range(len(targets)):
        if not valid[i]:
            continue
        row = [mpmath.mpf(float(x)) for x in logits[i]]
        if call[i]:
            total += row[call_id] - mp_logsumexp(row)
        elif not ignore[i]:
            excl = [v for j, v in enumerate(row) if j != call_id]
            total += row[targets[i]] - mp_logsumexp(excl)
    return float(-total / n_valid)
