"""Eval-time call masks, partition losses, leakage, and the judge harness."""
import numpy as np
import pytest

from callkit.errors import NumericError, VerdictParseError
from callkit.evals import (
    MockJudge,
    analyze_judged_records,
    call_noncall_losses,
    extract_eval_call_mask,
    fact_leakage,
    fill_judge_prompt,
    judge_acceptability,
    parse_judge_response,
    write_analysis,
)
from callkit.kernels import token_nll
from callkit.masks import round_half_up


# extract_eval_call_mask -----------------------------------------------------

from oracles import oracle_eval_mask


def random_logits(rng, n, v, top_rate):
    logits = rng.normal(size=(n, v))
    boost = rng.random(n) < top_rate
    logits[boost, v - 1] = logits[boost].max(axis=1) + 1.0
    return logits


def test_cap_branch():
    rng = np.random.default_rng(40)
    logits = random_logits(rng, 200, 8, top_rate=0.4)  # top at ~40% > 15%
    mask = extract_eval_call_mask(logits, 0.15)
    assert mask.sum() == round_half_up(0.15 * 200)
    got = set(np.flatnonzero(mask))
    assert got == oracle_eval_mask(logits, 0.15, 7)
    is_top = logits[:, 7] >= logits.max(axis=1)
    assert all(is_top[i] for i in got)  # cap keeps only top positions


def test_fill_branch():
    rng = np.random.default_rng(41)
    logits = rng.normal(size=(200, 8))
    logits[:, 7] -= 10.0  # call never the top logit
    mask = extract_eval_call_mask(logits, 0.15)
    assert mask.sum() == round_half_up(0.15 * 200)
    got = set(np.flatnonzero(mask))
    assert got == oracle_eval_mask(logits, 0.15, 7)


def test_random_instances_match_oracle_and_exact_cardinality():
    rng = np.random.default_rng(42)
    for trial in range(300):
        n = int(rng.integers(1, 120))
        v = int(rng.integers(2, 10))
        logits = random_logits(rng, n, v, top_rate=float(rng.random()))
        frac = float(rng.choice([0.05, 0.15, 0.3, 0.5]))
        mask = extract_eval_call_mask(logits, frac)
        assert set(np.flatnonzero(mask)) == oracle_eval_mask(logits, frac, v - 1)
        assert mask.sum() == min(round_half_up(frac * n), n)


def test_quota_clamped_to_positions():
    logits = np.zeros((3, 4))
    mask = extract_eval_call_mask(logits, 2.0)
    assert mask.sum() == 3


# call / non-call losses -----------------------------------------------------

def test_partition_losses_weighted_identity():
    rng = np.random.default_rng(43)
    n, v = 64, 9
    logits = rng.normal(size=(n, v))
    base = rng.normal(size=(n, v))
    targets = rng.integers(0, v - 1, size=n)
    mask = extract_eval_call_mask(logits, 0.25)
    out = call_noncall_losses(logits, base, targets, mask)
    k = int(mask.sum())
    mixed = (k * out["model_call_loss"] + (n - k) * out["model_noncall_loss"]) / n
    manual = (token_nll(logits[mask], targets[mask]).sum()
              + token_nll(logits[~mask], targets[~mask], call_id=v - 1, exclude_call=True).sum()) / n
    assert abs(mixed - manual) <= 1e-6


def test_identical_models_equal_losses():
    rng = np.random.default_rng(44)
    logits = rng.normal(size=(32, 6))
    targets = rng.integers(0, 5, size=32)
    mask = extract_eval_call_mask(logits, 0.25)
    out = call_noncall_losses(logits, logits, targets, mask)
    assert out["model_call_loss"] == out["baseline_call_loss"]
    assert out["model_noncall_loss"] == out["baseline_noncall_loss"]


def test_empty_partition_raises():
    rng = np.random.default_rng(45)
    logits = rng.normal(size=(10, 5))
    targets = rng.integers(0, 4, size=10)
    with pytest.raises(NumericError):
        call_noncall_losses(logits, logits, targets, np.zeros(10, dtype=bool))
    with pytest.raises(NumericError):
        call_noncall_losses(logits, logits, targets, np.ones(10, dtype=bool))


# fact leakage ----------------------------------------------------------------

class EchoModel:
    """Scripted model that deterministically emits a fixed token stream
    after a known prompt length."""

    def __init__(self, emit, prompt_len, vocab_size=32, context=64):
        from callkit.model import ModelConfig

        self.emit = list(emit)
        self.prompt_len = prompt_len
        self.config = ModelConfig(vocab_size=vocab_size, dim=8, n_layers=1, n_heads=1,
                                  context=context)

    def forward(self, ids):
        B, T = ids.shape
        logits = np.full((B, T, self.config.vocab_size), -1.0, dtype=np.float32)
        idx = min(max(T - self.prompt_len, 0), len(self.emit) - 1)
        logits[:, -1, self.emit[idx]] = 5.0
        return logits


def test_leakage_counts_contained_gold():
    from callkit.train import SyntheticTokenizer

    tok = SyntheticTokenizer(31)
    model = EchoModel([7, 8, 9], prompt_len=2)
    items = [("w00002 w00003", tok.name(8)), ("w00002 w00003", tok.name(20))]
    score = fact_leakage(model, tok, items, max_new_tokens=3)
    assert score == 0.5  # first gold (8) appears, second (20) never


def test_leakage_monotone_under_added_leak():
    from callkit.train import SyntheticTokenizer

    tok = SyntheticTokenizer(31)
    model = EchoModel([7, 8, 9], prompt_len=2)
    items = [("w00002 w00003", tok.name(20))]
    base = fact_leakage(model, tok, items, max_new_tokens=3)
    more = fact_leakage(model, tok, items + [("w00002 w00003", tok.name(7))], max_new_tokens=3)
    assert more >= base


def test_leakage_empty_items_raises():
    from callkit.train import SyntheticTokenizer

    with pytest.raises(NumericError):
        fact_leakage(EchoModel([1], prompt_len=1), SyntheticTokenizer(31), [], max_new_tokens=2)


# judge harness ---------------------------------------------------------------

def test_fill_prompt_contains_fields():
    prompt = fill_judge_prompt("Dorothy Hodgkin was a ", "chemist", "crystallographer")
    task = prompt.split("# Your Task", 1)[1]
    assert "**starting_text**: 'Dorothy Hodgkin was a '" in task
    assert "**proposed_next_token**: 'chemist'" in task
    assert "**reference_next_token**: 'crystallographer'" in task


def test_canonical_invalid_example():
    verdict = judge_acceptability("Alan Turing was an English ", "linguist", "mathematician",
                                  MockJudge())
    assert verdict.output == 0


def test_canonical_valid_example():
    verdict = judge_acceptability("Entre Campos station is part of the ", "metro", "Yellow",
                                  MockJudge())
    assert verdict.output == 1


def test_exact_match_shortcut():
    verdict = judge_acceptability("anything ", "same", "same", MockJudge())
    assert verdict.output == 1
    assert "exact match" in verdict.explanation


def test_parse_judge_response_variants():
    assert parse_judge_response("**explanation**: fine\n**output**: 1").output == 1
    assert parse_judge_response("reasoning...\noutput: 0").output == 0
    assert parse_judge_response("just thinking\n1").output == 1
    with pytest.raises(VerdictParseError):
        parse_judge_response("no label anywhere")


def test_unparseable_judge_retries_then_raises():
    class BadJudge:
        def __init__(self):
            self.calls = 0

        def respond(self, prompt):
            self.calls += 1
            return "nothing useful"

    judge = BadJudge()
    with pytest.raises(VerdictParseError):
        judge_acceptability("a", "b", "c", judge)
    assert judge.calls == 2


# analyze ---------------------------------------------------------------------

def test_analyze_bins_and_outputs(tmp_path):
    rng = np.random.default_rng(46)
    records = [
        {"loss": float(rng.gamma(2, 2)), "is_fact": bool(rng.random() < 0.4),
         "output": int(rng.random() < 0.6)}
        for _ in range(200)
    ]
    rows = analyze_judged_records(records)
    cells = [r for r in rows if r["quartile"] != "all"]
    assert len(cells) == 8
    assert sum(r["count"] for r in cells) == 200
    csv_path = tmp_path / "a.csv"
    svg_path = tmp_path / "a.svg"
    write_analysis(rows, csv_path, svg_path)
    assert csv_path.exists() and "quartile" in csv_path.read_text()
    assert svg_path.exists() and svg_path.read_bytes().lstrip().startswith(b"<?xml")


def test_analyze_empty_raises():
    with pytest.raises(NumericError):
        analyze_judged_records([])
