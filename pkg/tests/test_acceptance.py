"""Acceptance criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
pass lines and timings. The two training-backed criteria (6 and 10) are the
slow ones; everything else finishes in seconds.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest
from oracles import oracle_eval_mask, oracle_mask, oracle_masked_loss

from callkit.cli import dispatch
from callkit.conllu import read_conllu
from callkit.evals import extract_eval_call_mask, fact_leakage
from callkit.labeling import label_document
from callkit.masks import DelegationMask, MethodSpec, TrainingBatch, build_mask, round_half_up
from callkit.objective import loss_with_masks, renormalize_excluding_call
from callkit.tokenizer import BpeTokenizer, CALL_TOKEN, CLASS_FACT, convert_judge_annotations, propagate_labels
from callkit.train import (
    SyntheticTokenizer,
    TrainConfig,
    build_token_stream,
    make_synthetic_fact_corpus,
    train,
)

FIXTURE = Path("fixtures/wiki50.conllu")
GOLD = Path("fixtures/wiki50_gold.jsonl")


def report(number: int, name: str, t0: float, detail: str = "") -> None:
    dt = time.time() - t0
    extra = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {number} {name}: PASS in {dt:.1f}s{extra}")


@pytest.fixture(scope="module")
def fixture_docs():
    with open(FIXTURE, encoding="utf-8") as fh:
        return read_conllu(fh)


@pytest.fixture(scope="module")
def gold_records():
    with open(GOLD, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh]


def test_criterion_1_labeling_gold_exactness(fixture_docs, gold_records):
    t0 = time.time()
    assert len(fixture_docs) == 50 and len(gold_records) == 50
    surfaces = " ".join(w.surface for d in fixture_docs for w in d.words())
    for s in ("Marie Curie , a physicist , discovered radium .",
              "She studied physics",
              "he was a lawyer by training"):
        assert s in surfaces, f"exemplar sentence missing: {s!r}"
    total = matched = 0
    for doc, g in zip(fixture_docs, gold_records):
        labels = label_document(doc)
        for w, lab, gl in zip(doc.words(), labels, g["labels"]):
            assert w.surface == gl["surface"]
            total += 1
            matched += int(lab.word_class == gl["class"] and lab.reason == gl["reason"])
    assert matched == total, f"{matched}/{total} labels matched"
    assert time.time() - t0 < 5.0
    report(1, "labeling gold-fixture exactness", t0, f"{matched}/{total} labels")


def test_criterion_2_fact_ratio_band(fixture_docs):
    t0 = time.time()
    tok = BpeTokenizer.bundled()
    total = fact = 0
    for doc in fixture_docs:
        seq = propagate_labels(doc, label_document(doc), tok)
        total += len(seq)
        fact += int((seq.classes == CLASS_FACT).sum())
    ratio = fact / total
    assert 0.15 <= ratio <= 0.35, ratio
    assert time.time() - t0 < 5.0
    report(2, "fact-ratio band", t0, f"subword fact fraction {ratio:.4f}")


def test_criterion_3_mask_oracle_equivalence():
    t0 = time.time()
    methods = ["baseline", "loss_random", "rho1", "llm_judge", "spacy_only",
               "lacy", "spacy_refloss", "lacy_ignorefacts", "lacy_ignore"]
    rng = np.random.default_rng(2024)
    n_batches = 1000
    for trial in range(n_batches):
        n = int(rng.integers(4, 65))
        classes = rng.choice([0, 1, 2], size=n, p=[0.45, 0.3, 0.25]).astype(np.uint8)
        losses = rng.gamma(2.0, 2.0, size=n)
        refs = rng.gamma(2.0, 2.0, size=n)
        padding = rng.random(n) > 0.1
        if not padding.any():
            padding[0] = True
        judge = (rng.random(n) < 0.2).astype(np.uint8)
        for method in methods:
            spec = MethodSpec(method, rng_seed=trial)
            cls = judge if method == "llm_judge" else classes
            batch = TrainingBatch(token_ids=np.arange(n), classes=cls, losses=losses,
                                  ref_losses=refs, padding=padding)
            mask = build_mask(batch, spec, ordinal=trial)
            ref_batch = TrainingBatch(token_ids=np.arange(n), classes=classes, losses=losses,
                                      ref_losses=refs, padding=padding)
            exp_call, exp_ignore = oracle_mask(ref_batch, spec, judge=judge, ordinal=trial)
            assert np.array_equal(mask.call, exp_call), (method, trial)
            assert np.array_equal(mask.ignore, exp_ignore), (method, trial)
            if method in ("lacy", "lacy_ignorefacts", "lacy_ignore", "spacy_refloss"):
                facts = (classes == 1) & padding
                assert np.all(facts[mask.call]), "call must stay inside the fact set"
                n_valid = int(padding.sum())
                target = round_half_up(0.15 * n_valid) if 0.15 * n_valid >= 1 else 0
                assert mask.call.sum() == min(target, int(facts.sum()))
    assert time.time() - t0 < 30.0
    report(3, "mask-oracle equivalence", t0, f"{n_batches} batches x 9 methods")


def test_criterion_4_objective_correctness():
    t0 = time.time()
    rng = np.random.default_rng(2025)

    def instance():
        n = int(rng.integers(2, 7))
        v = int(rng.integers(3, 9))
        logits = rng.normal(scale=3.0, size=(n, v))
        targets = rng.integers(0, v - 1, size=n)
        call = rng.random(n) < 0.3
        ignore = (~call) & (rng.random(n) < 0.3)
        valid = rng.random(n) > 0.1
        if not valid.any():
            valid[0] = True
        return logits, targets, call, ignore, valid, v - 1

    def mk(call, ignore):
        return DelegationMask(call=call, ignore=ignore, spec=MethodSpec("baseline"))

    for k in range(1000):
        logits, targets, call, ignore, valid, call_id = instance()
        loss, grad = loss_with_masks(logits, targets, mk(call, ignore), call_id, valid)
        expected = oracle_masked_loss(logits, targets, call, ignore, valid, call_id)
        assert abs(loss - expected) <= 1e-6 * max(1.0, abs(expected)), k
        dead = (ignore & ~call) | ~valid
        assert np.all(grad[dead] == 0.0)
        if k < 150:  # central finite differences, step 1e-3 on logits
            step = 1e-3
            num = np.zeros_like(grad)
            for i in range(logits.shape[0]):
                for j in range(logits.shape[1]):
                    up = logits.copy(); up[i, j] += step
                    dn = logits.copy(); dn[i, j] -= step
                    lp, _ = loss_with_masks(up, targets, mk(call, ignore), call_id, valid)
                    lm, _ = loss_with_masks(dn, targets, mk(call, ignore), call_id, valid)
                    num[i, j] = (lp - lm) / (2 * step)
            assert np.allclose(num, grad, rtol=1e-4, atol=1e-7), k
    assert time.time() - t0 < 120.0
    report(4, "objective correctness", t0, "1000 oracle instances, 150 gradient checks")


def test_criterion_5_renormalization():
    t0 = time.time()
    rng = np.random.default_rng(2026)
    logits = rng.normal(scale=6.0, size=(10_000, 16))
    call_id = 7
    probs = renormalize_excluding_call(logits, call_id)
    assert np.all(probs[:, call_id] == 0.0)
    assert np.all(np.abs(probs.sum(axis=1) - 1.0) <= 1e-6)
    assert time.time() - t0 < 10.0
    report(5, "renormalization", t0, "10000 positions")


# -- criterion 6: the slow mechanism check ----------------------------------

MECH = dict(batch_size=16, steps=1400, warmup_steps=100, seed=3, context=128,
            dim=64, n_layers=2, n_heads=4)
MECH_VOCAB = 256


@pytest.fixture(scope="module")
def mech_corpus():
    # 800 x 256 = 204.8k training tokens at fact rate 0.25
    return make_synthetic_fact_corpus(seed=11, docs=800, doc_len=256,
                                      fact_rate=0.25, base_vocab=MECH_VOCAB)


@pytest.fixture(scope="module")
def mech_models(mech_corpus):
    lacy = train(mech_corpus, TrainConfig(**MECH, method=MethodSpec("lacy", call_fraction=0.15)))
    base = train(mech_corpus, TrainConfig(**MECH, method=MethodSpec("baseline")))
    return lacy.model, base.model


def test_criterion_6_mechanism_directional(mech_corpus, mech_models):
    t0 = time.time()
    lacy_model, base_model = mech_models
    call_id, ctx = MECH_VOCAB, MECH["context"]

    held = make_synthetic_fact_corpus(seed=9911, docs=40, doc_len=256,
                                      fact_rate=0.25, base_vocab=MECH_VOCAB)
    hids, hcls, _ = build_token_stream(held.docs)
    fact_hits = fact_total = non_hits = non_total = 0
    for w in range((len(hids) - 1) // ctx):
        s = w * ctx
        window = hids[s : s + ctx + 1]
        if len(window) < ctx + 1:
            break
        pred = lacy_model.forward(window[:-1][None, :])[0].argmax(axis=-1)
        target_classes = hcls[s + 1 : s + ctx + 1]
        is_fact = target_classes == 1
        fact_hits += int((pred[is_fact] == call_id).sum())
        fact_total += int(is_fact.sum())
        non_hits += int((pred[~is_fact] == call_id).sum())
        non_total += int((~is_fact).sum())
    fact_rate = fact_hits / fact_total
    non_rate = non_hits / non_total
    assert fact_rate >= 0.90, f"call tops only {fact_rate:.3f} of held-out fact positions"
    assert non_rate <= 0.05, f"call tops {non_rate:.3f} of non-fact positions"

    # leakage probes: training-document first mentions whose gold token is
    # withheld from the prompt (the prompt is the training window prefix)
    tok = SyntheticTokenizer(MECH_VOCAB)
    ids, classes, _ = build_token_stream(mech_corpus.docs)
    probes = []
    for g in np.flatnonzero(classes == 1):
        s = ((g - 1) // ctx) * ctx
        if g - s < 16:
            continue
        if ids[g] in ids[s:g]:
            continue
        probes.append((tok.decode(ids[s:g]), tok.name(int(ids[g]))))
        if len(probes) >= 1600:
            break
    lacy_leak = fact_leakage(lacy_model, tok, probes, max_new_tokens=6)
    base_leak = fact_leakage(base_model, tok, probes, max_new_tokens=6)
    assert base_leak > lacy_leak, f"baseline {base_leak:.4f} vs lacy {lacy_leak:.4f}"
    report(6, "mechanism check", t0,
           f"call-on-fact {fact_rate:.3f}, call-on-nonfact {non_rate:.3f}, "
           f"leakage base {base_leak:.4f} > lacy {lacy_leak:.4f}")


def test_criterion_7_calibration():
    from collections import deque

    from callkit.cascade import CascadeSession, apply_repetition_penalty, calibrate_threshold, generate
    from callkit.model import ModelConfig, TinyLM

    t0 = time.time()
    rng = np.random.default_rng(77)
    stream = rng.normal(size=10_000)
    window = 512
    history = deque(maxlen=window)
    calls = 0
    for i, x in enumerate(stream):
        history.append(x)
        threshold = calibrate_threshold(history, 0.15, calls, i, window)
        if x >= threshold:
            calls += 1
    realized = calls / len(stream)
    assert abs(realized - 0.15) <= 0.02, realized

    model = TinyLM(ModelConfig(vocab_size=65, dim=32, n_layers=2, n_heads=2, context=32), seed=1)
    tok = SyntheticTokenizer(64)
    session = CascadeSession(prompt_ids=[2, 3, 4], tokenizer=tok, partner=None,
                             max_new_tokens=48, suppress_calls=True)
    text = generate(session, model)
    generated = []
    while len(generated) < 48:
        ids = ([2, 3, 4] + generated)[-32:]
        logits = model.forward(np.asarray(ids)[None, :])[0, -1].astype(np.float64)
        logits = apply_repetition_penalty(logits, generated, 1.2)
        logits[64] = -np.inf
        generated.append(int(logits.argmax()))
    assert session.generated == generated
    assert text == tok.decode(generated)  # byte-identical output
    assert time.time() - t0 < 60.0
    report(7, "calibration", t0, f"realized ratio {realized:.4f}")


def test_criterion_8_eval_mask_rule():
    t0 = time.time()
    rng = np.random.default_rng(88)
    cap_seen = fill_seen = 0
    for trial in range(500):
        n = int(rng.integers(1, 220))
        v = int(rng.integers(2, 10))
        logits = rng.normal(size=(n, v))
        boost = rng.random(n) < rng.random()
        logits[boost, v - 1] = logits[boost].max(axis=1) + 1.0
        mask = extract_eval_call_mask(logits, 0.15)
        assert set(np.flatnonzero(mask)) == oracle_eval_mask(logits, 0.15, v - 1)
        quota = min(round_half_up(0.15 * n), n)
        assert int(mask.sum()) == quota
        n_top = int((logits[:, v - 1] >= logits.max(axis=1)).sum())
        if n_top > quota:
            cap_seen += 1
        elif n_top < quota:
            fill_seen += 1
    assert cap_seen > 0 and fill_seen > 0, "both branches must be exercised"
    assert time.time() - t0 < 10.0
    report(8, "eval-mask rule", t0, f"{cap_seen} cap, {fill_seen} fill instances")


def test_criterion_9_judge_annotation_conversion():
    t0 = time.time()
    tok = BpeTokenizer.bundled()
    annotated = ("Napoleon was born on <|db_start|>Napoleon<|sep|>Birth_Date"
                 "<|db_retrieve|> August 15, 1769<|db_end|>.")
    clean, labels = convert_judge_annotations(annotated, tok)
    assert clean == "Napoleon was born on August 15, 1769."
    ids = tok.encode(clean)
    rendered = "".join(
        ("▁" + CALL_TOKEN if tok.pieces[t].startswith("▁") else CALL_TOKEN)
        if lab else tok.pieces[t]
        for t, lab in zip(ids, labels)
    ).replace("▁", " ")
    assert rendered == "Napoleon was born on <CALL> <CALL><CALL>, <CALL><CALL><CALL><CALL>."
    assert time.time() - t0 < 1.0
    report(9, "judge-annotation conversion", t0)


def _run_pipeline(root: Path) -> dict[str, bytes]:
    root.mkdir(parents=True, exist_ok=True)
    labels = root / "labels.jsonl"
    tokens = root / "tokens.bin"
    losses = root / "losses.bin"
    masks = root / "masks.bin"
    run = root / "run"
    assert dispatch(["annotate", str(FIXTURE), "--out", str(labels)]) == 0
    assert dispatch(["tokenize", str(labels), "--out", str(tokens)]) == 0
    assert dispatch([
        "train", str(tokens), "--out-dir", str(run), "--method", "lacy",
        "--steps", "40", "--warmup-steps", "5", "--batch-size", "8",
        "--context", "64", "--dim", "32", "--seed", "123",
        "--dump-losses", str(losses),
    ]) == 0
    assert dispatch([
        "mask", str(tokens), "--out", str(masks), "--method", "lacy",
        "--losses", str(losses), "--seed", "123", "--batch-size", "8",
        "--context", "64", "--steps", "8",
    ]) == 0
    prompts = root / "prompts.txt"
    prompts.write_text("Marie Curie discovered\n", encoding="utf-8")
    script = root / "partner.json"
    script.write_text(json.dumps([" radium", [[" polonium", 2.0], [" x", 1.0]]]))
    assert dispatch([
        "generate", str(run / "final.ckpt"), "--prompt-file", str(prompts),
        "--partner", f"mock:{script}", "--out-prefix", str(root / "gen"),
        "--max-new", "12", "--window", "8",
    ]) == 0
    names = ["labels.jsonl", "tokens.bin", "losses.bin", "masks.bin",
             "run/final.ckpt", "run/metrics.jsonl", "gen.txt", "gen.trace.jsonl"]
    return {name: (root / name).read_bytes() for name in names}


def test_criterion_10_determinism(tmp_path):
    t0 = time.time()
    first = _run_pipeline(tmp_path / "a")
    second = _run_pipeline(tmp_path / "b")
    assert first.keys() == second.keys()
    for name in first:
        assert first[name] == second[name], f"{name} differs between identical-seed runs"
    assert time.time() - t0 < 25 * 60
    report(10, "determinism", t0, f"{len(first)} artifacts byte-identical")


@pytest.mark.skipif(
    not (Path("frontend/node_modules").is_dir() and __import__("shutil").which("npx")),
    reason="secondary component not built; the primary suite runs without it",
)
def test_criterion_11_bindings_equivalence():
    """[SECONDARY] delegates to the bindings' own boundary-equivalence
    suite, which compares bound outputs to primary CLI outputs on every
    fixture, field for field and bit for bit."""
    import subprocess

    t0 = time.time()
    proc = subprocess.run(
        ["npx", "vitest", "run"], cwd="frontend", capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode == 0, proc.stdout[-2000:] + proc.stderr[-2000:]
    assert time.time() - t0 < 60.0
    report(11, "bindings equivalence", t0, "frontend vitest suite green")
