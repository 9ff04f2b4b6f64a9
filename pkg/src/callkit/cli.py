"""Single entry point wiring all subcommands.

Exit codes: 0 success, 1 user error (bad input, missing file), 2 internal
error (a diagnostic dump goes to stderr). Settings merge config file <
environment (CALLKIT_<KEY>) < command-line flags; the resolved
configuration is hashed (blake2s) and the hash is embedded in every output
artifact for provenance. All randomness descends from the one --seed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CallkitError

_ENV_PREFIX = "CALLKIT_"


def config_hash(resolved: dict) -> str:
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2s(canon.encode("utf-8"), digest_size=16).hexdigest()


def read_kv_config(path: str | Path) -> dict[str, str]:
    """KEY=VALUE lines; '#' starts a comment; later keys win."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected KEY=VALUE, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def merge_settings(defaults: dict, file_cfg: dict, keys: list[str], args: argparse.Namespace) -> dict:
    """Apply the precedence order: defaults < config file < env < flags."""
    resolved = dict(defaults)
    for k, v in file_cfg.items():
        if k not in resolved:
            raise ValueError(f"unknown config key {k!r}")
        resolved[k] = _coerce(v, defaults[k])
    for k in keys:
        env = os.environ.get(_ENV_PREFIX + k.upper())
        if env is not None:
            resolved[k] = _coerce(env, defaults[k])
    for k in keys:
        flag = getattr(args, k, None)
        if flag is not None:
            resolved[k] = flag
    return resolved


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def _load_tokenizer_for(vocab_size: int):
    """Pick the tokenizer whose vocabulary matches a checkpoint."""
    from .tokenizer import BpeTokenizer
    from .train import SyntheticTokenizer

    bundled = BpeTokenizer.bundled()
    if len(bundled.pieces) + 1 == vocab_size:
        return bundled
    return SyntheticTokenizer(vocab_size - 1)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_annotate(args) -> int:
    from .conllu import doc_to_json, read_conllu
    from .labeling import LabelerConfig, label_document

    # the hash covers content-affecting settings, never file locations,
    # so identical runs in different directories stay byte-identical
    resolved = {
        "subcommand": "annotate",
        "custom_keyword_lists": bool(args.org_keywords or args.person_cues),
    }
    h = config_hash(resolved)
    if args.org_keywords or args.person_cues:
        if not (args.org_keywords and args.person_cues):
            raise ValueError("--org-keywords and --person-cues must be given together")
        config = LabelerConfig.from_files(args.org_keywords, args.person_cues)
    else:
        config = None
    warnings: list[str] = []
    with open(args.input, encoding="utf-8") as fh:
        docs = read_conllu(fh, on_warning=warnings.append)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        out.write(json.dumps({"config_hash": h, "tool": "annotate", "warnings": len(warnings)}) + "\n")
        for doc in docs:
            labels = label_document(doc, config)
            words = doc.words()
            rec = {
                "doc_id": doc.doc_id,
                "text": doc.text(),
                "words": [
                    {"surface": w.surface, "class": lab.word_class, "reason": lab.reason,
                     "ws": w.whitespace_after}
                    for w, lab in zip(words, labels)
                ],
            }
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
    finally:
        if args.out:
            out.close()
    if args.dump_docs:
        with open(args.dump_docs, "w", encoding="utf-8") as fh:
            for doc in docs:
                fh.write(doc_to_json(doc) + "\n")
    return 0


def cmd_tokenize(args) -> int:
    from .tokenizer import BpeTokenizer, convert_judge_annotations
    from .tokenfile import DocTokens, TokenFile, write_token_file

    tok = BpeTokenizer.bundled()
    resolved = {"subcommand": "tokenize", "from_markup": bool(args.from_markup)}
    h = config_hash(resolved)
    docs: list[DocTokens] = []
    if args.from_markup:
        text = Path(args.input).read_text(encoding="utf-8")
        for i, block in enumerate(t for t in text.split("\n\n") if t.strip()):
            clean, call_labels = convert_judge_annotations(block, tok)
            ids = np.asarray(tok.encode(clean), dtype=np.int32)
            docs.append(
                DocTokens(
                    doc_id=f"markup{i:05d}",
                    token_ids=ids,
                    classes=np.zeros(len(ids), dtype=np.uint8),
                    call_labels=np.asarray(call_labels, dtype=np.uint8),
                )
            )
    else:
        with open(args.input, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                if "words" not in rec:
                    continue  # header line
                seq = _tokenize_record(rec, tok)
                docs.append(seq)
    tf = TokenFile(config_hash=h, vocab_size=len(tok.pieces), docs=docs)
    write_token_file(args.out, tf)
    total = tf.total_tokens()
    print(f"wrote {len(docs)} documents, {total} tokens -> {args.out}", file=sys.stderr)
    return 0


def _tokenize_record(rec: dict, tok):
    """Rebuild a document from an annotate record and propagate classes."""
    from .tokenizer import CLASS_CODES, _pretokenize, _pretokenize_word
    from .tokenfile import DocTokens

    token_ids: list[int] = []
    classes: list[int] = []
    words = rec["words"]
    for wi, w in enumerate(words):
        preceding = words[wi - 1].get("ws", " ") if wi > 0 else ""
        marked = preceding == " "
        gap = "" if marked else preceding
        ids: list[int] = []
        for seg, _, m in _pretokenize(gap):
            ids.extend(tok._encode_form(seg, m))
        n_gap = len(ids)
        for seg, _, m in _pretokenize_word(w["surface"], marked):
            ids.extend(tok._encode_form(seg, m))
        cls = CLASS_CODES[w["class"]]
        token_ids.extend(ids)
        classes.extend([CLASS_CODES["grammatical"]] * n_gap + [cls] * (len(ids) - n_gap))
    return DocTokens(
        doc_id=rec["doc_id"],
        token_ids=np.asarray(token_ids, dtype=np.int32),
        classes=np.asarray(classes, dtype=np.uint8),
        call_labels=np.zeros(len(token_ids), dtype=np.uint8),
    )


def cmd_mask(args) -> int:
    from .masks import MethodSpec, TrainingBatch, build_mask
    from .tokenfile import read_loss_file, read_token_file, write_mask_file
    from .train import TrainConfig, build_token_stream, iter_batches

    spec = MethodSpec(
        method=args.method,
        call_fraction=args.call_fraction,
        ignore_fraction=args.ignore_fraction,
        rng_seed=args.seed,
    )
    resolved = {"subcommand": "mask", "spec": spec.to_dict(), "batch_size": args.batch_size,
                "context": args.context, "steps": args.steps}
    h = config_hash(resolved)
    corpus = read_token_file(args.input)
    losses, _ = read_loss_file(args.losses) if args.losses else ({}, "")
    ref_losses, _ = read_loss_file(args.ref_losses) if args.ref_losses else ({}, "")
    ids, classes, judge_calls = build_token_stream(corpus.docs)
    cfg = TrainConfig(batch_size=args.batch_size, context=args.context, seed=args.seed,
                      steps=max(1, args.steps), warmup_steps=0, method=spec)
    records = {}
    warn_total = 0
    needs_losses = {"rho1", "lacy", "spacy_refloss", "lacy_ignorefacts", "lacy_ignore"}
    for step, _inputs, targets, target_classes, target_judge in iter_batches(
        ids, classes, judge_calls, cfg, args.steps
    ):
        loss_arr = losses.get(step)
        if loss_arr is None and spec.method in needs_losses:
            raise ValueError(f"method {spec.method} needs --losses covering step {step}")
        batch = TrainingBatch(
            token_ids=targets,
            classes=target_judge if spec.method == "llm_judge" else target_classes,
            losses=loss_arr,
            ref_losses=ref_losses.get(step),
        )
        mask = build_mask(batch, spec, ordinal=step)
        warn_total += mask.warning_count
        records[step] = (mask.call.astype(np.uint8), mask.ignore.astype(np.uint8))
    write_mask_file(args.out, spec, records, h)
    print(f"wrote {len(records)} batch masks ({warn_total} warnings) -> {args.out}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    from .masks import MethodSpec
    from .tokenfile import read_loss_file, read_token_file, write_loss_file
    from .train import TrainConfig, score_corpus, train

    defaults = {
        "batch_size": 16, "steps": 200, "learning_rate": 3e-4, "warmup_steps": 20,
        "seed": 0, "context": 128, "dim": 64, "n_layers": 2, "n_heads": 4,
        "weight_decay": 0.1, "checkpoint_every": 0, "equalize_tokens": False,
        "method": "baseline", "call_fraction": 0.15, "ignore_fraction": 0.15,
    }
    file_cfg = read_kv_config(args.config) if args.config else {}
    resolved = merge_settings(defaults, file_cfg, list(defaults), args)
    method = MethodSpec(
        method=resolved.pop("method"),
        call_fraction=resolved.pop("call_fraction"),
        ignore_fraction=resolved.pop("ignore_fraction"),
        rng_seed=resolved["seed"],
    )
    config = TrainConfig(method=method, **resolved)
    full = {"subcommand": "train", "config": config.to_dict(),
            "score_only": bool(args.score_from)}
    h = config_hash(full)
    corpus = read_token_file(args.input)
    if args.score_from:
        if not args.dump_losses:
            raise ValueError("--score-from needs --dump-losses for the output file")
        from .model import load_checkpoint

        model, _, _ = load_checkpoint(args.score_from)
        records = score_corpus(corpus, config, model)
        write_loss_file(args.dump_losses, records, h)
        print(f"scored {len(records)} batches -> {args.dump_losses}", file=sys.stderr)
        return 0
    ref = None
    if args.ref_losses:
        ref, _ = read_loss_file(args.ref_losses)
    result = train(
        corpus,
        config,
        out_dir=args.out_dir,
        config_hash=h,
        ref_losses=ref,
        dump_losses_to=args.dump_losses,
    )
    status = "aborted (non-finite loss)" if result.aborted else "done"
    print(
        f"{status}: {result.final_step} steps, final loss "
        f"{result.metrics[-1]['loss']:.4f}" if result.metrics else f"{status}: no steps",
        file=sys.stderr,
    )
    return 1 if result.aborted else 0


def cmd_generate(args) -> int:
    from .cascade import CascadeSession, MockPartner, ProcessPartner, generate
    from .model import load_checkpoint

    model, step, _h = load_checkpoint(args.checkpoint)
    tok = _load_tokenizer_for(model.config.vocab_size)
    partner = None
    if args.partner and args.partner != "none":
        if args.partner.startswith("mock:"):
            partner = MockPartner.from_file(args.partner[len("mock:"):])
        elif args.partner.startswith("proc:"):
            partner = ProcessPartner(args.partner[len("proc:"):])
        else:
            raise ValueError(f"partner must be 'mock:<file>', 'proc:<command>' or 'none', got {args.partner!r}")
    resolved = {"subcommand": "generate",
                "target_ratio": args.target_ratio, "max_new": args.max_new,
                "repetition_penalty": args.repetition_penalty, "window": args.window,
                "suppress_calls": bool(args.suppress_calls)}
    h = config_hash(resolved)
    prompts = [l.rstrip("\n") for l in Path(args.prompt_file).read_text(encoding="utf-8").splitlines() if l.strip()]
    eot = getattr(tok, "eot_id", None)
    try:
        with open(f"{args.out_prefix}.txt", "w", encoding="utf-8") as txt, open(
            f"{args.out_prefix}.trace.jsonl", "w", encoding="utf-8"
        ) as tr:
            tr.write(json.dumps({"config_hash": h, "tool": "generate", "model_step": step}) + "\n")
            for prompt in prompts:
                session = CascadeSession(
                    prompt_ids=tok.encode(prompt),
                    tokenizer=tok,
                    partner=partner,
                    max_new_tokens=args.max_new,
                    repetition_penalty=args.repetition_penalty,
                    target_call_ratio=args.target_ratio,
                    quantile_window=args.window,
                    eot_id=eot,
                    suppress_calls=bool(args.suppress_calls),
                )
                text = generate(session, model)
                txt.write(text + "\n")
                realized = session.calls_made / max(1, session.tokens_emitted)
                tr.write(json.dumps({
                    "prompt": prompt,
                    "generated": text,
                    "calls_made": session.calls_made,
                    "tokens_emitted": session.tokens_emitted,
                    "target_call_ratio": args.target_ratio,
                    "realized_call_ratio": realized,
                    "trace": session.trace,
                }) + "\n")
    finally:
        if isinstance(partner, ProcessPartner):
            partner.close()
    return 0


def _corpus_logits(model, token_file):
    """Teacher-forced logits and targets over contiguous corpus windows."""
    from .train import build_token_stream

    ids, _classes, _ = build_token_stream(token_file.docs)
    ctx = model.config.context
    all_logits, all_targets = [], []
    for s in range(0, len(ids) - 1, ctx):
        window = ids[s : s + ctx + 1]
        if len(window) < 2:
            break
        inputs = window[:-1][None, :]
        all_logits.append(model.forward(inputs)[0])
        all_targets.append(window[1:])
    return np.concatenate(all_logits), np.concatenate(all_targets)


def cmd_eval_loss(args) -> int:
    from .evals import call_noncall_losses, extract_eval_call_mask
    from .model import load_checkpoint
    from .tokenfile import read_token_file

    model, _, _ = load_checkpoint(args.checkpoint)
    baseline, _, _ = load_checkpoint(args.baseline)
    corpus = read_token_file(args.input)
    logits, targets = _corpus_logits(model, corpus)
    base_logits, base_targets = _corpus_logits(baseline, corpus)
    if len(base_targets) != len(targets):
        raise ValueError("model and baseline disagree on corpus framing (context mismatch)")
    mask = extract_eval_call_mask(logits, args.fraction)
    losses = call_noncall_losses(logits, base_logits, targets, mask)
    payload = {
        "config_hash": config_hash({"subcommand": "eval-loss", "fraction": args.fraction}),
        "fraction": args.fraction,
        "mask_positions": int(mask.sum()),
        "total_positions": int(len(mask)),
        **losses,
    }
    out = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(out + "\n", encoding="utf-8")
    else:
        print(out)
    return 0


def cmd_leakage(args) -> int:
    from .evals import fact_leakage
    from .model import load_checkpoint

    model, _, _ = load_checkpoint(args.checkpoint)
    tok = _load_tokenizer_for(model.config.vocab_size)
    items = []
    with open(args.probes, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            items.append((rec["prompt"], rec["gold"]))
    score = fact_leakage(model, tok, items, max_new_tokens=args.max_new,
                         eot_id=getattr(tok, "eot_id", None))
    payload = {"config_hash": config_hash({"subcommand": "leakage", "max_new": args.max_new}),
               "items": len(items), "leakage": score}
    out = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(out + "\n", encoding="utf-8")
    else:
        print(out)
    return 0


def cmd_judge(args) -> int:
    from .evals import MockJudge, judge_acceptability

    if args.judge == "mock":
        judge = MockJudge()
    elif args.judge.startswith("proc:"):
        judge = _ProcessJudge(args.judge[len("proc:"):])
    else:
        raise ValueError("judge must be 'mock' or 'proc:<command>'")
    h = config_hash({"subcommand": "judge", "judge": args.judge})
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        out.write(json.dumps({"config_hash": h, "tool": "judge"}) + "\n")
        with open(args.items, encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                verdict = judge_acceptability(
                    rec["starting_text"], rec["proposed_token"], rec["reference_token"], judge
                )
                rec["output"] = verdict.output
                rec["explanation"] = verdict.explanation
                out.write(json.dumps(rec, ensure_ascii=False) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


class _ProcessJudge:
    """Judge over the same line-delimited protocol as cascade partners:
    the filled prompt is the context; the top candidate text is the raw
    judge response."""

    def __init__(self, command: str):
        from .cascade import ProcessPartner

        self.partner = ProcessPartner(command)

    def respond(self, prompt: str) -> str:
        return self.partner.candidates(prompt, max_candidates=1)[0].text


def cmd_analyze(args) -> int:
    from .evals import analyze_judged_records, write_analysis

    records = []
    with open(args.judged, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if "output" in rec and "loss" in rec:
                records.append(rec)
    rows = analyze_judged_records(records)
    write_analysis(rows, args.out_csv, args.out_svg)
    print(f"wrote {args.out_csv}" + (f" and {args.out_svg}" if args.out_svg else ""), file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="callkit", description="Token-delegation toolkit for small language models")
    p.add_argument("--version", action="store_true", help="print version and exit")
    p.add_argument("--json", action="store_true", help="with --version: machine-readable output")
    sub = p.add_subparsers(dest="cmd")

    a = sub.add_parser("annotate", help="CoNLL-U in, per-word class/reason JSONL out")
    a.add_argument("input")
    a.add_argument("--out", help="output JSONL (default stdout)")
    a.add_argument("--dump-docs", help="also dump the parsed document model as JSONL")
    a.add_argument("--org-keywords", help="override the org keyword list file")
    a.add_argument("--person-cues", help="override the person cue list file")
    a.set_defaults(fn=cmd_annotate)

    t = sub.add_parser("tokenize", help="labels JSONL (or judge markup) to a binary token-label file")
    t.add_argument("input")
    t.add_argument("--out", required=True)
    t.add_argument("--from-markup", action="store_true",
                   help="input is raw text with database-lookup markup; emit call labels")
    t.set_defaults(fn=cmd_tokenize)

    m = sub.add_parser("mask", help="token-label file + loss file to a mask file")
    m.add_argument("input")
    m.add_argument("--out", required=True)
    m.add_argument("--method", required=True)
    m.add_argument("--losses", help="loss file keyed by batch ordinal")
    m.add_argument("--ref-losses", help="reference-model loss file")
    m.add_argument("--call-fraction", type=float, default=0.15)
    m.add_argument("--ignore-fraction", type=float, default=0.15)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--batch-size", type=int, default=16)
    m.add_argument("--context", type=int, default=128)
    m.add_argument("--steps", type=int, default=1, help="number of batches to mask")
    m.set_defaults(fn=cmd_mask)

    tr = sub.add_parser("train", help="train a model on a token-label file")
    tr.add_argument("input")
    tr.add_argument("--config", help="KEY=VALUE config file")
    tr.add_argument("--out-dir", required=True)
    tr.add_argument("--method")
    tr.add_argument("--seed", type=int)
    tr.add_argument("--steps", type=int)
    tr.add_argument("--batch-size", type=int)
    tr.add_argument("--context", type=int)
    tr.add_argument("--dim", type=int)
    tr.add_argument("--n-layers", type=int, dest="n_layers")
    tr.add_argument("--n-heads", type=int, dest="n_heads")
    tr.add_argument("--learning-rate", type=float, dest="learning_rate")
    tr.add_argument("--warmup-steps", type=int, dest="warmup_steps")
    tr.add_argument("--call-fraction", type=float, dest="call_fraction")
    tr.add_argument("--ignore-fraction", type=float, dest="ignore_fraction")
    tr.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    tr.add_argument("--equalize-tokens", action="store_const", const=True, default=None,
                    dest="equalize_tokens")
    tr.add_argument("--dump-losses", help="write plain per-token losses keyed by step")
    tr.add_argument("--ref-losses", help="reference-model loss file for rho1/spacy_refloss")
    tr.add_argument("--score-from", help="score the batch stream with this fixed checkpoint "
                                         "instead of training (writes --dump-losses)")
    tr.set_defaults(fn=cmd_train)

    g = sub.add_parser("generate", help="cascade generation from a checkpoint")
    g.add_argument("checkpoint")
    g.add_argument("--prompt-file", required=True)
    g.add_argument("--partner", default="none", help="mock:<script.json>, proc:<command>, or none")
    g.add_argument("--out-prefix", required=True)
    g.add_argument("--max-new", type=int, default=256)
    g.add_argument("--repetition-penalty", type=float, default=1.2)
    g.add_argument("--target-ratio", type=float, default=0.15)
    g.add_argument("--window", type=int, default=512)
    g.add_argument("--suppress-calls", action="store_true")
    g.set_defaults(fn=cmd_generate)

    e = sub.add_parser("eval-loss", help="call/non-call validation losses vs a baseline")
    e.add_argument("checkpoint")
    e.add_argument("baseline")
    e.add_argument("input", help="token-label file")
    e.add_argument("--fraction", type=float, default=0.15)
    e.add_argument("--out")
    e.set_defaults(fn=cmd_eval_loss)

    l = sub.add_parser("leakage", help="fact-leakage probe with calls suppressed")
    l.add_argument("checkpoint")
    l.add_argument("probes", help="JSONL with prompt/gold fields")
    l.add_argument("--max-new", type=int, default=8)
    l.add_argument("--out")
    l.set_defaults(fn=cmd_leakage)

    j = sub.add_parser("judge", help="acceptability judging over an items file")
    j.add_argument("items", help="JSONL with starting_text/proposed_token/reference_token")
    j.add_argument("--judge", default="mock")
    j.add_argument("--out")
    j.set_defaults(fn=cmd_judge)

    an = sub.add_parser("analyze", help="loss-quartile acceptability summary")
    an.add_argument("judged", help="judged records JSONL")
    an.add_argument("--out-csv", required=True)
    an.add_argument("--out-svg")
    an.set_defaults(fn=cmd_analyze)

    return p


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.version:
        if args.json:
            print(json.dumps({"name": "callkit", "version": __version__}))
        else:
            print(f"callkit {__version__}")
        return 0
    if not getattr(args, "cmd", None):
        parser.print_help()
        return 1
    try:
        return args.fn(args)
    except (CallkitError, FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        print("internal error:", file=sys.stderr)
        traceback.print_exc()
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
