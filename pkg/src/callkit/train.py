"""Desk-scale trainer wiring masks and objectives end to end.

The loop is: batch, forward, per-token plain losses, build the method's
masks, masked loss and gradient, AdamW step (decoupled weight decay,
linear warmup, no further schedule). Single-threaded numeric core so that
a fixed seed reproduces metrics logs bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import token_nll
from .masks import MethodSpec, TrainingBatch, build_mask
from .model import ModelConfig, TinyLM, save_checkpoint
from .objective import loss_with_masks
from .tokenfile import DocTokens, TokenFile, write_loss_file

CLASS_OTHER, CLASS_FACT, CLASS_GRAMMATICAL = 0, 1, 2

# synthetic corpus token layout
SYN_PAD, SYN_EOT = 0, 1
SYN_PATTERN_BASE = 2
SYN_PATTERN_SIZE = 16
SYN_TRIGGER_NEW = SYN_PATTERN_BASE + SYN_PATTERN_SIZE  # 18
SYN_TRIGGER_REP = SYN_TRIGGER_NEW + 1  # 19
SYN_FACT_BASE = SYN_TRIGGER_REP + 1  # 20


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    steps: int = 1000
    learning_rate: float = 3e-4
    warmup_steps: int = 100
    seed: int = 0
    method: MethodSpec = field(default_factory=lambda: MethodSpec("baseline"))
    context: int = 256
    dim: int = 128
    n_layers: int = 2
    n_heads: int = 4
    weight_decay: float = 0.1
    checkpoint_every: int = 0  # 0 = final checkpoint only
    equalize_tokens: bool = False  # extend steps to match the baseline's
    # budget of tokens trained toward the true target

    def __post_init__(self):
        for name in ("batch_size", "steps", "context", "dim", "n_layers", "n_heads"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.warmup_steps > self.steps:
            raise ValueError("warmup_steps must not exceed steps")

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "method"}
        d["method"] = self.method.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("method"), dict):
            d["method"] = MethodSpec.from_dict(d["method"])
        return cls(**d)


class AdamW:
    """Adam with decoupled weight decay on matrix-shaped parameters."""

    def __init__(self, params: dict[str, np.ndarray], weight_decay: float = 0.1,
                 beta1: float = 0.9, beta2: float = 0.95, eps: float = 1e-8):
        self.params = params
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            if self.weight_decay and p.ndim >= 2:
                p -= lr * self.weight_decay * p
            p -= lr * update


def warmup_lr(step: int, config: TrainConfig) -> float:
    """Linear warmup to the configured rate, constant afterwards."""
    if step < config.warmup_steps:
        return config.learning_rate * (step + 1) / config.warmup_steps
    return config.learning_rate


def build_token_stream(docs: list[DocTokens], eot_id: int = SYN_EOT) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Concatenate documents with end-of-text separators between them."""
    ids, classes, calls = [], [], []
    for d in docs:
        ids.append(np.asarray(d.token_ids, dtype=np.int64))
        classes.append(np.asarray(d.classes, dtype=np.uint8))
        calls.append(np.asarray(d.call_labels, dtype=np.uint8))
        ids.append(np.array([eot_id], dtype=np.int64))
        classes.append(np.array([CLASS_GRAMMATICAL], dtype=np.uint8))
        calls.append(np.array([0], dtype=np.uint8))
    return np.concatenate(ids), np.concatenate(classes), np.concatenate(calls)


@dataclass
class TrainResult:
    model: TinyLM
    metrics: list[dict]
    final_step: int
    trained_true_tokens: int
    aborted: bool = False


def iter_batches(
    ids: np.ndarray,
    classes: np.ndarray,
    judge_calls: np.ndarray,
    config: TrainConfig,
    max_steps: int,
):
    """Deterministic batch stream shared by the trainer and the mask tool.

    Yields (step, inputs, targets, target_classes, target_judge). Window
    order reshuffles per epoch from rng([seed, 1]), so a consumer with the
    same config walks the exact same batches.
    """
    window = config.context + 1
    n_windows = (len(ids) - 1) // config.context
    starts_all = np.arange(n_windows) * config.context
    starts_all = starts_all[starts_all + window <= len(ids)]
    if len(starts_all) < config.batch_size:
        raise ValueError(
            f"corpus too small: {len(starts_all)} windows for batch size {config.batch_size}"
        )
    rng_order = np.random.default_rng([config.seed, 1])
    order: list[int] = []
    for step in range(max_steps):
        if len(order) < config.batch_size:
            order.extend(rng_order.permutation(starts_all).tolist())
        batch_starts = [order.pop(0) for _ in range(config.batch_size)]
        windows = np.stack([ids[s : s + window] for s in batch_starts])
        inputs = windows[:, :-1]
        targets = windows[:, 1:].reshape(-1)
        target_classes = np.stack([classes[s + 1 : s + window] for s in batch_starts]).reshape(-1)
        target_judge = np.stack([judge_calls[s + 1 : s + window] for s in batch_starts]).reshape(-1)
        yield step, inputs, targets, target_classes, target_judge


def score_corpus(
    corpus: TokenFile,
    config: TrainConfig,
    model: TinyLM,
    eot_id: int = SYN_EOT,
) -> dict[int, np.ndarray]:
    """Per-token plain losses of a fixed model over the batch stream.

    This is how a reference-loss file for rho1/spacy_refloss is produced:
    train a reference model first, then score with it, keyed by the same
    (seed, batch size, context) batch geometry the consumer will use.
    """
    ids, classes, judge_calls = build_token_stream(corpus.docs, eot_id=eot_id)
    vocab_size = corpus.vocab_size + 1
    out: dict[int, np.ndarray] = {}
    for step, inputs, targets, _tc, _tj in iter_batches(ids, classes, judge_calls, config, config.steps):
        logits = model.forward(inputs)
        out[step] = token_nll(logits.reshape(-1, vocab_size), targets).astype(np.float32)
    return out


def train(
    corpus: TokenFile,
    config: TrainConfig,
    out_dir: str | Path | None = None,
    config_hash: str = "",
    ref_losses: dict[int, np.ndarray] | None = None,
    dump_losses_to: str | Path | None = None,
    eot_id: int = SYN_EOT,
) -> TrainResult:
    """Train a model on a token-label corpus with the configured method.

    ``ref_losses`` supplies per-batch reference-model losses (keyed by step
    ordinal) for the methods that need them; ``dump_losses_to`` writes this
    run's plain per-token losses in the same keying, which is how a
    reference-loss file is produced in the first place.
    """
    method = config.method
    vocab_size = corpus.vocab_size + 1  # plus the reserved call token
    call_id = corpus.vocab_size
    model_cfg = ModelConfig(
        vocab_size=vocab_size,
        dim=config.dim,
        n_layers=config.n_layers,
        n_heads=config.n_heads,
        context=config.context,
    )
    model = TinyLM(model_cfg, seed=config.seed)
    opt = AdamW(model.params, weight_decay=config.weight_decay)

    ids, classes, judge_calls = build_token_stream(corpus.docs, eot_id=eot_id)

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    metrics: list[dict] = []
    loss_dump: dict[int, np.ndarray] = {}
    tokens_per_step = config.batch_size * config.context
    true_token_budget = config.steps * tokens_per_step
    trained_true = 0
    last_good: Path | None = None
    aborted = False

    max_steps = config.steps if not config.equalize_tokens else config.steps * 4
    steps_done = 0
    for step, inputs, targets, target_classes, target_judge in iter_batches(
        ids, classes, judge_calls, config, max_steps
    ):
        if config.equalize_tokens and trained_true >= true_token_budget:
            break

        logits, cache = model.forward(inputs, want_cache=True)
        flat_logits = logits.reshape(-1, vocab_size)
        plain = token_nll(flat_logits, targets)
        if dump_losses_to is not None:
            loss_dump[step] = plain.astype(np.float32)

        batch_classes = target_judge if method.method == "llm_judge" else target_classes
        ref = None
        if ref_losses is not None:
            ref = ref_losses.get(step)
            if ref is None or len(ref) != len(targets):
                raise ValueError(f"reference losses missing or misaligned at step {step}")
        tb = TrainingBatch(
            token_ids=targets,
            classes=batch_classes,
            losses=plain,
            ref_losses=ref,
        )
        mask = build_mask(tb, method, ordinal=step)
        loss, dlogits = loss_with_masks(logits, targets, mask, call_id=call_id)
        if not math.isfinite(loss):
            aborted = True
            break
        grads = model.backward(cache, dlogits.astype(model.dtype))
        opt.step(grads, warmup_lr(step, config))

        n_calls = int(mask.call.sum())
        n_ignores = int(mask.ignore.sum())
        trained_true += len(targets) - n_calls - n_ignores
        metrics.append(
            {
                "step": step,
                "loss": float(loss),
                "plain_loss": float(plain.mean()),
                "calls": n_calls,
                "ignores": n_ignores,
                "mask_warnings": mask.warning_count,
                "lr": warmup_lr(step, config),
                "trained_true_tokens": trained_true,
            }
        )
        steps_done = step + 1
        if out_path is not None and config.checkpoint_every and steps_done % config.checkpoint_every == 0:
            ckpt = out_path / f"step{steps_done:08d}.ckpt"
            save_checkpoint(ckpt, model, steps_done, config_hash)
            last_good = ckpt

    if out_path is not None:
        final = out_path / ("last_good.ckpt" if aborted else "final.ckpt")
        if aborted and last_good is not None:
            final.write_bytes(last_good.read_bytes())
        elif not aborted:
            save_checkpoint(final, model, steps_done, config_hash)
        with open(out_path / "metrics.jsonl", "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"config": config.to_dict(), "config_hash": config_hash}) + "\n")
            for rec in metrics:
                fh.write(json.dumps(rec) + "\n")
    if dump_losses_to is not None:
        write_loss_file(dump_losses_to, loss_dump, config_hash)
    return TrainResult(
        model=model,
        metrics=metrics,
        final_step=steps_done,
        trained_true_tokens=trained_true,
        aborted=aborted,
    )


# ---------------------------------------------------------------------------
# synthetic oracle corpus
# ---------------------------------------------------------------------------

class SyntheticTokenizer:
    """Fixed-width textual rendering of synthetic token ids.

    Token ``i`` renders as ``w%05d``; decode joins with single spaces.
    Widths are constant so substring containment can never match across
    token boundaries.
    """

    def __init__(self, base_vocab: int):
        self.base_vocab = base_vocab
        self.pieces = [self.name(i) for i in range(base_vocab)]
        self.eot_id = SYN_EOT

    @staticmethod
    def name(token_id: int) -> str:
        return f"w{token_id:05d}"

    def encode(self, text: str) -> list[int]:
        out = []
        for part in text.split():
            if not (part.startswith("w") and part[1:].isdigit()):
                raise ValueError(f"not a synthetic token name: {part!r}")
            out.append(int(part[1:]))
        return out

    def decode(self, ids) -> str:
        return " ".join(self.name(int(i)) for i in ids)


def make_synthetic_fact_corpus(
    seed: int,
    docs: int,
    doc_len: int,
    fact_rate: float,
    base_vocab: int = 512,
    repeat_rate: float = 0.015,
) -> TokenFile:
    """Build the synthetic oracle corpus.

    Non-fact positions walk a deterministic successor pattern over a small
    alphabet; a "new" trigger token is always followed by a fact drawn
    uniformly without replacement from the document's unseen facts (labeled
    fact), and a "repeat" trigger is always followed by the most recent
    fact (labeled other, recoverable from context). Pattern tokens are
    grammatical; triggers are other.
    """
    if not (0.0 <= fact_rate < 0.5):
        raise ValueError("fact_rate must lie in [0, 0.5)")
    if base_vocab <= SYN_FACT_BASE:
        raise ValueError(f"base_vocab must exceed {SYN_FACT_BASE}")
    n_facts = base_vocab - SYN_FACT_BASE
    # each trigger forces one following fact slot, so among the "free"
    # positions (fraction 1 - fact_rate - repeat_rate of the stream) the
    # trigger probability must be scaled up accordingly
    denom = 1.0 - fact_rate - repeat_rate
    if denom <= 2.0 * (fact_rate + repeat_rate) - 1.0 or denom <= 0:
        raise ValueError("fact_rate + repeat_rate too large")
    p_new = fact_rate / denom
    p_rep = repeat_rate / denom if fact_rate > 0 else 0.0
    if p_new + p_rep >= 1.0:
        raise ValueError("fact_rate + repeat_rate too large")

    rng = np.random.default_rng([seed, 42])
    out_docs: list[DocTokens] = []
    for d in range(docs):
        tokens = np.empty(doc_len, dtype=np.int32)
        classes = np.empty(doc_len, dtype=np.uint8)
        state = int(rng.integers(SYN_PATTERN_SIZE))
        unseen = list(rng.permutation(n_facts))
        seen: list[int] = []
        prev = -1
        for t in range(doc_len):
            if prev == SYN_TRIGGER_NEW:
                if unseen:
                    fact = SYN_FACT_BASE + unseen.pop()
                    tok, cls = fact, CLASS_FACT
                    seen.append(fact)
                else:  # pool exhausted: fall back to a repeat
                    tok, cls = seen[-1], CLASS_OTHER
            elif prev == SYN_TRIGGER_REP:
                tok, cls = seen[-1], CLASS_OTHER
            else:
                u = rng.random()
                if fact_rate > 0 and u < p_new:
                    tok, cls = SYN_TRIGGER_NEW, CLASS_OTHER
                elif fact_rate > 0 and seen and u < p_new + p_rep:
                    tok, cls = SYN_TRIGGER_REP, CLASS_OTHER
                else:
                    state = (5 * state + 3) % SYN_PATTERN_SIZE
                    tok, cls = SYN_PATTERN_BASE + state, CLASS_GRAMMATICAL
            tokens[t] = tok
            classes[t] = cls
            prev = tok
        out_docs.append(
            DocTokens(
                doc_id=f"syn{d:05d}",
                token_ids=tokens,
                classes=classes,
                call_labels=np.zeros(doc_len, dtype=np.uint8),
            )
        )
    return TokenFile(config_hash="", vocab_size=base_vocab, docs=out_docs)
