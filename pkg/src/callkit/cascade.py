"""Cascade inference: greedy decoding with a delegating call token.

Each step the model proposes logits; a repetition penalty dampens tokens
already generated; the call logit is compared against a running-quantile
threshold calibrated to a target call budget. When the call fires, the
de-tokenized context (prompt plus generations, never the call token
itself) goes to a partner adapter, whose top usable candidate is mapped
back into 1-3 base-vocabulary tokens and appended. The trace records one
entry per decision.
"""
from __future__ import annotations

import json
import subprocess
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PartnerError, RetrievalError

MAX_RETRIEVED_TOKENS = 3


@dataclass
class Candidate:
    text: str
    score: float


class PartnerAdapter:
    """Interface: ranked candidate continuations for a text context."""

    def candidates(self, context: str, max_candidates: int = 5) -> list[Candidate]:
        raise NotImplementedError


class MockPartner(PartnerAdapter):
    """Scripted partner: replays a fixed list of candidate batches.

    The script is a list whose entries are either a string (one candidate)
    or a list of [text, score] pairs; entry ``i`` answers the ``i``-th call
    and the last entry repeats once the script runs out.
    """

    def __init__(self, script: list):
        if not script:
            raise ValueError("mock partner script is empty")
        self.script = script
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "MockPartner":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def candidates(self, context: str, max_candidates: int = 5) -> list[Candidate]:
        entry = self.script[min(self.calls, len(self.script) - 1)]
        self.calls += 1
        if isinstance(entry, str):
            return [Candidate(entry, 0.0)]
        out = [Candidate(text, float(score)) for text, score in entry[:max_candidates]]
        return sorted(out, key=lambda c: -c.score)


class ProcessPartner(PartnerAdapter):
    """Wraps an external endpoint speaking the line-delimited protocol.

    One JSON request per line on stdin: {"context": str, "max_candidates":
    int}; one JSON response per line on stdout: {"candidates": [{"text":
    str, "score": float}, ...]} ranked by descending score.
    """

    def __init__(self, command: list[str] | str):
        if isinstance(command, str):
            command = command.split()
        self.proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

    def candidates(self, context: str, max_candidates: int = 5) -> list[Candidate]:
        if self.proc.poll() is not None:
            raise PartnerError("partner process exited")
        request = json.dumps({"context": context, "max_candidates": max_candidates})
        try:
            self.proc.stdin.write(request + "\n")
            self.proc.stdin.flush()
            line = self.proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise PartnerError(f"partner pipe failed: {exc}") from exc
        if not line:
            raise PartnerError("partner closed the stream")
        payload = json.loads(line)
        cands = [Candidate(c["text"], float(c.get("score", 0.0))) for c in payload["candidates"]]
        if not cands:
            raise PartnerError("partner returned no candidates")
        return cands

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.terminate()


def map_retrieval(candidates: list[Candidate], tokenizer, max_tokens: int = MAX_RETRIEVED_TOKENS) -> tuple[list[int], bool]:
    """Map ranked partner text pieces onto base-vocabulary token ids.

    Takes the best candidate that encodes at all; pieces longer than
    ``max_tokens`` tokens are truncated (greedy left-to-right encoding
    keeps the decoded prefix a prefix of the piece). Returns the ids plus
    a flag marking that truncation happened. Raises RetrievalError when no
    candidate is encodable.
    """
    if not candidates:
        raise RetrievalError("no candidates given")
    for cand in candidates:
        try:
            ids = tokenizer.encode(cand.text)
        except ValueError:
            continue
        if not ids:
            continue
        if len(ids) > max_tokens:
            return ids[:max_tokens], True
        return ids, False
    raise RetrievalError("no candidate piece has a base-vocabulary encoding")


def calibrate_threshold(
    history,
    target_ratio: float,
    calls_so_far: int,
    emitted_so_far: int,
    window: int = 512,
) -> float:
    """Call-logit threshold tracking a target budget over recent history.

    The effective ratio r' = clamp(target + (target*emitted - calls)/window,
    0, 1) raises the quota when calls lag the budget and lowers it when
    they run ahead; the threshold is the empirical (1 - r') quantile of the
    history window. An unfilled window yields +inf (never call during
    warm-up).
    """
    if len(history) < window:
        return float("inf")
    r = target_ratio + (target_ratio * emitted_so_far - calls_so_far) / window
    r = min(1.0, max(0.0, r))
    if r <= 0.0:
        return float("inf")
    buf = np.fromiter(history, dtype=np.float64)
    return float(np.quantile(buf, 1.0 - r, method="higher"))


@dataclass
class CascadeSession:
    prompt_ids: list[int]
    tokenizer: object
    partner: PartnerAdapter | None = None
    max_new_tokens: int = 256
    repetition_penalty: float = 1.2
    target_call_ratio: float = 0.15
    quantile_window: int = 512
    eot_id: int | None = None
    suppress_calls: bool = False  # threshold pinned at +inf

    generated: list[int] = field(default_factory=list)
    call_logit_history: deque = field(default_factory=deque)
    calls_made: int = 0
    tokens_emitted: int = 0
    threshold: float = float("inf")
    trace: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.call_logit_history = deque(maxlen=self.quantile_window)


def apply_repetition_penalty(logits: np.ndarray, generated: list[int], penalty: float) -> np.ndarray:
    """CTRL-style: damp logits of already-generated tokens (prompt excluded)."""
    if penalty <= 1.0 or not generated:
        return logits
    out = logits.copy()
    for tok in set(generated):
        v = out[tok]
        out[tok] = v * penalty if v < 0 else v / penalty
    return out


def generate(session: CascadeSession, model) -> str:
    """Run the cascade loop until the length limit or end-of-text.

    Returns the decoded generation (prompt excluded). The session's trace
    gets one record per decision step with the acting logits, threshold,
    and outcome; ``tokens_emitted`` counts decision steps.
    """
    call_id = model.config.vocab_size - 1
    context = model.config.context
    if not session.prompt_ids:
        raise ValueError("prompt must contain at least one token")
    while len(session.generated) < session.max_new_tokens:
        ids = session.prompt_ids + session.generated
        ids = ids[-context:]
        logits = model.forward(np.asarray(ids, dtype=np.int64)[None, :])[0, -1].astype(np.float64)
        logits = apply_repetition_penalty(logits, session.generated, session.repetition_penalty)
        call_logit = float(logits[call_id])

        if session.suppress_calls:
            session.threshold = float("inf")
        else:
            session.call_logit_history.append(call_logit)
            session.threshold = calibrate_threshold(
                session.call_logit_history,
                session.target_call_ratio,
                session.calls_made,
                session.tokens_emitted,
                session.quantile_window,
            )
        do_call = call_logit >= session.threshold

        record = {
            "step": session.tokens_emitted,
            "call_logit": call_logit,
            "threshold": session.threshold,
            "call": bool(do_call),
        }
        if do_call:
            appended = _delegate(session, model, logits, call_id, record)
        else:
            masked = logits.copy()
            masked[call_id] = -np.inf
            appended = [int(masked.argmax())]
            record["token"] = appended[0]
        session.generated.extend(appended)
        session.tokens_emitted += 1
        session.trace.append(record)
        if session.eot_id is not None and appended and appended[-1] == session.eot_id:
            break
    return session.tokenizer.decode(session.generated)


def _delegate(session: CascadeSession, model, logits: np.ndarray, call_id: int, record: dict) -> list[int]:
    context_text = session.tokenizer.decode(session.prompt_ids + session.generated)
    cands = None
    if session.partner is not None:
        for _attempt in range(2):  # one retry, then fall back to the model itself
            try:
                cands = session.partner.candidates(context_text)
                break
            except Exception as exc:  # adapter code is foreign
                record.setdefault("partner_errors", []).append(f"{type(exc).__name__}: {exc}")
                cands = None
    if cands is None:
        masked = logits.copy()
        masked[call_id] = -np.inf
        tok = int(masked.argmax())
        record.update({"call": False, "fallback": "partner_failed", "token": tok})
        return [tok]
    try:
        ids, truncated = map_retrieval(cands, session.tokenizer)
    except RetrievalError as exc:
        masked = logits.copy()
        masked[call_id] = -np.inf
        tok = int(masked.argmax())
        record.update({"call": False, "fallback": f"retrieval: {exc}", "token": tok})
        return [tok]
    session.calls_made += 1
    record["retrieved"] = ids
    record["retrieved_text"] = session.tokenizer.decode(ids)
    if truncated:
        record["truncated_to_cap"] = True
    return ids
