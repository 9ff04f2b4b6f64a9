"""Validation-time call masks, call/non-call losses, the fact-leakage
probe, and the acceptability-judge harness."""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import NumericError, VerdictParseError
from .kernels import token_nll
from .masks import round_half_up


def extract_eval_call_mask(logits: np.ndarray, fraction: float = 0.15, call_id: int | None = None) -> np.ndarray:
    """Validation call mask with exact cardinality.

    Positions where the call logit is the top logit are marked; when they
    exceed the quota (round-half-up of fraction times positions) only the
    highest call logits among them are kept, and when they fall short the
    positions with the next-highest call logits fill the gap.
    """
    logits = np.asarray(logits)
    if logits.ndim == 3:
        logits = logits.reshape(-1, logits.shape[-1])
    n, v = logits.shape
    if call_id is None:
        call_id = v - 1
    quota = min(round_half_up(fraction * n), n)
    mask = np.zeros(n, dtype=bool)
    if quota == 0:
        return mask
    call_logits = logits[:, call_id]
    is_top = call_logits >= logits.max(axis=1)  # ties count as top
    top_idx = np.flatnonzero(is_top)
    if len(top_idx) >= quota:
        order = np.argsort(-call_logits[top_idx], kind="stable")
        mask[top_idx[order[:quota]]] = True
    else:
        mask[top_idx] = True
        rest = np.flatnonzero(~is_top)
        order = np.argsort(-call_logits[rest], kind="stable")
        mask[rest[order[: quota - len(top_idx)]]] = True
    return mask


def call_noncall_losses(
    model_logits: np.ndarray,
    baseline_logits: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray,
    call_id: int | None = None,
) -> dict[str, float]:
    """Mean NLL on the masked (call) and unmasked (non-call) partitions.

    The call loss uses the plain distribution; the non-call loss uses the
    call-excluded renormalized one. The baseline model is evaluated on the
    *same* mask so the numbers are comparable.
    """
    model_logits = np.asarray(model_logits).reshape(-1, np.asarray(model_logits).shape[-1])
    baseline_logits = np.asarray(baseline_logits).reshape(-1, np.asarray(baseline_logits).shape[-1])
    targets = np.asarray(targets).reshape(-1)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if call_id is None:
        call_id = model_logits.shape[1] - 1
    if not mask.any():
        raise NumericError("empty call partition: call loss is undefined")
    if mask.all():
        raise NumericError("empty non-call partition: non-call loss is undefined")

    def _pair(logits):
        call_loss = float(token_nll(logits[mask], targets[mask]).mean())
        noncall = float(token_nll(logits[~mask], targets[~mask], call_id=call_id, exclude_call=True).mean())
        return call_loss, noncall

    m_call, m_non = _pair(model_logits)
    b_call, b_non = _pair(baseline_logits)
    return {
        "model_call_loss": m_call,
        "model_noncall_loss": m_non,
        "baseline_call_loss": b_call,
        "baseline_noncall_loss": b_non,
    }


def _normalize_ws(text: str) -> str:
    return " ".join(text.split()).casefold()


def fact_leakage(model, tokenizer, qa_items: list[tuple[str, str]], max_new_tokens: int = 8,
                 eot_id: int | None = None) -> float:
    """Fraction of probes whose gold answer appears in a call-suppressed
    generation (case-insensitive substring after whitespace normalization).
    Lower is better: it measures facts stored parametrically."""
    from .cascade import CascadeSession, generate

    if not qa_items:
        raise NumericError("no probe items: leakage mean is undefined")
    leaked = 0
    for prompt, gold in qa_items:
        session = CascadeSession(
            prompt_ids=tokenizer.encode(prompt),
            tokenizer=tokenizer,
            partner=None,
            max_new_tokens=max_new_tokens,
            suppress_calls=True,
            eot_id=eot_id,
        )
        text = generate(session, model)
        if _normalize_ws(gold) in _normalize_ws(text):
            leaked += 1
    return leaked / len(qa_items)


# ---------------------------------------------------------------------------
# acceptability judging
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JudgeVerdict:
    explanation: str
    output: int

    def __post_init__(self):
        if self.output not in (0, 1):
            raise ValueError("verdict output must be 0 or 1")


def judge_prompt_template() -> str:
    return (resources.files("callkit.data") / "judge_prompt.txt").read_text(encoding="utf-8")


def fill_judge_prompt(starting_text: str, proposed_token: str, reference_token: str) -> str:
    template = judge_prompt_template()
    return template.format(starting_text, proposed_token, reference_token)


_OUTPUT_RE = re.compile(r"output\W*([01])\b", re.IGNORECASE)


def parse_judge_response(response: str) -> JudgeVerdict:
    """Pull the explanation and trailing binary label out of a judge reply."""
    matches = list(_OUTPUT_RE.finditer(response))
    if not matches:
        # fall back to a bare trailing 0/1
        tail = response.strip().splitlines()
        if tail and tail[-1].strip() in ("0", "1"):
            return JudgeVerdict(explanation="\n".join(tail[:-1]).strip(), output=int(tail[-1].strip()))
        raise VerdictParseError(f"no binary label in judge response: {response[:120]!r}")
    label = int(matches[-1].group(1))
    explanation = response[: matches[-1].start()].strip()
    return JudgeVerdict(explanation=explanation, output=label)


class JudgeAdapter:
    """Interface: raw text response for a filled judge prompt."""

    def respond(self, prompt: str) -> str:
        raise NotImplementedError


class MockJudge(JudgeAdapter):
    """Deterministic offline judge.

    Exact proposed==reference match returns 1; otherwise a lookup table of
    (proposed, reference) pairs decides; unknown pairs default to 0. The
    bundled table carries the canonical examples.
    """

    def __init__(self, table: dict[tuple[str, str], int] | None = None):
        if table is None:
            raw = json.loads((resources.files("callkit.data") / "judge_mock_script.json").read_text("utf-8"))
            table = {(e["proposed"], e["reference"]): int(e["output"]) for e in raw}
        self.table = table

    def respond(self, prompt: str) -> str:
        proposed = _extract_field(prompt, "proposed_next_token")
        reference = _extract_field(prompt, "reference_next_token")
        if proposed.strip() == reference.strip():
            verdict = 1
            why = "exact match with the reference token"
        else:
            verdict = self.table.get((proposed.strip(), reference.strip()), 0)
            why = "table lookup" if (proposed.strip(), reference.strip()) in self.table else "default: differing tokens"
        return f"**explanation**: {why}\n**output**: {verdict}"


def _extract_field(prompt: str, name: str) -> str:
    matches = re.findall(rf"\*\*{name}\*\*:\s*'(.*?)'", prompt, flags=re.DOTALL)
    if not matches:
        raise VerdictParseError(f"prompt lacks field {name}")
    return matches[-1]


def judge_acceptability(
    starting_text: str,
    proposed_token: str,
    reference_token: str,
    judge: JudgeAdapter,
) -> JudgeVerdict:
    """Fill the acceptability prompt, query the judge, parse the verdict.

    An unparseable response is retried once before raising."""
    prompt = fill_judge_prompt(starting_text, proposed_token, reference_token)
    last_error: VerdictParseError | None = None
    for _ in range(2):
        response = judge.respond(prompt)
        try:
            return parse_judge_response(response)
        except VerdictParseError as exc:
            last_error = exc
    raise last_error


# ---------------------------------------------------------------------------
# loss-quartile x fact/non-fact acceptability binning
# ---------------------------------------------------------------------------

def analyze_judged_records(records: list[dict]) -> list[dict]:
    """Bin judged records into loss quartiles split by factuality.

    Records carry {loss, is_fact, output}; the result has one row per
    (quartile, factual) cell with the mean acceptability, plus marginal
    fact/non-fact rows (quartile = "all").
    """
    if not records:
        raise NumericError("no judged records")
    losses = np.array([r["loss"] for r in records], dtype=np.float64)
    outputs = np.array([int(r["output"]) for r in records])
    is_fact = np.array([bool(r["is_fact"]) for r in records])
    qs = np.quantile(losses, [0.25, 0.5, 0.75])
    quartile = np.digitize(losses, qs)  # 0..3
    rows = []
    for q in range(4):
        for fact_flag in (False, True):
            sel = (quartile == q) & (is_fact == fact_flag)
            rows.append(
                {
                    "quartile": f"q{q + 1}",
                    "factual": fact_flag,
                    "count": int(sel.sum()),
                    "mean_acceptability": float(outputs[sel].mean()) if sel.any() else float("nan"),
                }
            )
    for fact_flag in (False, True):
        sel = is_fact == fact_flag
        rows.append(
            {
                "quartile": "all",
                "factual": fact_flag,
                "count": int(sel.sum()),
                "mean_acceptability": float(outputs[sel].mean()) if sel.any() else float("nan"),
            }
        )
    return rows


def write_analysis(rows: list[dict], csv_path: str | Path, svg_path: str | Path | None = None) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["quartile", "factual", "count", "mean_acceptability"])
        writer.writeheader()
        writer.writerows(rows)
    if svg_path is not None:
        _plot_analysis(rows, svg_path)


def _plot_analysis(rows: list[dict], svg_path: str | Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    quartiles = ["q1", "q2", "q3", "q4"]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    by_loss = {
        fact: [next(r["mean_acceptability"] for r in rows if r["quartile"] == q and r["factual"] is fact)
               for q in quartiles]
        for fact in (False, True)
    }
    x = np.arange(4)
    axes[0].bar(x - 0.2, by_loss[False], width=0.4, label="non-fact")
    axes[0].bar(x + 0.2, by_loss[True], width=0.4, label="fact")
    axes[0].set_xticks(x, quartiles)
    axes[0].set_xlabel("loss quartile")
    axes[0].set_ylabel("mean acceptability")
    axes[0].legend()
    marg = [next(r["mean_acceptability"] for r in rows if r["quartile"] == "all" and r["factual"] is fact)
            for fact in (False, True)]
    axes[1].bar(["non-fact", "fact"], marg)
    axes[1].set_ylabel("mean acceptability")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)
