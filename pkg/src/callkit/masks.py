"""Call/ignore mask construction for every delegation method.

Each method turns a training batch (token classes, per-token losses,
optional reference losses) into a pair of binary masks: ``call`` marks
tokens whose target is replaced by the reserved call token, ``ignore``
marks tokens dropped from loss and gradient. Fractions are enforced per
minibatch with round-half-up on the valid-token count; padding tokens are
ineligible and excluded from denominators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

METHODS = (
    "baseline",
    "loss_random",
    "rho1",
    "llm_judge",
    "spacy_only",
    "lacy",
    "spacy_refloss",
    "lacy_ignorefacts",
    "lacy_ignore",
)

_NEEDS_REF = {"rho1", "spacy_refloss"}
_NEEDS_CLASSES = {"spacy_only", "lacy", "spacy_refloss", "lacy_ignorefacts", "lacy_ignore"}

CLASS_OTHER, CLASS_FACT, CLASS_GRAMMATICAL = 0, 1, 2


@dataclass(frozen=True)
class MethodSpec:
    method: str
    call_fraction: float = 0.15
    ignore_fraction: float = 0.15
    rng_seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}")
        if not (0.0 <= self.call_fraction <= 1.0 and 0.0 <= self.ignore_fraction <= 1.0):
            raise ConfigurationError("fractions must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "call_fraction": self.call_fraction,
            "ignore_fraction": self.ignore_fraction,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        return cls(**d)


@dataclass
class TrainingBatch:
    token_ids: np.ndarray
    classes: np.ndarray | None = None  # CLASS_* codes; judge call bits for llm_judge
    losses: np.ndarray | None = None  # current-model NLL, nats
    ref_losses: np.ndarray | None = None
    padding: np.ndarray | None = None  # validity bit, 1 = real token

    def __post_init__(self):
        n = len(self.token_ids)
        for name in ("classes", "losses", "ref_losses", "padding"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise ValueError(f"{name} length {len(arr)} != {n} tokens")
        if self.padding is None:
            self.padding = np.ones(n, dtype=bool)
        else:
            self.padding = np.asarray(self.padding).astype(bool)

    @property
    def valid(self) -> np.ndarray:
        return self.padding


@dataclass
class DelegationMask:
    call: np.ndarray  # bool per token
    ignore: np.ndarray  # bool per token
    spec: MethodSpec
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if np.any(self.call & self.ignore):
            raise ValueError("call and ignore masks overlap")

    @property
    def warning_count(self) -> int:
        return len(self.warnings)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def select_top_fraction(values: np.ndarray, eligible: np.ndarray, count: int) -> np.ndarray:
    """Indices of the ``count`` largest values among eligible tokens.

    Returns min(count, eligible count) indices; ties break toward the lower
    index so masks are reproducible across platforms.
    """
    if count <= 0:
        return np.empty(0, dtype=np.int64)
    idx = np.flatnonzero(np.asarray(eligible, dtype=bool))
    if len(idx) == 0:
        return np.empty(0, dtype=np.int64)
    vals = np.asarray(values, dtype=np.float64)[idx]
    order = np.argsort(-vals, kind="stable")  # stable: equal values keep index order
    take = idx[order[: min(count, len(idx))]]
    return np.sort(take)


def _batch_rng(spec: MethodSpec, ordinal: int) -> np.random.Generator:
    return np.random.default_rng([spec.rng_seed, ordinal])


def build_mask(batch: TrainingBatch, spec: MethodSpec, ordinal: int = 0) -> DelegationMask:
    """Construct the call and ignore masks for one batch.

    ``ordinal`` seeds the per-batch random stream for the sampled methods,
    derived from (rng_seed, ordinal) so batches are independent and runs
    reproducible.
    """
    n = len(batch.token_ids)
    valid = batch.valid
    n_valid = int(valid.sum())
    call = np.zeros(n, dtype=bool)
    ignore = np.zeros(n, dtype=bool)
    warnings: list[str] = []

    if spec.method in _NEEDS_REF and batch.ref_losses is None:
        raise ConfigurationError(f"{spec.method} requires reference losses")
    if spec.method in _NEEDS_CLASSES and batch.classes is None:
        raise ConfigurationError(f"{spec.method} requires token classes")
    if spec.method == "llm_judge" and batch.classes is None:
        raise ConfigurationError("llm_judge requires judge labels in the classes field")
    needs_loss = spec.method in ("rho1", "lacy", "lacy_ignorefacts", "lacy_ignore")
    if needs_loss and batch.losses is None:
        raise ConfigurationError(f"{spec.method} requires per-token losses")
    if n_valid == 0:
        raise ConfigurationError("batch has no valid tokens")

    # fraction-driven methods produce an empty call mask (with a counted
    # warning) when the quota cannot reach one whole token
    target = round_half_up(spec.call_fraction * n_valid)
    quota_starved = spec.call_fraction * n_valid < 1.0
    if quota_starved and spec.method not in ("baseline", "llm_judge"):
        if spec.call_fraction > 0.0:
            warnings.append(
                f"call_fraction {spec.call_fraction} x {n_valid} valid tokens < 1; empty call mask"
            )
        target = 0

    if spec.method == "baseline":
        pass

    elif spec.method == "loss_random":
        if not quota_starved:
            rng = _batch_rng(spec, ordinal)
            draws = rng.random(n) < spec.call_fraction
            call = draws & valid

    elif spec.method == "rho1":
        rho = np.asarray(batch.losses, dtype=np.float64) - np.asarray(batch.ref_losses, dtype=np.float64)
        picked = select_top_fraction(-rho, valid, target)  # bottom of the rho score
        call[picked] = True

    elif spec.method == "llm_judge":
        call = (np.asarray(batch.classes) != 0) & valid

    elif spec.method == "spacy_only":
        facts = np.flatnonzero((np.asarray(batch.classes) == CLASS_FACT) & valid)
        if len(facts) < target:
            warnings.append(f"only {len(facts)} fact tokens for a call quota of {target}")
            call[facts] = True
        else:
            rng = _batch_rng(spec, ordinal)
            picked = rng.choice(facts, size=target, replace=False)
            call[picked] = True

    elif spec.method in ("lacy", "spacy_refloss", "lacy_ignorefacts", "lacy_ignore"):
        scores = batch.ref_losses if spec.method == "spacy_refloss" else batch.losses
        fact_eligible = (np.asarray(batch.classes) == CLASS_FACT) & valid
        n_facts = int(fact_eligible.sum())
        if n_facts < target:
            warnings.append(f"only {n_facts} fact tokens for a call quota of {target}")
        picked = select_top_fraction(np.asarray(scores, dtype=np.float64), fact_eligible, target)
        call[picked] = True

        if spec.method in ("lacy_ignorefacts", "lacy_ignore"):
            ignore = fact_eligible & ~call
        if spec.method == "lacy_ignore":
            ignore_target = round_half_up(spec.ignore_fraction * n_valid)
            deficit = ignore_target - int(ignore.sum())
            if deficit > 0:
                pool = (np.asarray(batch.classes) == CLASS_OTHER) & valid & ~call & ~ignore
                extra = select_top_fraction(np.asarray(batch.losses, dtype=np.float64), pool, deficit)
                ignore[extra] = True
                if len(extra) < deficit:
                    warnings.append(
                        f"ignore pool exhausted: {int(ignore.sum())} ignored of a quota of {ignore_target}"
                    )

    return DelegationMask(call=call, ignore=ignore, spec=spec, warnings=warnings)
