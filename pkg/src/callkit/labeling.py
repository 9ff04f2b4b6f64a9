"""Word-level semantic classification: fact, grammatical, or other.

A word is a *fact* when it is the first in-document mention of informative
content: a named entity, a qualifying noun chunk (person-like, org-like,
proper noun, predicative attribute / direct object / appositive common
noun), or a number. Repeat mentions are *other* because an autoregressive
model can recover them from context. Determiners, prepositions,
conjunctions, auxiliaries, and punctuation are *grammatical*.

Rule precedence follows the annotation steps: named entities first, then
supplementary chunk detection (sub-rules a-e, first match wins), then
grammatical part-of-speech classification, then the default.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field as dc_field
from importlib import resources
from pathlib import Path

from .conllu import ParsedDocument, ParsedWord, ROOT_HEAD, split_chunks_on_whitespace

FACT = "fact"
GRAMMATICAL = "grammatical"
OTHER = "other"

# reasons
NAMED_ENTITY_FIRST = "named_entity_first"
PERSON_COMPONENT = "person_component"
ORG_KEYWORD = "org_keyword"
PROPER_NOUN = "proper_noun"
PREDICATIVE_ATTRIBUTE = "predicative_attribute"
DIRECT_OBJECT = "direct_object"
APPOSITIVE = "appositive"
NUMERIC_FIRST = "numeric_first"
DETERMINER_LIKE = "determiner_like"
REPEAT_MENTION = "repeat_mention"
DEFAULT_OTHER = "default_other"

FACT_REASONS = frozenset(
    {
        NAMED_ENTITY_FIRST,
        PERSON_COMPONENT,
        ORG_KEYWORD,
        PROPER_NOUN,
        PREDICATIVE_ATTRIBUTE,
        DIRECT_OBJECT,
        APPOSITIVE,
        NUMERIC_FIRST,
    }
)

GRAMMATICAL_POS = frozenset({"DET", "ADP", "CCONJ", "SCONJ", "CONJ", "AUX", "PUNCT"})

_LEADING_ARTICLES = frozenset({"a", "an", "the"})

_COMMON_NOUN_ROLES = {
    "attr": PREDICATIVE_ATTRIBUTE,
    "dobj": DIRECT_OBJECT,
    "appos": APPOSITIVE,
}

_norm_strip = re.compile(r"[^0-9a-z\s]+")
_norm_ws = re.compile(r"\s+")


@dataclass(frozen=True)
class WordLabel:
    word_class: str
    reason: str

    def __post_init__(self):
        if self.word_class == GRAMMATICAL and self.reason != DETERMINER_LIKE:
            raise ValueError("grammatical labels must carry the determiner_like reason")
        if self.word_class == FACT and self.reason not in FACT_REASONS:
            raise ValueError(f"{self.reason} cannot produce a fact label")


@dataclass
class LabelerConfig:
    """Keyword and cue lists; frozen defaults ship as plain-text data files."""

    org_keywords: frozenset[str]
    person_titles: frozenset[str]
    person_verbs: frozenset[str]

    @classmethod
    def default(cls) -> "LabelerConfig":
        org = _read_list(resources.files("callkit.data") / "org_keywords.txt")
        titles, verbs = set(), set()
        cues = resources.files("callkit.data") / "person_cues.txt"
        for line in cues.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            kind, _, word = line.partition(" ")
            if kind == "title":
                titles.add(word.strip().casefold())
            elif kind == "verb":
                verbs.add(word.strip().casefold())
        return cls(frozenset(org), frozenset(titles), frozenset(verbs))

    @classmethod
    def from_files(cls, org_path: Path, cues_path: Path) -> "LabelerConfig":
        org = _read_list(org_path)
        titles, verbs = set(), set()
        for line in Path(cues_path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            kind, _, word = line.partition(" ")
            if kind == "title":
                titles.add(word.strip().casefold())
            elif kind == "verb":
                verbs.add(word.strip().casefold())
        return cls(frozenset(org), frozenset(titles), frozenset(verbs))


def _read_list(path) -> set[str]:
    out = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.add(line.casefold())
    return out


_DEFAULT_CONFIG: LabelerConfig | None = None


def default_config() -> LabelerConfig:
    global _DEFAULT_CONFIG
    if _DEFAULT_CONFIG is None:
        _DEFAULT_CONFIG = LabelerConfig.default()
    return _DEFAULT_CONFIG


def normalize(text: str) -> str:
    """Case-folded, punctuation-stripped, whitespace-collapsed form."""
    folded = text.casefold()
    folded = _norm_strip.sub(" ", folded)
    return _norm_ws.sub(" ", folded).strip()


def normalize_number(surface: str) -> str:
    return "".join(c for c in surface if c.isdigit())


@dataclass
class MentionTracker:
    """Per-document record of what has already been mentioned.

    Grows monotonically within a document; a fresh tracker is used per
    document. Person entities match on any name component, every other
    category on the full normalized string.
    """

    seen_entities: dict[str, set[str]] = dc_field(default_factory=dict)
    seen_person_components: set[str] = dc_field(default_factory=set)
    seen_numbers: set[str] = dc_field(default_factory=set)

    def category(self, name: str) -> set[str]:
        return self.seen_entities.setdefault(name, set())

    def add_person(self, entity_text: str) -> None:
        norm = normalize(entity_text)
        self.category("PERSON").add(norm)
        self.seen_person_components.update(norm.split())

    def add_numbers_of(self, surface: str) -> None:
        digits = normalize_number(surface)
        if digits:
            self.seen_numbers.add(digits)


def is_person_repeat(tracker: MentionTracker, entity_text: str) -> bool:
    """True iff any whitespace-separated component of the normalized entity
    string was seen before as a person-name component."""
    if not entity_text.strip():
        raise ValueError("empty entity string")
    components = normalize(entity_text).split()
    return any(c in tracker.seen_person_components for c in components)


def _chunk_head(words: list[ParsedWord], sent_bounds: list[tuple[int, int]], start: int, end: int) -> int:
    """Document index of the chunk word whose syntactic head lies outside the
    chunk (last such word wins); falls back to the last word."""
    head_idx = end - 1
    for i in range(end - 1, start - 1, -1):
        s0, s1 = _sentence_of(sent_bounds, i)
        h = words[i].head_index
        doc_head = ROOT_HEAD if h == ROOT_HEAD else s0 + h
        if doc_head == ROOT_HEAD or not (start <= doc_head < end):
            head_idx = i
            break
    return head_idx


def _sentence_of(sent_bounds: list[tuple[int, int]], word_index: int) -> tuple[int, int]:
    for s0, s1 in sent_bounds:
        if s0 <= word_index < s1:
            return s0, s1
    raise ValueError(f"word index {word_index} outside document")


def _chunk_norm(words: list[ParsedWord], start: int, end: int) -> str:
    """Normalized chunk text with leading articles dropped, so that
    "a physicist" and "the physicist" count as the same mention."""
    i = start
    while i < end - 1 and words[i].surface.casefold() in _LEADING_ARTICLES:
        i += 1
    return normalize(" ".join(w.surface for w in words[i:end]))


def classify_chunk(
    chunk: tuple[int, int],
    doc: ParsedDocument,
    tracker: MentionTracker,
    config: LabelerConfig | None = None,
) -> WordLabel | None:
    """Decide the label a noun chunk contributes, updating the tracker.

    Returns None when no sub-rule matches (the words fall through to the
    grammatical/default steps). Sub-rules in order: person-like, org-like,
    proper noun, common noun in a factual role, numeric. Only a first
    occurrence yields a fact; a recognized repeat yields (other,
    repeat_mention).
    """
    config = config or default_config()
    words = doc.words()
    start, end = chunk
    if not (0 <= start < end <= len(words)):
        raise ValueError(f"chunk range ({start},{end}) out of bounds")
    sent_bounds = _sentence_bounds(doc)
    return _classify_chunk(words, sent_bounds, start, end, tracker, config)


def _sentence_bounds(doc: ParsedDocument) -> list[tuple[int, int]]:
    bounds = []
    off = 0
    for sent in doc.sentences:
        bounds.append((off, off + len(sent)))
        off += len(sent)
    return bounds


def _classify_chunk(
    words: list[ParsedWord],
    sent_bounds: list[tuple[int, int]],
    start: int,
    end: int,
    tracker: MentionTracker,
    config: LabelerConfig,
) -> WordLabel | None:
    head_i = _chunk_head(words, sent_bounds, start, end)
    head = words[head_i]
    chunk_words = words[start:end]
    norm = _chunk_norm(words, start, end)

    has_keyword = any(
        w.lemma.casefold() in config.org_keywords or w.surface.casefold() in config.org_keywords
        for w in chunk_words
    )

    # (a) person-like proper noun: subject/appositive role or an adjacent
    # cue; a leading determiner or an org keyword vetoes (names carry
    # neither)
    if head.pos == "PROPN" and chunk_words[0].pos != "DET" and not has_keyword:
        cue = False
        if start - 1 >= 0:
            prev = words[start - 1]
            cue = normalize(prev.surface) in config.person_titles or prev.surface.casefold() in config.person_verbs
        if not cue and end < len(words):
            nxt = words[end]
            cue = normalize(nxt.surface) in config.person_titles or nxt.surface.casefold() in config.person_verbs
        if head.dep in ("nsubj", "nsubjpass", "appos") or cue:
            text = " ".join(w.surface for w in chunk_words)
            repeat = is_person_repeat(tracker, text)
            tracker.add_person(text)
            if repeat:
                return WordLabel(OTHER, REPEAT_MENTION)
            return WordLabel(FACT, PERSON_COMPONENT)

    # (b) org-like: a known keyword in the chunk, or "the" + capitalized head
    leading_the = (
        chunk_words[0].surface.casefold() == "the"
        and len(chunk_words) > 1
        and head.surface[:1].isupper()
    )
    if has_keyword or leading_the:
        seen = tracker.category("ORG")
        if norm in seen:
            return WordLabel(OTHER, REPEAT_MENTION)
        seen.add(norm)
        return WordLabel(FACT, ORG_KEYWORD)

    # (c) proper noun
    if head.pos == "PROPN":
        seen = tracker.category("OTHER")
        if norm in seen:
            return WordLabel(OTHER, REPEAT_MENTION)
        seen.add(norm)
        return WordLabel(FACT, PROPER_NOUN)

    # (d) common noun serving as predicative attribute, direct object, or
    # appositive; pobj of a manner preposition never reaches here
    if head.pos == "NOUN" and head.dep in _COMMON_NOUN_ROLES:
        governor_is_prep = False
        if head.head_index != ROOT_HEAD:
            s0, _ = _sentence_of(sent_bounds, head_i)
            governor_is_prep = words[s0 + head.head_index].pos == "ADP"
        if not governor_is_prep:
            seen = tracker.category("COMMON")
            if norm in seen:
                return WordLabel(OTHER, REPEAT_MENTION)
            seen.add(norm)
            return WordLabel(FACT, _COMMON_NOUN_ROLES[head.dep])

    # (e) numeric: multi-digit numbers count as one number
    if head.is_numeric:
        digits = normalize_number(head.surface)
        if digits in tracker.seen_numbers:
            return WordLabel(OTHER, REPEAT_MENTION)
        tracker.seen_numbers.add(digits)
        return WordLabel(FACT, NUMERIC_FIRST)

    return None


def label_document(doc: ParsedDocument, config: LabelerConfig | None = None) -> list[WordLabel]:
    """Assign one label per word of the document.

    Chunks crossing hard whitespace are split first (idempotent), named
    entity spans are processed before chunks and win any overlap, and a
    fresh tracker scopes first-mention state to this document.
    """
    config = config or default_config()
    doc = split_chunks_on_whitespace(doc)
    words = doc.words()
    sent_bounds = _sentence_bounds(doc)
    labels: list[WordLabel | None] = [None] * len(words)
    tracker = MentionTracker()
    in_entity = [False] * len(words)

    # step 1: named entities, first mention wins
    for start, end, tag in sorted(doc.entity_spans):
        span_words = words[start:end]
        text = " ".join(w.surface for w in span_words)
        category = tag if tag in ("PERSON", "ORG", "DATE") else "OTHER"
        if category == "PERSON":
            repeat = is_person_repeat(tracker, text)
            tracker.add_person(text)
        else:
            norm = normalize(text)
            seen = tracker.category(category)
            digits = normalize_number(text) if len(span_words) == 1 and span_words[0].is_numeric else ""
            repeat = norm in seen or (digits != "" and digits in tracker.seen_numbers)
            seen.add(norm)
        for w in span_words:
            tracker.add_numbers_of(w.surface)
        for i in range(start, end):
            in_entity[i] = True
            if words[i].pos in GRAMMATICAL_POS:
                continue  # internal punctuation etc. falls to step 3
            labels[i] = WordLabel(OTHER, REPEAT_MENTION) if repeat else WordLabel(FACT, NAMED_ENTITY_FIRST)

    # step 2: supplementary detection over chunks the entities did not claim
    for start, end in sorted(doc.noun_chunks):
        if any(in_entity[i] for i in range(start, end)):
            continue
        decision = _classify_chunk(words, sent_bounds, start, end, tracker, config)
        if decision is None:
            continue
        for i in range(start, end):
            if labels[i] is None and words[i].pos not in GRAMMATICAL_POS:
                labels[i] = decision

    # step 2e for numerals no chunk covered
    in_chunk = [False] * len(words)
    for start, end in doc.noun_chunks:
        for i in range(start, end):
            in_chunk[i] = True
    for i, w in enumerate(words):
        if labels[i] is None and not in_entity[i] and not in_chunk[i] and w.is_numeric:
            digits = normalize_number(w.surface)
            if digits in tracker.seen_numbers:
                labels[i] = WordLabel(OTHER, REPEAT_MENTION)
            else:
                tracker.seen_numbers.add(digits)
                labels[i] = WordLabel(FACT, NUMERIC_FIRST)

    # steps 3 and 4: grammatical part-of-speech, then the default
    out: list[WordLabel] = []
    for i, w in enumerate(words):
        if labels[i] is not None:
            out.append(labels[i])
        elif w.pos in GRAMMATICAL_POS:
            out.append(WordLabel(GRAMMATICAL, DETERMINER_LIKE))
        else:
            out.append(WordLabel(OTHER, DEFAULT_OTHER))
    return out
