"""Subword tokenization, label propagation, and judge-annotation conversion.

The toolkit treats the tokenizer as an injected interface: ``encode``,
``decode``, ``piece`` listing, and character offsets. The bundled reference
implementation is a small BPE model trained over the fixture corpus and
frozen into ``data/bpe_vocab.json``. Conventions:

* ``▁`` marks a word preceded by exactly one space (SentencePiece
  style); other whitespace is encoded as explicit whitespace tokens.
* digits never merge with each other or with letters, so numbers tokenize
  one digit at a time (the marker may attach to the first digit);
* characters outside the trained alphabet fall back to UTF-8 byte tokens,
  which keeps decode(encode(text)) == text for arbitrary input.
"""
from __future__ import annotations

import json
import re as _re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .conllu import ParsedDocument
from .errors import AlignmentError, MarkupError
from .labeling import WordLabel

MARKER = "▁"
PAD, EOT = "<PAD>", "<EOT>"
CALL_TOKEN = "<CALL>"

# token-class codes used in arrays and binary files
CLASS_OTHER, CLASS_FACT, CLASS_GRAMMATICAL = 0, 1, 2

CLASS_CODES = {"other": CLASS_OTHER, "fact": CLASS_FACT, "grammatical": CLASS_GRAMMATICAL}
CLASS_NAMES = {v: k for k, v in CLASS_CODES.items()}


@dataclass(frozen=True)
class Vocabulary:
    """Base token inventory extended by the reserved call token."""

    tokens: tuple[str, ...]
    call_token_id: int

    @property
    def size(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_base(cls, base_tokens: list[str] | tuple[str, ...]) -> "Vocabulary":
        if CALL_TOKEN in base_tokens:
            raise ValueError(f"{CALL_TOKEN} must not be in the base vocabulary")
        tokens = tuple(base_tokens) + (CALL_TOKEN,)
        return cls(tokens=tokens, call_token_id=len(tokens) - 1)

    def __post_init__(self):
        if not (0 <= self.call_token_id < len(self.tokens)):
            raise ValueError("call_token_id out of range")
        if self.tokens.count(CALL_TOKEN) != 1 or self.tokens[self.call_token_id] != CALL_TOKEN:
            raise ValueError(f"{CALL_TOKEN} must appear exactly once, at call_token_id")


def _byte_token(b: int) -> str:
    return f"<0x{b:02X}>"


_FORBIDDEN_WS = "\n\t "

# the run contains no "\n\t " (stripped by the caller); everything else,
# including exotic unicode whitespace, must land in exactly one segment
_SEGMENT_RE = _re.compile(r"\w+|[^\w]+", _re.UNICODE)


def _pretokenize(text: str) -> list[tuple[str, int, bool]]:
    """Split text into (segment, offset, marked) pre-tokens.

    A segment is a single whitespace character or a word/punctuation run
    (split at word boundaries, so a trailing comma is its own segment and
    word-by-word encoding matches whole-text encoding). ``marked`` is True
    for the first segment after exactly one space; the space itself is
    consumed by the marker. Offsets point at the segment's first character.
    """
    forms: list[tuple[str, int, bool]] = []
    i, n = 0, len(text)
    prev_gap = ""  # whitespace accumulated since the last segment
    gap_start = 0
    while i < n:
        c = text[i]
        if c in _FORBIDDEN_WS:
            if not prev_gap:
                gap_start = i
            prev_gap += c
            i += 1
            continue
        j = i
        while j < n and text[j] not in _FORBIDDEN_WS:
            j += 1
        segments = [(m.group(0), i + m.start()) for m in _SEGMENT_RE.finditer(text[i:j])]
        if prev_gap == " ":
            first, off = segments[0]
            forms.append((first, off, True))
            forms.extend((s, o, False) for s, o in segments[1:])
        else:
            for k, ws in enumerate(prev_gap):
                forms.append((ws, gap_start + k, False))
            forms.extend((s, o, False) for s, o in segments)
        prev_gap = ""
        i = j
    for k, ws in enumerate(prev_gap):
        forms.append((ws, gap_start + k, False))
    return forms


def _merge_allowed(left: str, right: str) -> bool:
    if left == MARKER and len(right) == 1 and right.isdigit():
        return True
    if any(c.isdigit() for c in left) or any(c.isdigit() for c in right):
        return False
    if left in _FORBIDDEN_WS or right in _FORBIDDEN_WS:
        return False
    return True


class BpeTokenizer:
    """Greedy-merge BPE over whitespace pre-tokens with byte fallback."""

    def __init__(self, alphabet: list[str], merges: list[tuple[str, str]]):
        self.specials = [PAD, EOT]
        self.byte_tokens = [_byte_token(b) for b in range(256)]
        self.alphabet = list(alphabet)
        if MARKER not in self.alphabet:
            self.alphabet.insert(0, MARKER)
        self._alpha_set = set(self.alphabet)
        self.merges = [tuple(m) for m in merges]
        pieces = self.specials + self.byte_tokens + self.alphabet
        for a, b in self.merges:
            pieces.append(a + b)
        self.pieces: list[str] = pieces
        self.piece_to_id = {p: i for i, p in enumerate(pieces)}
        if len(self.piece_to_id) != len(pieces):
            raise ValueError("duplicate pieces in vocabulary")
        self.merge_rank = {m: r for r, m in enumerate(self.merges)}
        self.pad_id = self.piece_to_id[PAD]
        self.eot_id = self.piece_to_id[EOT]
        self._word_cache: dict[tuple[str, bool], list[int]] = {}

    # -- construction ----------------------------------------------------
    @classmethod
    def train(cls, texts: list[str], vocab_size: int = 2048, min_count: int = 2) -> "BpeTokenizer":
        """Learn merges from a text corpus. Deterministic: ties in pair
        frequency break on the lexicographically smaller pair."""
        form_counts: dict[str, int] = {}
        for text in texts:
            for seg, _, marked in _pretokenize(text):
                form = (MARKER + seg) if marked else seg
                form_counts[form] = form_counts.get(form, 0) + 1
        alphabet = sorted({c for form in form_counts for c in form if c != MARKER} | {MARKER})
        base = 2 + 256 + len(alphabet)
        words: list[tuple[list[str], int]] = [
            ([c for c in form], cnt) for form, cnt in sorted(form_counts.items())
        ]
        merges: list[tuple[str, str]] = []
        while base + len(merges) < vocab_size:
            pair_counts: dict[tuple[str, str], int] = {}
            for symbols, cnt in words:
                for a, b in zip(symbols, symbols[1:]):
                    if _merge_allowed(a, b):
                        pair_counts[(a, b)] = pair_counts.get((a, b), 0) + cnt
            if not pair_counts:
                break
            best = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
            if best[1] < min_count:
                break
            a, b = best[0]
            merges.append((a, b))
            merged = a + b
            for symbols, _ in words:
                i = 0
                while i < len(symbols) - 1:
                    if symbols[i] == a and symbols[i + 1] == b:
                        symbols[i : i + 2] = [merged]
                    else:
                        i += 1
        return cls(alphabet, merges)

    def save(self, path: str | Path) -> None:
        payload = {"version": 1, "alphabet": self.alphabet, "merges": [list(m) for m in self.merges]}
        Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "BpeTokenizer":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(payload["alphabet"], [tuple(m) for m in payload["merges"]])

    @classmethod
    def bundled(cls) -> "BpeTokenizer":
        data = resources.files("callkit.data") / "bpe_vocab.json"
        payload = json.loads(data.read_text(encoding="utf-8"))
        return cls(payload["alphabet"], [tuple(m) for m in payload["merges"]])

    # -- core ------------------------------------------------------------
    def vocabulary(self) -> Vocabulary:
        return Vocabulary.from_base(self.pieces)

    def _encode_form(self, segment: str, marked: bool = False) -> list[int]:
        key = (segment, marked)
        cached = self._word_cache.get(key)
        if cached is not None:
            return cached
        symbols: list[str] = [MARKER] if marked else []
        for c in segment:
            if c == MARKER:
                # a literal marker character in the text must survive decode
                symbols.extend(_byte_token(b) for b in c.encode("utf-8"))
            elif c in self._alpha_set:
                symbols.append(c)
            else:
                symbols.extend(_byte_token(b) for b in c.encode("utf-8"))
        while len(symbols) > 1:
            best_rank, best_i = None, -1
            for i, pair in enumerate(zip(symbols, symbols[1:])):
                rank = self.merge_rank.get(pair)
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank, best_i = rank, i
            if best_rank is None:
                break
            symbols[best_i : best_i + 2] = [symbols[best_i] + symbols[best_i + 1]]
        ids = [self.piece_to_id[s] for s in symbols]
        self._word_cache[key] = ids
        return ids

    def encode(self, text: str) -> list[int]:
        out: list[int] = []
        for seg, _, marked in _pretokenize(text):
            out.extend(self._encode_form(seg, marked))
        return out

    def encode_with_offsets(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        """Token ids plus the character span of each token's content.

        The span excludes the marker's implicit space, so spans are always
        substrings of ``text`` and concatenate in order.
        """
        ids: list[int] = []
        spans: list[tuple[int, int]] = []
        for seg, offset, marked in _pretokenize(text):
            pos = offset
            pending_bytes = 0  # bytes of the current char already consumed
            for tid in self._encode_form(seg, marked):
                piece = self.pieces[tid]
                if _is_byte_token(piece):
                    # every byte token of a char spans that one character
                    spans.append((pos, pos + 1))
                    ids.append(tid)
                    pending_bytes += 1
                    char = text[pos] if pos < len(text) else ""
                    if pending_bytes >= len(char.encode("utf-8")):
                        pos += 1
                        pending_bytes = 0
                    continue
                content = piece_content(piece)
                spans.append((pos, pos + len(content)))
                ids.append(tid)
                pos += len(content)
        return ids, spans

    def decode(self, ids: list[int] | np.ndarray) -> str:
        parts: list[str] = []
        byte_run: list[int] = []

        def flush_bytes():
            if byte_run:
                parts.append(bytes(byte_run).decode("utf-8", errors="strict"))
                byte_run.clear()

        for tid in ids:
            piece = self.pieces[int(tid)]
            if piece in (PAD, EOT):
                flush_bytes()
                continue
            if _is_byte_token(piece):
                byte_run.append(int(piece[3:5], 16))
                continue
            flush_bytes()
            parts.append(piece.replace(MARKER, " "))
        flush_bytes()
        return "".join(parts)


def _is_byte_token(piece: str) -> bool:
    return len(piece) == 6 and piece.startswith("<0x") and piece.endswith(">")


def piece_content(piece: str) -> str:
    """Piece text without the space marker."""
    return piece.replace(MARKER, "")


@dataclass
class TokenLabelSequence:
    """Per-subword-token classes aligned to the source words."""

    token_ids: np.ndarray  # int32
    classes: np.ndarray  # uint8, CLASS_* codes
    word_of_token: np.ndarray  # int32
    call_labels: np.ndarray | None = None  # uint8 0/1, from judge conversion

    def __post_init__(self):
        if not (len(self.token_ids) == len(self.classes) == len(self.word_of_token)):
            raise ValueError("token_ids, classes, word_of_token must be equally long")
        if self.call_labels is not None and len(self.call_labels) != len(self.token_ids):
            raise ValueError("call_labels length mismatch")

    def __len__(self) -> int:
        return len(self.token_ids)


def propagate_labels(
    doc: ParsedDocument,
    labels: list[WordLabel],
    tokenizer: BpeTokenizer,
) -> TokenLabelSequence:
    """Tokenize each word and let every subword inherit the word's class.

    Explicit whitespace tokens (newlines, tabs, runs of spaces) attach to
    the following word, like the space marker does. Raises AlignmentError
    when the pieces do not reconstruct a word's surface.
    """
    words = doc.words()
    if len(labels) != len(words):
        raise ValueError(f"{len(labels)} labels for {len(words)} words")
    token_ids: list[int] = []
    classes: list[int] = []
    word_of: list[int] = []
    for wi, (word, label) in enumerate(zip(words, labels)):
        preceding = words[wi - 1].whitespace_after if wi > 0 else ""
        marked = preceding == " "
        gap = "" if marked else preceding
        # explicit whitespace tokens separate words; they attach to the
        # following word positionally but count as grammatical
        gap_ids: list[int] = []
        for seg, _, m in _pretokenize(gap):
            gap_ids.extend(tokenizer._encode_form(seg, m))
        ids: list[int] = []
        for seg, _, m in _pretokenize_word(word.surface, marked):
            ids.extend(tokenizer._encode_form(seg, m))
        rebuilt = tokenizer.decode(gap_ids + ids)
        expected = gap + (" " if marked else "") + word.surface
        if rebuilt != expected:
            raise AlignmentError(f"word {wi} ({word.surface!r}): pieces rebuild {rebuilt!r}")
        cls = CLASS_CODES[label.word_class]
        token_ids.extend(gap_ids + ids)
        classes.extend([CLASS_GRAMMATICAL] * len(gap_ids) + [cls] * len(ids))
        word_of.extend([wi] * (len(gap_ids) + len(ids)))
    return TokenLabelSequence(
        token_ids=np.asarray(token_ids, dtype=np.int32),
        classes=np.asarray(classes, dtype=np.uint8),
        word_of_token=np.asarray(word_of, dtype=np.int32),
    )


def _pretokenize_word(surface: str, marked: bool) -> list[tuple[str, int, bool]]:
    """Pretokenize one word: segments at word boundaries, the first one
    carrying the space marker when the word follows a single space."""
    segments = [(m.group(0), m.start()) for m in _SEGMENT_RE.finditer(surface)]
    out = [(segments[0][0], segments[0][1], marked)]
    out.extend((s, o, False) for s, o in segments[1:])
    return out


DB_START, DB_SEP, DB_RETRIEVE, DB_END = "<|db_start|>", "<|sep|>", "<|db_retrieve|>", "<|db_end|>"


def convert_judge_annotations(
    annotated: str,
    tokenizer: BpeTokenizer,
) -> tuple[str, np.ndarray]:
    """Strip database-lookup markup and emit per-token call labels.

    Grammar: ``<|db_start|> entity <|sep|> relation <|db_retrieve|> value
    <|db_end|>``. The query segment (through ``<|db_retrieve|>``) and any
    whitespace immediately before it are removed; the value text stays in
    place and its word-like tokens (pieces containing an alphanumeric
    character) are labeled 1. Unbalanced or nested markup raises
    MarkupError with the byte offset; unknown variants are rejected.
    """
    markers = sorted(
        [(m.start(), tok) for tok in (DB_START, DB_SEP, DB_RETRIEVE, DB_END) for m in _finditer(annotated, tok)]
    )
    clean_parts: list[str] = []
    value_spans: list[tuple[int, int]] = []  # spans in CLEAN text
    pos = 0
    clean_len = 0
    state = "outside"
    seen_sep = False
    i = 0
    while i < len(markers):
        offset, tok = markers[i]
        if state == "outside":
            if tok != DB_START:
                raise MarkupError(f"unexpected {tok}", offset)
            plain = annotated[pos:offset]
            stripped = plain.rstrip(" ")
            clean_parts.append(stripped)
            clean_len += len(stripped)
            state, seen_sep = "query", False
            pos = offset + len(DB_START)
        elif state == "query":
            if tok == DB_SEP:
                seen_sep = True
            elif tok == DB_RETRIEVE:
                if not seen_sep:
                    raise MarkupError("query segment lacks <|sep|>", offset)
                state = "value"
                pos = offset + len(DB_RETRIEVE)
                value_start_clean = clean_len
            elif tok == DB_START:
                raise MarkupError("nested markup", offset)
            else:
                raise MarkupError(f"unexpected {tok} inside query", offset)
            if tok == DB_SEP:
                pos = offset + len(DB_SEP)
        elif state == "value":
            if tok != DB_END:
                raise MarkupError("nested markup" if tok == DB_START else f"unexpected {tok} inside value", offset)
            value = annotated[pos:offset]
            clean_parts.append(value)
            clean_len += len(value)
            value_spans.append((value_start_clean, clean_len))
            state = "outside"
            pos = offset + len(DB_END)
        i += 1
    if state != "outside":
        raise MarkupError("unterminated markup", len(annotated))
    clean_parts.append(annotated[pos:])
    clean = "".join(clean_parts)

    ids, spans = tokenizer.encode_with_offsets(clean)
    labels = np.zeros(len(ids), dtype=np.uint8)
    for t, (a, b) in enumerate(spans):
        piece = tokenizer.pieces[ids[t]]
        if not _is_byte_token(piece) and not any(ch.isalnum() for ch in piece_content(piece)):
            continue
        for va, vb in value_spans:
            if a < vb and b > va:
                labels[t] = 1
                break
    return clean, labels


def _finditer(text: str, token: str):
    return _re.finditer(_re.escape(token), text)
