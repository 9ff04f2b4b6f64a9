"""CoNLL-U ingest and the normalized document model.

Documents arrive as CoNLL-U with NER and noun-chunk annotations carried in
the MISC column, so any parser that can emit these fields can feed the
toolkit. Recognized MISC keys:

    NER=B-<TAG> / NER=I-<TAG>   BIO entity tag (PERSON, ORG, DATE, OTHER)
    ChunkStart=Yes              first word of a noun chunk
    ChunkCont=Yes               continuation word of a noun chunk
    SpaceAfter=No               no whitespace after this word
    SpacesAfter=<escaped>       explicit whitespace (\\n, \\t, \\s escapes)

Unknown MISC keys are skipped with a counted warning. Documents are
delimited by ``# newdoc id = <doc_id>`` comments; ``# text =`` sidecar
comments, when present, are checked against the reconstructed surface.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, TextIO

from .errors import ConlluParseError, ReconstructionError, StructuralError

ROOT_HEAD = -1

_KNOWN_MISC = {"NER", "ChunkStart", "ChunkCont", "SpaceAfter", "SpacesAfter"}

_NUMERIC_CHARS = set("0123456789")


def _is_numeric_surface(surface: str) -> bool:
    """Digits with optional separators, e.g. 1987, 3.5, 1,200."""
    if not surface or not (set(surface) & _NUMERIC_CHARS):
        return False
    return all(c in _NUMERIC_CHARS or c in ".,-:/" for c in surface)


@dataclass
class ParsedWord:
    surface: str
    lemma: str
    pos: str
    dep: str
    head_index: int  # 0-based within the sentence, ROOT_HEAD for the root
    ner_tag: str | None = None  # entity label or None
    is_numeric: bool = False
    whitespace_after: str = " "  # actual trailing whitespace, "" for none

    @property
    def has_space_after(self) -> bool:
        return self.whitespace_after != ""


@dataclass
class ParsedDocument:
    doc_id: str
    sentences: list[list[ParsedWord]]
    entity_spans: list[tuple[int, int, str]] = field(default_factory=list)
    noun_chunks: list[tuple[int, int]] = field(default_factory=list)

    def words(self) -> list[ParsedWord]:
        return [w for sent in self.sentences for w in sent]

    @property
    def word_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def text(self) -> str:
        parts = []
        for w in self.words():
            parts.append(w.surface)
            parts.append(w.whitespace_after)
        if parts:
            parts.pop()  # trailing whitespace of the last word is not text
        return "".join(parts)

    def validate(self) -> None:
        n = self.word_count
        bounds = []
        off = 0
        for sent in self.sentences:
            bounds.append((off, off + len(sent)))
            off += len(sent)

        def within_one_sentence(start: int, end: int) -> bool:
            return any(s0 <= start and end <= s1 for s0, s1 in bounds)

        for start, end, tag in self.entity_spans:
            if not (0 <= start < end <= n):
                raise StructuralError(f"entity span ({start},{end}) out of bounds for {n} words")
            if not within_one_sentence(start, end):
                raise StructuralError(f"entity span ({start},{end}) crosses a sentence boundary")
        for start, end in self.noun_chunks:
            if not (0 <= start < end <= n):
                raise StructuralError(f"noun chunk ({start},{end}) out of bounds for {n} words")
            if not within_one_sentence(start, end):
                raise StructuralError(f"noun chunk ({start},{end}) crosses a sentence boundary")
        _check_disjoint([s[:2] for s in self.entity_spans], "entity spans")
        _check_disjoint(list(self.noun_chunks), "noun chunks")
        offset = 0
        for si, sent in enumerate(self.sentences):
            for w in sent:
                if w.head_index != ROOT_HEAD and not (0 <= w.head_index < len(sent)):
                    raise StructuralError(
                        f"word {offset} in sentence {si}: head index {w.head_index} "
                        f"outside sentence of {len(sent)} words"
                    )
                offset += 1


def _check_disjoint(ranges: list[tuple[int, int]], what: str) -> None:
    for (a0, a1), (b0, b1) in zip(sorted(ranges), sorted(ranges)[1:]):
        if b0 < a1:
            raise StructuralError(f"overlapping {what}: ({a0},{a1}) and ({b0},{b1})")


def _unescape_spaces(value: str) -> str:
    return value.replace("\\n", "\n").replace("\\t", "\t").replace("\\s", " ")


def _escape_spaces(ws: str) -> str:
    return ws.replace("\n", "\\n").replace("\t", "\\t").replace(" ", "\\s")


def read_conllu(
    stream: Iterable[str] | TextIO,
    on_warning: Callable[[str], None] | None = None,
) -> list[ParsedDocument]:
    """Parse CoNLL-U text into documents, one per ``# newdoc`` block.

    Raises ConlluParseError (with line number) on malformed lines,
    StructuralError on dangling heads or bad spans, ReconstructionError when
    a ``# text`` sidecar disagrees with the reconstructed surface. Unknown
    MISC keys are reported through ``on_warning`` and otherwise ignored.
    """
    docs: list[ParsedDocument] = []
    doc_id: str | None = None
    sentences: list[list[ParsedWord]] = []
    entity_spans: list[tuple[int, int, str]] = []
    noun_chunks: list[tuple[int, int]] = []
    cur_words: list[ParsedWord] = []
    cur_heads: list[int] = []
    cur_text: str | None = None
    doc_offset = 0  # document word index of the first word of cur_words
    open_entity: list | None = None  # [start, end, tag], end exclusive
    open_chunk: list | None = None

    def warn(msg: str) -> None:
        if on_warning is not None:
            on_warning(msg)

    def close_entity() -> None:
        nonlocal open_entity
        if open_entity is not None:
            entity_spans.append(tuple(open_entity))
            open_entity = None

    def close_chunk() -> None:
        nonlocal open_chunk
        if open_chunk is not None:
            noun_chunks.append(tuple(open_chunk))
            open_chunk = None

    def flush_sentence(lineno: int) -> None:
        nonlocal cur_words, cur_heads, cur_text, doc_offset
        if not cur_words:
            return
        close_entity()
        close_chunk()
        for w, head in zip(cur_words, cur_heads):
            if head == 0:
                w.head_index = ROOT_HEAD
            elif 1 <= head <= len(cur_words):
                w.head_index = head - 1
            else:
                raise StructuralError(
                    f"line {lineno}: head {head} dangles outside sentence of {len(cur_words)} words"
                )
        if cur_text is not None:
            rebuilt = "".join(w.surface + w.whitespace_after for w in cur_words)
            if rebuilt.rstrip() != cur_text.rstrip():
                raise ReconstructionError(
                    f"sentence ending at line {lineno}: reconstructed text "
                    f"{rebuilt.rstrip()!r} != sidecar {cur_text.rstrip()!r}"
                )
        sentences.append(cur_words)
        doc_offset += len(cur_words)
        cur_words, cur_heads, cur_text = [], [], None

    def flush_doc(lineno: int) -> None:
        nonlocal doc_id, sentences, entity_spans, noun_chunks, doc_offset
        flush_sentence(lineno)
        if doc_id is None and not sentences:
            return
        doc = ParsedDocument(
            doc_id=doc_id if doc_id is not None else f"doc{len(docs)}",
            sentences=sentences,
            entity_spans=entity_spans,
            noun_chunks=noun_chunks,
        )
        doc.validate()
        docs.append(doc)
        doc_id, sentences, entity_spans, noun_chunks = None, [], [], []
        doc_offset = 0

    lineno = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush_sentence(lineno)
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("newdoc"):
                if doc_id is not None or sentences or cur_words:
                    flush_doc(lineno)
                doc_id = body.split("=", 1)[1].strip() if "=" in body else ""
            elif body.startswith("text"):
                cur_text = body.split("=", 1)[1].strip() if "=" in body else ""
            continue
        fields = line.split("\t")
        if len(fields) != 10:
            raise ConlluParseError(f"expected 10 tab-separated fields, got {len(fields)}", lineno)
        tok_id, form, lemma, upos, _xpos, _feats, head, deprel, _deps, misc = fields
        if "-" in tok_id or "." in tok_id:
            continue  # multiword/empty nodes carry no surface position here
        try:
            int(tok_id)
            head_val = int(head)
        except ValueError:
            raise ConlluParseError(f"non-integer ID or HEAD ({tok_id!r}, {head!r})", lineno) from None

        ws = " "
        ner_value: str | None = None
        chunk_start = chunk_cont = False
        if misc != "_":
            for item in misc.split("|"):
                if "=" not in item:
                    raise ConlluParseError(f"malformed MISC item {item!r}", lineno)
                key, value = item.split("=", 1)
                if key == "SpaceAfter":
                    if value == "No":
                        ws = ""
                elif key == "SpacesAfter":
                    ws = _unescape_spaces(value)
                elif key == "NER":
                    ner_value = value
                elif key == "ChunkStart":
                    chunk_start = value == "Yes"
                elif key == "ChunkCont":
                    chunk_cont = value == "Yes"
                else:
                    warn(f"line {lineno}: unknown MISC key {key!r} ignored")

        word_index = doc_offset + len(cur_words)
        tag: str | None = None
        if ner_value is not None:
            if "-" in ner_value:
                bio, tag = ner_value.split("-", 1)
            else:
                bio, tag = "B", ner_value
            if bio == "B" or open_entity is None or open_entity[2] != tag:
                close_entity()
                open_entity = [word_index, word_index + 1, tag]
            else:
                open_entity[1] = word_index + 1
        else:
            close_entity()

        if chunk_start:
            close_chunk()
            open_chunk = [word_index, word_index + 1]
        elif chunk_cont:
            if open_chunk is None:
                raise ConlluParseError("ChunkCont without an open chunk", lineno)
            open_chunk[1] = word_index + 1
        else:
            close_chunk()

        cur_words.append(
            ParsedWord(
                surface=form,
                lemma=lemma,
                pos=upos,
                dep=deprel,
                head_index=head_val,  # provisional 1-based, fixed in flush
                ner_tag=tag,
                is_numeric=_is_numeric_surface(form),
                whitespace_after=ws,
            )
        )
        cur_heads.append(head_val)

    flush_doc(lineno)
    return docs


def write_conllu(docs: Iterable[ParsedDocument]) -> str:
    """Serialize documents back to the CoNLL-U interchange form."""
    out: list[str] = []
    for doc in docs:
        out.append(f"# newdoc id = {doc.doc_id}")
        offset = 0
        ent_by_word: dict[int, tuple[str, bool]] = {}
        for start, end, tag in doc.entity_spans:
            for i in range(start, end):
                ent_by_word[i] = (tag, i == start)
        chunk_by_word: dict[int, bool] = {}
        for start, end in doc.noun_chunks:
            for i in range(start, end):
                chunk_by_word[i] = i == start
        for sent in doc.sentences:
            text = "".join(w.surface + w.whitespace_after for w in sent).rstrip()
            if "\n" not in text and "\t" not in text:
                out.append(f"# text = {text}")  # the sidecar is single-line
            for i, w in enumerate(sent):
                misc_items = []
                di = offset + i
                if di in ent_by_word:
                    tag, is_start = ent_by_word[di]
                    misc_items.append(f"NER={'B' if is_start else 'I'}-{tag}")
                if di in chunk_by_word:
                    misc_items.append("ChunkStart=Yes" if chunk_by_word[di] else "ChunkCont=Yes")
                if w.whitespace_after == "":
                    misc_items.append("SpaceAfter=No")
                elif w.whitespace_after != " ":
                    misc_items.append(f"SpacesAfter={_escape_spaces(w.whitespace_after)}")
                head = 0 if w.head_index == ROOT_HEAD else w.head_index + 1
                out.append(
                    "\t".join(
                        [
                            str(i + 1),
                            w.surface,
                            w.lemma,
                            w.pos,
                            "_",
                            "_",
                            str(head),
                            w.dep,
                            "_",
                            "|".join(misc_items) if misc_items else "_",
                        ]
                    )
                )
            out.append("")
            offset += len(sent)
    return "\n".join(out) + "\n"


def split_chunks_on_whitespace(doc: ParsedDocument) -> ParsedDocument:
    """Split noun chunks at hard whitespace boundaries (newline or tab).

    Single spaces do not split. Idempotent; words, entity spans, and
    dependency structure are untouched.
    """
    words = doc.words()
    new_chunks: list[tuple[int, int]] = []
    for start, end in doc.noun_chunks:
        piece_start = start
        for i in range(start, end - 1):
            if any(c in "\n\t" for c in words[i].whitespace_after):
                new_chunks.append((piece_start, i + 1))
                piece_start = i + 1
        new_chunks.append((piece_start, end))
    return replace(doc, noun_chunks=new_chunks)


def doc_to_json(doc: ParsedDocument) -> str:
    """One-line canonical JSON dump of a document, for debugging."""
    payload = {
        "doc_id": doc.doc_id,
        "sentences": [
            [
                {
                    "surface": w.surface,
                    "lemma": w.lemma,
                    "pos": w.pos,
                    "dep": w.dep,
                    "head": w.head_index,
                    "ner": w.ner_tag,
                    "numeric": w.is_numeric,
                    "ws": w.whitespace_after,
                }
                for w in sent
            ]
            for sent in doc.sentences
        ],
        "entity_spans": [list(s) for s in doc.entity_spans],
        "noun_chunks": [list(c) for c in doc.noun_chunks],
    }
    return json.dumps(payload, ensure_ascii=False, sort_keys=True)
