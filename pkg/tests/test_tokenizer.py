"""Subword tokenization, label propagation, and markup conversion."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from callkit.conllu import read_conllu
from callkit.errors import MarkupError
from callkit.labeling import label_document
from callkit.tokenizer import (
    BpeTokenizer,
    CALL_TOKEN,
    CLASS_FACT,
    Vocabulary,
    convert_judge_annotations,
    propagate_labels,
)


@pytest.fixture(scope="module")
def tok():
    return BpeTokenizer.bundled()


@pytest.fixture(scope="module")
def fixture_docs():
    with open("fixtures/wiki50.conllu", encoding="utf-8") as fh:
        return read_conllu(fh)


def test_vocabulary_extension(tok):
    vocab = tok.vocabulary()
    assert vocab.tokens[vocab.call_token_id] == CALL_TOKEN
    assert vocab.tokens.count(CALL_TOKEN) == 1
    assert vocab.size == len(tok.pieces) + 1


def test_vocabulary_rejects_call_in_base():
    with pytest.raises(ValueError):
        Vocabulary.from_base(["a", CALL_TOKEN])


def test_round_trip_fixture_texts(tok, fixture_docs):
    for doc in fixture_docs:
        text = doc.text()
        assert tok.decode(tok.encode(text)) == text


printable = st.text(
    alphabet=st.characters(min_codepoint=32, max_codepoint=0x2FFF,
                           blacklist_characters="▁"),
    max_size=60,
)


@given(printable)
@settings(max_examples=150, deadline=None)
def test_round_trip_property(text):
    tok = BpeTokenizer.bundled()
    assert tok.decode(tok.encode(text)) == text


def test_digits_never_merge(tok):
    ids = tok.encode("in 1769 and 23415")
    pieces = [tok.pieces[i] for i in ids]
    for p in pieces:
        digits = [c for c in p if c.isdigit()]
        assert len(digits) <= 1, pieces


def test_offsets_tile_the_text(tok):
    text = "Marie Curie, born 1867, discovered radium."
    ids, spans = tok.encode_with_offsets(text)
    rebuilt = tok.decode(ids)
    assert rebuilt == text
    for (a, b), tid in zip(spans, ids):
        piece = tok.pieces[tid].replace("▁", "")
        if not piece.startswith("<0x"):
            assert text[a:b] == piece


def test_propagate_inherits_word_class(tok, fixture_docs):
    doc = fixture_docs[0]
    labels = label_document(doc)
    seq = propagate_labels(doc, labels, tok)
    assert len(seq.token_ids) == len(seq.classes) == len(seq.word_of_token)
    assert np.all(np.diff(seq.word_of_token) >= 0)
    # every token of one word shares that word's class
    from callkit.tokenizer import CLASS_CODES
    words = doc.words()
    for t, wi in enumerate(seq.word_of_token):
        expected = CLASS_CODES[labels[wi].word_class]
        piece = tok.pieces[seq.token_ids[t]]
        content = piece.replace("▁", "")
        if content.strip() == "" or piece.startswith("<0x"):
            continue  # separator whitespace tokens count as grammatical
        assert seq.classes[t] == expected


def test_propagate_detokenizes_to_document_text(tok, fixture_docs):
    for doc in fixture_docs[:10]:
        labels = label_document(doc)
        seq = propagate_labels(doc, labels, tok)
        assert tok.decode(seq.token_ids) == doc.text()


def test_propagate_word_by_word_matches_whole_text(tok, fixture_docs):
    # oracle: tokenize each word independently and concatenate; must equal
    # one-shot tokenization of the full text
    for doc in fixture_docs[:10]:
        labels = label_document(doc)
        seq = propagate_labels(doc, labels, tok)
        assert list(seq.token_ids) == tok.encode(doc.text())


def test_propagate_empty_document(tok):
    from callkit.conllu import ParsedDocument

    seq = propagate_labels(ParsedDocument("d", []), [], tok)
    assert len(seq) == 0


def test_multi_subword_word_all_fact(tok):
    from callkit.conllu import ParsedDocument, ParsedWord, ROOT_HEAD
    from callkit.labeling import WordLabel

    doc = ParsedDocument("d", [[ParsedWord("Salzburg", "Salzburg", "PROPN", "pobj", ROOT_HEAD,
                                           whitespace_after="")]])
    seq = propagate_labels(doc, [WordLabel("fact", "proper_noun")], tok)
    assert len(seq) >= 1
    assert np.all(seq.classes == CLASS_FACT)
    assert np.all(seq.word_of_token == 0)


NAPOLEON_MARKUP = ("Napoleon was born on <|db_start|>Napoleon<|sep|>Birth_Date"
                   "<|db_retrieve|> August 15, 1769<|db_end|>.")


def test_napoleon_conversion_matches_target(tok):
    clean, labels = convert_judge_annotations(NAPOLEON_MARKUP, tok)
    assert clean == "Napoleon was born on August 15, 1769."
    ids = tok.encode(clean)
    assert list(ids) == tok.encode("Napoleon was born on August 15, 1769.")
    rendered = "".join(
        ("▁" + CALL_TOKEN if tok.pieces[t].startswith("▁") else CALL_TOKEN)
        if lab else tok.pieces[t]
        for t, lab in zip(ids, labels)
    ).replace("▁", " ")
    assert rendered == "Napoleon was born on <CALL> <CALL><CALL>, <CALL><CALL><CALL><CALL>."


def test_markup_free_text_all_zero(tok):
    clean, labels = convert_judge_annotations("plain text with no markup.", tok)
    assert clean == "plain text with no markup."
    assert labels.sum() == 0


def test_nested_markup_rejected_with_offset(tok):
    bad = "a <|db_start|> b <|db_start|> c"
    with pytest.raises(MarkupError) as exc:
        convert_judge_annotations(bad, tok)
    assert exc.value.offset == bad.index("<|db_start|>", 3)


def test_unterminated_markup_rejected(tok):
    with pytest.raises(MarkupError):
        convert_judge_annotations("x <|db_start|> e <|sep|> r <|db_retrieve|> v", tok)


def test_missing_sep_rejected(tok):
    with pytest.raises(MarkupError):
        convert_judge_annotations("x <|db_start|> e <|db_retrieve|> v <|db_end|>", tok)


def test_conversion_is_identity_on_clean_text(tok):
    clean, _ = convert_judge_annotations(NAPOLEON_MARKUP, tok)
    again, labels = convert_judge_annotations(clean, tok)
    assert again == clean
    assert labels.sum() == 0
