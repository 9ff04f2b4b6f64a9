#!/usr/bin/env python3
"""Assemble the 50-document wiki-style gold fixture.

Every sentence template below carries hand-derived labels: each (class,
reason) pair was worked out once, by hand, from the documented labeling
rules (entity first-mentions, chunk sub-rules a-e, grammatical
part-of-speech list, default). The builder only substitutes fill words
that preserve the analysis (fresh two-word names, fresh nouns, fresh
years) and places repeat templates after their antecedents, so the gold
stays valid by construction. Output:

    fixtures/wiki50.conllu      parses with NER/chunk MISC annotations
    fixtures/wiki50_gold.jsonl  one record per document with gold labels

Run from the repo root: python3 tools/build_wiki_fixture.py
"""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from callkit.conllu import read_conllu  # noqa: E402


@dataclass
class W:
    surface: str
    lemma: str
    pos: str
    head: int  # 1-based within sentence, 0 = root
    dep: str
    ner: str | None = None  # "B-PERSON", "I-DATE", ...
    chunk: str | None = None  # "B" or "I"
    ws: str = " "  # whitespace after: " ", "" or "\n"


FACT = "fact"
GRAM = "grammatical"
OTHER = "other"

# fill pools; indexates below guarantee within-document uniqueness
FIRSTS = ["Marie", "Pierre", "Albert", "Niels", "Lise", "Emmy", "Max", "Paul",
          "Enrico", "Rosalind", "Dorothy", "Barbara", "Linus", "Ernest", "Erwin", "Hedy"]
LASTS = ["Curie", "Einstein", "Bohr", "Meitner", "Noether", "Planck", "Dirac",
         "Fermi", "Franklin", "Hodgkin", "Pauling", "Rutherford", "Lamarr", "Kelvin", "Laue", "Wigner"]
PROFS = ["physicist", "chemist", "mathematician", "biologist", "lawyer",
         "composer", "engineer", "astronomer", "geologist", "historian", "architect", "painter"]
FIELDS = ["physics", "chemistry", "mathematics", "biology", "medicine",
          "astronomy", "geology", "history", "philosophy", "economics", "botany", "logic"]
CITIES = ["Paris", "Vienna", "Warsaw", "Berlin", "Copenhagen", "Rome", "London",
          "Prague", "Budapest", "Salzburg", "Geneva", "Madrid", "Oslo", "Dublin", "Lisbon", "Turin"]
UNIS = ["Jagiellonian", "Humboldt", "Columbia", "Princeton", "Cambridge",
        "Oxford", "Harvard", "Leiden", "Uppsala", "Bologna", "Edinburgh", "Vilnius"]
INSTS = ["Kaiser", "Radium", "Pasteur", "Carnegie", "Langevin", "Solvay", "Fraunhofer", "Salk"]
SUBSTS = ["radium", "polonium", "penicillin", "insulin", "caffeine", "graphene", "quinine", "cortisone"]
EVENTS = ["congress", "exhibition", "conference", "festival", "tournament", "symposium"]
NOUNS = ["proposal", "report", "novel", "theory", "map", "engine", "bridge", "charter"]
MONTHS = ["January", "February", "March", "April", "May", "June", "July",
          "August", "September", "October", "November", "December"]
YEARS = ["1769", "1867", "1903", "1921", "1887", "1755", "1931", "1898",
         "1874", "1942", "1815", "1956", "1883", "1907", "1848", "1965",
         "1791", "1912", "1804", "1938", "1859", "1926", "1872", "1949"]
DAYS = ["15", "27", "3", "19", "8", "22", "11", "30"]
PRIZES = ["Nobel", "Copley", "Wolf", "Abel"]
COUNTRIES = ["Poland", "Austria", "Denmark", "Italy", "Norway", "Portugal", "Hungary", "Ireland"]
ADJS = ["French", "Prussian", "Austrian", "Danish", "Polish", "Italian"]


def t_person_appos(first, last, prof, subst):
    """'{First} {Last}, a {prof}, discovered {subst}.'"""
    words = [
        W(first, first, "PROPN", 2, "compound", "B-PERSON", "B"),
        W(last, last, "PROPN", 7, "nsubj", "I-PERSON", "I", ws=""),
        W(",", ",", "PUNCT", 2, "punct"),
        W("a", "a", "DET", 5, "det", None, "B"),
        W(prof, prof, "NOUN", 2, "appos", None, "I", ws=""),
        W(",", ",", "PUNCT", 2, "punct"),
        W("discovered", "discover", "VERB", 0, "ROOT"),
        W(subst, subst, "NOUN", 7, "dobj", None, "B", ws=""),
        W(".", ".", "PUNCT", 7, "punct"),
    ]
    gold = [
        (FACT, "named_entity_first"), (FACT, "named_entity_first"), (GRAM, "determiner_like"),
        (GRAM, "determiner_like"), (FACT, "appositive"), (GRAM, "determiner_like"),
        (OTHER, "default_other"), (FACT, "direct_object"), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_she_studied_bare(field):
    """'She studied {field}' -- the bare exemplar, no final punctuation."""
    words = [
        W("She", "she", "PRON", 2, "nsubj"),
        W("studied", "study", "VERB", 0, "ROOT"),
        W(field, field, "NOUN", 2, "dobj", None, "B"),
    ]
    gold = [(OTHER, "default_other"), (OTHER, "default_other"), (FACT, "direct_object")]
    return words, gold


def t_lawyer_by_training(pron, prof):
    """'{pron} was a {prof} by training' -- manner-preposition exemplar."""
    words = [
        W(pron, pron.lower(), "PRON", 2, "nsubj"),
        W("was", "be", "AUX", 0, "ROOT"),
        W("a", "a", "DET", 4, "det", None, "B"),
        W(prof, prof, "NOUN", 2, "attr", None, "I"),
        W("by", "by", "ADP", 4, "prep"),
        W("training", "training", "NOUN", 5, "pobj", None, "B"),
    ]
    gold = [
        (OTHER, "default_other"), (GRAM, "determiner_like"), (GRAM, "determiner_like"),
        (FACT, "predicative_attribute"), (GRAM, "determiner_like"), (OTHER, "default_other"),
    ]
    return words, gold


def t_studied_at(field, uni):
    """'She studied {field} at the {Uni} University.' org-keyword chunk."""
    words = [
        W("She", "she", "PRON", 2, "nsubj"),
        W("studied", "study", "VERB", 0, "ROOT"),
        W(field, field, "NOUN", 2, "dobj", None, "B"),
        W("at", "at", "ADP", 2, "prep"),
        W("the", "the", "DET", 7, "det", None, "B"),
        W(uni, uni, "PROPN", 7, "compound", None, "I"),
        W("University", "University", "PROPN", 4, "pobj", None, "I", ws=""),
        W(".", ".", "PUNCT", 2, "punct"),
    ]
    gold = [
        (OTHER, "default_other"), (OTHER, "default_other"), (FACT, "direct_object"),
        (GRAM, "determiner_like"), (GRAM, "determiner_like"), (FACT, "org_keyword"),
        (FACT, "org_keyword"), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_intro_person(first, last, prof, city, city_entity=True):
    """'{First} {Last} was a {prof} born in {City}.'"""
    words = [
        W(first, first, "PROPN", 2, "compound", "B-PERSON", "B"),
        W(last, last, "PROPN", 3, "nsubj", "I-PERSON", "I"),
        W("was", "be", "AUX", 0, "ROOT"),
        W("a", "a", "DET", 5, "det", None, "B"),
        W(prof, prof, "NOUN", 3, "attr", None, "I"),
        W("born", "bear", "VERB", 5, "acl"),
        W("in", "in", "ADP", 6, "prep"),
        W(city, city, "PROPN", 7, "pobj", "B-OTHER" if city_entity else None, "B", ws=""),
        W(".", ".", "PUNCT", 3, "punct"),
    ]
    city_reason = "named_entity_first" if city_entity else "proper_noun"
    gold = [
        (FACT, "named_entity_first"), (FACT, "named_entity_first"), (GRAM, "determiner_like"),
        (GRAM, "determiner_like"), (FACT, "predicative_attribute"), (OTHER, "default_other"),
        (GRAM, "determiner_like"), (FACT, city_reason), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_prize_repeat(last, prize, year):
    """'{Last} received the {Prize} Prize in {year}.' after the person was
    introduced: the surname is a component repeat, the year is fresh."""
    words = [
        W(last, last, "PROPN", 2, "nsubj", "B-PERSON", "B"),
        W("received", "receive", "VERB", 0, "ROOT"),
        W("the", "the", "DET", 5, "det", None, "B"),
        W(prize, prize, "PROPN", 5, "compound", None, "I"),
        W("Prize", "Prize", "PROPN", 2, "dobj", None, "I"),
        W("in", "in", "ADP", 2, "prep"),
        W(year, year, "NUM", 6, "pobj", ws=""),
        W(".", ".", "PUNCT", 2, "punct"),
    ]
    gold = [
        (OTHER, "repeat_mention"), (OTHER, "default_other"), (GRAM, "determiner_like"),
        (FACT, "org_keyword"), (FACT, "org_keyword"), (GRAM, "determiner_like"),
        (FACT, "numeric_first"), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_year_repeat_move(year, pron, city, city_entity=True):
    """'In {year}, {pron} moved to {City}.' with the year seen before."""
    words = [
        W("In", "in", "ADP", 5, "prep"),
        W(year, year, "NUM", 1, "pobj", ws=""),
        W(",", ",", "PUNCT", 5, "punct"),
        W(pron, pron.lower(), "PRON", 5, "nsubj"),
        W("moved", "move", "VERB", 0, "ROOT"),
        W("to", "to", "ADP", 5, "prep"),
        W(city, city, "PROPN", 6, "pobj", "B-OTHER" if city_entity else None, "B", ws=""),
        W(".", ".", "PUNCT", 5, "punct"),
    ]
    city_reason = "named_entity_first" if city_entity else "proper_noun"
    gold = [
        (GRAM, "determiner_like"), (OTHER, "repeat_mention"), (GRAM, "determiner_like"),
        (OTHER, "default_other"), (OTHER, "default_other"), (GRAM, "determiner_like"),
        (FACT, city_reason), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_born_date(name, month, day, year, extra_ner=None):
    """'{Name} was born on {Month} {day}, {year}.' single-word person, DATE span."""
    words = [
        W(name, name, "PROPN", 4, "nsubjpass", "B-PERSON", "B"),
        W("was", "be", "AUX", 4, "auxpass"),
        W("born", "bear", "VERB", 0, "ROOT"),
        W("on", "on", "ADP", 3, "prep"),
        W(month, month, "PROPN", 4, "pobj", "B-DATE"),
        W(day, day, "NUM", 5, "nummod", "I-DATE", ws=""),
        W(",", ",", "PUNCT", 5, "punct", "I-DATE"),
        W(year, year, "NUM", 5, "nummod", "I-DATE", ws=""),
        W(".", ".", "PUNCT", 3, "punct"),
    ]
    gold = [
        (FACT, "named_entity_first"), (GRAM, "determiner_like"), (OTHER, "default_other"),
        (GRAM, "determiner_like"), (FACT, "named_entity_first"), (FACT, "named_entity_first"),
        (GRAM, "determiner_like"), (FACT, "named_entity_first"), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_commanded(name, adj, force):
    """'{Name} commanded the {Adj} {Force}.' person repeat + the-capitalized chunk."""
    words = [
        W(name, name, "PROPN", 2, "nsubj", "B-PERSON"),
        W("commanded", "command", "VERB", 0, "ROOT"),
        W("the", "the", "DET", 5, "det", None, "B"),
        W(adj, adj, "ADJ", 5, "amod", None, "I"),
        W(force, force, "PROPN", 2, "dobj", None, "I", ws=""),
        W(".", ".", "PUNCT", 2, "punct"),
    ]
    gold = [
        (OTHER, "repeat_mention"), (OTHER, "default_other"), (GRAM, "determiner_like"),
        (FACT, "org_keyword"), (FACT, "org_keyword"), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_triple_name(n1, n2, n3, count, plural):
    """'{A} {B} {C} composed {count} {things}.' three-part person name."""
    words = [
        W(n1, n1, "PROPN", 3, "compound", "B-PERSON", "B"),
        W(n2, n2, "PROPN", 3, "compound", "I-PERSON", "I"),
        W(n3, n3, "PROPN", 4, "nsubj", "I-PERSON", "I"),
        W("composed", "compose", "VERB", 0, "ROOT"),
        W(count, count, "NUM", 6, "nummod", None, "B"),
        W(plural, plural, "NOUN", 4, "dobj", None, "I", ws=""),
        W(".", ".", "PUNCT", 4, "punct"),
    ]
    gold = [
        (FACT, "named_entity_first"), (FACT, "named_entity_first"), (FACT, "named_entity_first"),
        (OTHER, "default_other"), (FACT, "direct_object"), (FACT, "direct_object"),
        (GRAM, "determiner_like"),
    ]
    return words, gold


def t_component_repeat_died(n1, city, city_entity=True):
    """'{N1} died in {City}.' with {N1} a component of an earlier full name."""
    words = [
        W(n1, n1, "PROPN", 2, "nsubj", "B-PERSON"),
        W("died", "die", "VERB", 0, "ROOT"),
        W("in", "in", "ADP", 2, "prep"),
        W(city, city, "PROPN", 3, "pobj", "B-OTHER" if city_entity else None, "B", ws=""),
        W(".", ".", "PUNCT", 2, "punct"),
    ]
    city_reason = "named_entity_first" if city_entity else "proper_noun"
    gold = [
        (OTHER, "repeat_mention"), (OTHER, "default_other"), (GRAM, "determiner_like"),
        (FACT, city_reason), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_committee(noun):
    """'The research committee approved the {noun}.'"""
    words = [
        W("The", "the", "DET", 3, "det", None, "B"),
        W("research", "research", "NOUN", 3, "compound", None, "I"),
        W("committee", "committee", "NOUN", 4, "nsubj", None, "I"),
        W("approved", "approve", "VERB", 0, "ROOT"),
        W("the", "the", "DET", 6, "det", None, "B"),
        W(noun, noun, "NOUN", 4, "dobj", None, "I", ws=""),
        W(".", ".", "PUNCT", 4, "punct"),
    ]
    gold = [
        (GRAM, "determiner_like"), (FACT, "org_keyword"), (FACT, "org_keyword"),
        (OTHER, "default_other"), (GRAM, "determiner_like"), (FACT, "direct_object"),
        (GRAM, "determiner_like"),
    ]
    return words, gold


def t_worked_in(pron, f2, f3):
    """'{Pron} might have worked in {f2} and {f3}.' grammatical-heavy filler."""
    words = [
        W(pron, pron.lower(), "PRON", 4, "nsubj"),
        W("might", "might", "AUX", 4, "aux"),
        W("have", "have", "AUX", 4, "aux"),
        W("worked", "work", "VERB", 0, "ROOT"),
        W("in", "in", "ADP", 4, "prep"),
        W(f2, f2, "NOUN", 5, "pobj", None, "B"),
        W("and", "and", "CCONJ", 6, "cc"),
        W(f3, f3, "NOUN", 6, "conj", None, "B", ws=""),
        W(".", ".", "PUNCT", 4, "punct"),
    ]
    gold = [
        (OTHER, "default_other"), (GRAM, "determiner_like"), (GRAM, "determiner_like"),
        (OTHER, "default_other"), (GRAM, "determiner_like"), (OTHER, "default_other"),
        (GRAM, "determiner_like"), (OTHER, "default_other"), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_met_doctor(last, inst):
    """'She met Dr {Last} at the {Inst} Institute.' title-cue person chunk."""
    words = [
        W("She", "she", "PRON", 2, "nsubj"),
        W("met", "meet", "VERB", 0, "ROOT"),
        W("Dr", "Dr", "PROPN", 4, "compound"),
        W(last, last, "PROPN", 2, "dobj", None, "B"),
        W("at", "at", "ADP", 2, "prep"),
        W("the", "the", "DET", 8, "det", None, "B"),
        W(inst, inst, "PROPN", 8, "compound", None, "I"),
        W("Institute", "Institute", "PROPN", 5, "pobj", None, "I", ws=""),
        W(".", ".", "PUNCT", 2, "punct"),
    ]
    gold = [
        (OTHER, "default_other"), (OTHER, "default_other"), (OTHER, "default_other"),
        (FACT, "person_component"), (GRAM, "determiner_like"), (GRAM, "determiner_like"),
        (FACT, "org_keyword"), (FACT, "org_keyword"), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_institute_repeat(inst, year):
    """'The {Inst} Institute expanded in {year}.' org repeat + fresh year."""
    words = [
        W("The", "the", "DET", 3, "det", None, "B"),
        W(inst, inst, "PROPN", 3, "compound", None, "I"),
        W("Institute", "Institute", "PROPN", 4, "nsubj", None, "I"),
        W("expanded", "expand", "VERB", 0, "ROOT"),
        W("in", "in", "ADP", 4, "prep"),
        W(year, year, "NUM", 5, "pobj", ws=""),
        W(".", ".", "PUNCT", 4, "punct"),
    ]
    gold = [
        (GRAM, "determiner_like"), (OTHER, "repeat_mention"), (OTHER, "repeat_mention"),
        (OTHER, "default_other"), (GRAM, "determiner_like"), (FACT, "numeric_first"),
        (GRAM, "determiner_like"),
    ]
    return words, gold


def t_capital_apposition(city, country, event):
    """'{City}, the capital of {Country}, hosted the {event}.'"""
    words = [
        W(city, city, "PROPN", 8, "nsubj", None, "B", ws=""),
        W(",", ",", "PUNCT", 1, "punct"),
        W("the", "the", "DET", 4, "det", None, "B"),
        W("capital", "capital", "NOUN", 1, "appos", None, "I"),
        W("of", "of", "ADP", 4, "prep"),
        W(country, country, "PROPN", 5, "pobj", "B-OTHER", "B", ws=""),
        W(",", ",", "PUNCT", 1, "punct"),
        W("hosted", "host", "VERB", 0, "ROOT"),
        W("the", "the", "DET", 10, "det", None, "B"),
        W(event, event, "NOUN", 8, "dobj", None, "I", ws=""),
        W(".", ".", "PUNCT", 8, "punct"),
    ]
    gold = [
        (FACT, "person_component"), (GRAM, "determiner_like"), (GRAM, "determiner_like"),
        (FACT, "appositive"), (GRAM, "determiner_like"), (FACT, "named_entity_first"),
        (GRAM, "determiner_like"), (OTHER, "default_other"), (GRAM, "determiner_like"),
        (FACT, "direct_object"), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_yellow_line():
    """'The station is part of the Yellow\\nLine.' newline splits the chunk."""
    words = [
        W("The", "the", "DET", 2, "det", None, "B"),
        W("station", "station", "NOUN", 3, "nsubj", None, "I"),
        W("is", "be", "AUX", 0, "ROOT"),
        W("part", "part", "NOUN", 3, "attr", None, "B"),
        W("of", "of", "ADP", 4, "prep"),
        W("the", "the", "DET", 8, "det", None, "B"),
        W("Yellow", "Yellow", "PROPN", 8, "compound", None, "I", ws="\n"),
        W("Line", "Line", "PROPN", 5, "pobj", None, "I", ws=""),
        W(".", ".", "PUNCT", 3, "punct"),
    ]
    gold = [
        (GRAM, "determiner_like"), (OTHER, "default_other"), (GRAM, "determiner_like"),
        (FACT, "predicative_attribute"), (GRAM, "determiner_like"), (GRAM, "determiner_like"),
        (FACT, "org_keyword"), (FACT, "proper_noun"), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_filler_kind():
    """'It was not the only one of its kind.' zero facts."""
    words = [
        W("It", "it", "PRON", 2, "nsubj"),
        W("was", "be", "AUX", 0, "ROOT"),
        W("not", "not", "PART", 2, "neg"),
        W("the", "the", "DET", 6, "det", None, "B"),
        W("only", "only", "ADJ", 6, "amod", None, "I"),
        W("one", "one", "NUM", 2, "attr", None, "I"),
        W("of", "of", "ADP", 6, "prep"),
        W("its", "its", "PRON", 9, "poss", None, "B"),
        W("kind", "kind", "NOUN", 7, "pobj", None, "I", ws=""),
        W(".", ".", "PUNCT", 2, "punct"),
    ]
    gold = [
        (OTHER, "default_other"), (GRAM, "determiner_like"), (OTHER, "default_other"),
        (GRAM, "determiner_like"), (OTHER, "default_other"), (OTHER, "default_other"),
        (GRAM, "determiner_like"), (OTHER, "default_other"), (OTHER, "default_other"),
        (GRAM, "determiner_like"),
    ]
    return words, gold


def t_later_wrote(pron):
    """'{Pron} later wrote about the work and its place in history.' filler
    with a repeated-feel but zero facts ("history" is pobj of "in")."""
    words = [
        W(pron, pron.lower(), "PRON", 3, "nsubj"),
        W("later", "later", "ADV", 3, "advmod"),
        W("wrote", "write", "VERB", 0, "ROOT"),
        W("about", "about", "ADP", 3, "prep"),
        W("the", "the", "DET", 6, "det", None, "B"),
        W("work", "work", "NOUN", 4, "pobj", None, "I"),
        W("and", "and", "CCONJ", 6, "cc"),
        W("its", "its", "PRON", 9, "poss", None, "B"),
        W("place", "place", "NOUN", 6, "conj", None, "I"),
        W("in", "in", "ADP", 9, "prep"),
        W("history", "history", "NOUN", 10, "pobj", None, "B", ws=""),
        W(".", ".", "PUNCT", 3, "punct"),
    ]
    gold = [
        (OTHER, "default_other"), (OTHER, "default_other"), (OTHER, "default_other"),
        (GRAM, "determiner_like"), (GRAM, "determiner_like"), (OTHER, "default_other"),
        (GRAM, "determiner_like"), (OTHER, "default_other"), (OTHER, "default_other"),
        (GRAM, "determiner_like"), (OTHER, "default_other"), (GRAM, "determiner_like"),
    ]
    return words, gold


def t_punct_only():
    """Punctuation-only sentence: everything grammatical."""
    words = [
        W("-", "-", "PUNCT", 0, "ROOT"),
        W("?", "?", "PUNCT", 1, "punct"),
        W("!", "!", "PUNCT", 1, "punct", ws=""),
    ]
    gold = [(GRAM, "determiner_like")] * 3
    return words, gold


# ---------------------------------------------------------------------------
# document recipes
# ---------------------------------------------------------------------------

def build_documents():
    docs = []  # (doc_id, [ (words, gold) ... ])

    def add(doc_id, sentences):
        docs.append((doc_id, sentences))

    # the exemplar document: the three canonical sentences
    add("exemplars", [
        t_person_appos("Marie", "Curie", "physicist", "radium"),
        t_she_studied_bare("physics"),
        t_lawyer_by_training("he", "lawyer"),
    ])

    # the date-pinning document (also anchors tokenizer merges for months)
    add("napoleon", [
        t_born_date("Napoleon", "August", "15", "1769"),
        t_commanded("Napoleon", "French", "Army"),
    ])

    # pools cycle modulo 8 so every fill appears a few times across the
    # corpus and the subword model can merge it into one or two pieces
    P8 = 8

    # bios with appositive intro, prize repeat, year repeat (8 docs)
    for i in range(8):
        first, last = FIRSTS[i % P8], LASTS[i % P8]
        add(f"bio{i:02d}", [
            t_person_appos(first, last, PROFS[i % P8], SUBSTS[i % P8]),
            t_prize_repeat(last, PRIZES[i % len(PRIZES)], YEARS[i % P8]),
            t_year_repeat_move(YEARS[i % P8], "she" if i % 2 == 0 else "he",
                               CITIES[i % P8], city_entity=i % 2 == 0),
            t_later_wrote("she" if i % 2 == 0 else "he"),
        ])

    # intro + studies + manner-preposition (6 docs)
    for i in range(6):
        first, last = FIRSTS[(i + 3) % P8], LASTS[(i + 3) % P8]
        add(f"study{i:02d}", [
            t_intro_person(first, last, PROFS[(i + 3) % P8],
                           CITIES[(i + 4) % P8], city_entity=i % 2 == 0),
            t_studied_at(FIELDS[i % P8], UNIS[i % P8]),
            t_lawyer_by_training("she", PROFS[(i + 6) % P8]),
            t_filler_kind(),
        ])

    # birth dates with a repeated year (5 docs)
    date_months = ["August", "March", "August", "June", "March"]
    for i in range(5):
        add(f"dates{i:02d}", [
            t_born_date(FIRSTS[(i + 2) % P8], date_months[i],
                        DAYS[i % len(DAYS)], YEARS[(i + 3) % P8]),
            t_year_repeat_move(YEARS[(i + 3) % P8], "he", CITIES[(i + 2) % P8],
                               city_entity=True),
            t_later_wrote("he"),
        ])

    # title cue + institute repeat (4 docs)
    for i in range(4):
        add(f"inst{i:02d}", [
            t_met_doctor(LASTS[(i + 4) % P8], INSTS[i % 4]),
            t_institute_repeat(INSTS[i % 4], YEARS[(i + 5) % P8]),
            t_filler_kind(),
        ])

    # three-part names with a component repeat (4 docs)
    triples = [
        ("Wolfgang", "Amadeus", "Mozart", "22", "operas"),
        ("Johann", "Sebastian", "Bach", "200", "cantatas"),
        ("Wolfgang", "Amadeus", "Mozart", "41", "symphonies"),
        ("Johann", "Sebastian", "Bach", "300", "chorales"),
    ]
    for i, (a, b, c, n, things) in enumerate(triples):
        add(f"triple{i:02d}", [
            t_triple_name(a, b, c, n, things),
            t_component_repeat_died(a, CITIES[(i + 6) % P8], city_entity=i % 2 == 0),
            t_later_wrote("he"),
        ])

    # city apposition + filler (4 docs)
    for i in range(4):
        add(f"city{i:02d}", [
            t_capital_apposition(CITIES[(i + 1) % P8], COUNTRIES[i % 4],
                                 EVENTS[i % 4]),
            t_filler_kind(),
        ])

    # committees + grammatical filler (4 docs)
    for i in range(4):
        add(f"org{i:02d}", [
            t_committee(NOUNS[i % 4]),
            t_worked_in("he" if i % 2 else "she", FIELDS[(i + 2) % P8],
                        FIELDS[(i + 3) % P8]),
        ])

    # newline chunks (4 docs)
    for i in range(4):
        add(f"line{i:02d}", [
            t_yellow_line(),
            t_later_wrote("it"),
        ])

    # studies-only, low fact (3 docs)
    for i in range(3):
        add(f"low{i:02d}", [
            t_studied_at(FIELDS[(i + 3) % P8], UNIS[(i + 3) % P8]),
            t_worked_in("she", FIELDS[(i + 5) % P8], FIELDS[(i + 6) % P8]),
            t_later_wrote("she"),
        ])

    # intro + filler (3 docs)
    for i in range(3):
        add(f"intro{i:02d}", [
            t_intro_person(FIRSTS[(i + 5) % P8], LASTS[(i + 5) % P8],
                           PROFS[(i + 1) % P8], CITIES[(i + 2) % P8],
                           city_entity=True),
            t_filler_kind(),
            t_later_wrote("he"),
        ])

    # punctuation-only document
    add("punct", [t_punct_only()])

    # mixed: committee + apposition (2 docs)
    for i in range(2):
        add(f"mix{i:02d}", [
            t_committee(NOUNS[(i + 2) % 4]),
            t_capital_apposition(CITIES[(i + 5) % P8], COUNTRIES[(i + 2) % 4],
                                 EVENTS[(i + 2) % 4]),
            t_later_wrote("it"),
        ])

    return docs


def emit_conllu(docs) -> str:
    lines = []
    for doc_id, sentences in docs:
        lines.append(f"# newdoc id = {doc_id}")
        for words, _gold in sentences:
            text = "".join(w.surface + w.ws for w in words).rstrip()
            if "\n" not in text and "\t" not in text:
                # the sidecar is single-line; skip it when the sentence
                # contains hard whitespace
                lines.append("# text = " + text)
            for i, w in enumerate(words, start=1):
                misc = []
                if w.ner:
                    misc.append(f"NER={w.ner}")
                if w.chunk == "B":
                    misc.append("ChunkStart=Yes")
                elif w.chunk == "I":
                    misc.append("ChunkCont=Yes")
                if w.ws == "":
                    misc.append("SpaceAfter=No")
                elif w.ws != " ":
                    esc = w.ws.replace("\n", "\\n").replace("\t", "\\t")
                    misc.append(f"SpacesAfter={esc}")
                lines.append("\t".join([
                    str(i), w.surface, w.lemma, w.pos, "_", "_",
                    str(w.head), w.dep, "_", "|".join(misc) if misc else "_",
                ]))
            lines.append("")
    return "\n".join(lines) + "\n"


def main():
    docs = build_documents()
    assert len(docs) == 50, f"expected 50 documents, built {len(docs)}"
    conllu_text = emit_conllu(docs)
    fixtures = ROOT / "fixtures"
    fixtures.mkdir(exist_ok=True)
    (fixtures / "wiki50.conllu").write_text(conllu_text, encoding="utf-8")

    # sanity: the file parses and the word counts line up with the gold
    parsed = read_conllu(conllu_text.splitlines(keepends=True))
    assert len(parsed) == 50
    gold_records = []
    for (doc_id, sentences), doc in zip(docs, parsed):
        assert doc.doc_id == doc_id
        gold = []
        for words, sentence_gold in sentences:
            assert len(words) == len(sentence_gold)
            for w, (cls, reason) in zip(words, sentence_gold):
                gold.append({"surface": w.surface, "class": cls, "reason": reason})
        assert len(gold) == doc.word_count, (doc_id, len(gold), doc.word_count)
        gold_records.append({"doc_id": doc_id, "labels": gold})
    with open(fixtures / "wiki50_gold.jsonl", "w", encoding="utf-8") as fh:
        for rec in gold_records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    n_words = sum(len(r["labels"]) for r in gold_records)
    n_fact = sum(1 for r in gold_records for l in r["labels"] if l["class"] == "fact")
    print(f"wrote 50 docs, {n_words} words, fact word fraction {n_fact / n_words:.3f}")


if __name__ == "__main__":
    main()
