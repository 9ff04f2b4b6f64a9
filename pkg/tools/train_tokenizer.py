#!/usr/bin/env python3
"""Train the bundled subword model over the fixture corpus and freeze it.

Writes src/callkit/data/bpe_vocab.json. Run after (re)building fixtures:
    python3 tools/build_wiki_fixture.py && python3 tools/train_tokenizer.py
"""
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from callkit.conllu import read_conllu  # noqa: E402
from callkit.tokenizer import BpeTokenizer  # noqa: E402


def main():
    docs = read_conllu(open(ROOT / "fixtures" / "wiki50.conllu", encoding="utf-8"))
    texts = [doc.text() for doc in docs]
    tok = BpeTokenizer.train(texts, vocab_size=1400, min_count=2)
    out = ROOT / "src" / "callkit" / "data" / "bpe_vocab.json"
    tok.save(out)
    total = sum(len(tok.encode(t)) for t in texts)
    print(f"alphabet {len(tok.alphabet)}, merges {len(tok.merges)}, "
          f"pieces {len(tok.pieces)}; fixture corpus -> {total} tokens")


if __name__ == "__main__":
    main()
