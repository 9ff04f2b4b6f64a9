"""Framed binary artifact formats (token-label, loss, and mask files).

All integers are little-endian. Every file opens with a 4-byte magic, a
u16 format version, and a 32-byte NUL-padded ASCII run-config hash for
provenance. Bit masks are packed LSB-first. The exact layouts are
documented in docs/formats.md and frozen by tests.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

from .masks import MethodSpec

TOKEN_MAGIC = b"CKTL"
LOSS_MAGIC = b"CKLS"
MASK_MAGIC = b"CKMK"
FORMAT_VERSION = 1


def _pack_bits(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def _unpack_bits(raw: bytes, count: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=count, bitorder="little").astype(np.uint8)


def _write_header(out: BinaryIO, magic: bytes, config_hash: str) -> None:
    out.write(magic)
    out.write(struct.pack("<H", FORMAT_VERSION))
    out.write(config_hash.encode("ascii")[:32].ljust(32, b"\0"))


def _read_header(raw: bytes, magic: bytes, path) -> tuple[str, int]:
    if raw[:4] != magic:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}, expected {magic!r}")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    config_hash = raw[6:38].rstrip(b"\0").decode("ascii")
    return config_hash, 38


# ---------------------------------------------------------------------------
# token-label file: per-document token ids, classes, and call labels
# ---------------------------------------------------------------------------

@dataclass
class DocTokens:
    doc_id: str
    token_ids: np.ndarray  # int32
    classes: np.ndarray  # uint8
    call_labels: np.ndarray  # uint8 0/1


@dataclass
class TokenFile:
    config_hash: str
    vocab_size: int  # base vocabulary size, call token excluded
    docs: list[DocTokens] = field(default_factory=list)

    def total_tokens(self) -> int:
        return sum(len(d.token_ids) for d in self.docs)


def write_token_file(path: str | Path, tf: TokenFile) -> None:
    with open(path, "wb") as out:
        _write_header(out, TOKEN_MAGIC, tf.config_hash)
        out.write(struct.pack("<I", tf.vocab_size))
        for doc in tf.docs:
            did = doc.doc_id.encode("utf-8")
            n = len(doc.token_ids)
            out.write(struct.pack("<H", len(did)))
            out.write(did)
            out.write(struct.pack("<I", n))
            out.write(np.ascontiguousarray(doc.token_ids, dtype="<i4").tobytes())
            out.write(np.ascontiguousarray(doc.classes, dtype=np.uint8).tobytes())
            out.write(_pack_bits(doc.call_labels))


def read_token_file(path: str | Path) -> TokenFile:
    raw = Path(path).read_bytes()
    config_hash, off = _read_header(raw, TOKEN_MAGIC, path)
    (vocab_size,) = struct.unpack_from("<I", raw, off)
    off += 4
    docs: list[DocTokens] = []
    while off < len(raw):
        (id_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        doc_id = raw[off : off + id_len].decode("utf-8")
        off += id_len
        (n,) = struct.unpack_from("<I", raw, off)
        off += 4
        ids = np.frombuffer(raw, dtype="<i4", count=n, offset=off).copy()
        off += 4 * n
        classes = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off).copy()
        off += n
        nbytes = (n + 7) // 8
        call = _unpack_bits(raw[off : off + nbytes], n)
        off += nbytes
        docs.append(DocTokens(doc_id=doc_id, token_ids=ids, classes=classes, call_labels=call))
    return TokenFile(config_hash=config_hash, vocab_size=vocab_size, docs=docs)


# ---------------------------------------------------------------------------
# loss file: float32 arrays keyed by batch ordinal
# ---------------------------------------------------------------------------

def write_loss_file(path: str | Path, records: dict[int, np.ndarray], config_hash: str = "") -> None:
    with open(path, "wb") as out:
        _write_header(out, LOSS_MAGIC, config_hash)
        for ordinal in sorted(records):
            arr = np.ascontiguousarray(records[ordinal], dtype="<f4")
            out.write(struct.pack("<II", ordinal, len(arr)))
            out.write(arr.tobytes())


def read_loss_file(path: str | Path) -> tuple[dict[int, np.ndarray], str]:
    raw = Path(path).read_bytes()
    config_hash, off = _read_header(raw, LOSS_MAGIC, path)
    records: dict[int, np.ndarray] = {}
    while off < len(raw):
        ordinal, n = struct.unpack_from("<II", raw, off)
        off += 8
        records[ordinal] = np.frombuffer(raw, dtype="<f4", count=n, offset=off).astype(np.float64)
        off += 4 * n
    return records, config_hash


# ---------------------------------------------------------------------------
# mask file: packed call/ignore bits per batch, MethodSpec in the header
# ---------------------------------------------------------------------------

def write_mask_file(
    path: str | Path,
    spec: MethodSpec,
    records: dict[int, tuple[np.ndarray, np.ndarray]],
    config_hash: str = "",
) -> None:
    with open(path, "wb") as out:
        _write_header(out, MASK_MAGIC, config_hash)
        spec_json = json.dumps(spec.to_dict(), sort_keys=True).encode("utf-8")
        out.write(struct.pack("<I", len(spec_json)))
        out.write(spec_json)
        for ordinal in sorted(records):
            call, ignore = records[ordinal]
            n = len(call)
            out.write(struct.pack("<II", ordinal, n))
            out.write(_pack_bits(call))
            out.write(_pack_bits(ignore))


def read_mask_file(path: str | Path) -> tuple[MethodSpec, dict[int, tuple[np.ndarray, np.ndarray]], str]:
    raw = Path(path).read_bytes()
    config_hash, off = _read_header(raw, MASK_MAGIC, path)
    (spec_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    spec = MethodSpec.from_dict(json.loads(raw[off : off + spec_len].decode("utf-8")))
    off += spec_len
    records: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    while off < len(raw):
        ordinal, n = struct.unpack_from("<II", raw, off)
        off += 8
        nbytes = (n + 7) // 8
        call = _unpack_bits(raw[off : off + nbytes], n)
        off += nbytes
        ignore = _unpack_bits(raw[off : off + nbytes], n)
        off += nbytes
        records[ordinal] = (call, ignore)
    return spec, records, config_hash


def iter_docs(path: str | Path) -> Iterator[DocTokens]:
    yield from read_token_file(path).docs
