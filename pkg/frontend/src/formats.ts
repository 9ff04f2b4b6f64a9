/**
 * Readers and writers for the toolkit's framed binary artifacts, matching
 * docs/formats.md byte for byte. Little-endian throughout; bit masks are
 * packed LSB-first.
 */
import { readFileSync, writeFileSync } from "node:fs";

const HEADER_SIZE = 4 + 2 + 32;

export interface DocTokens {
  docId: string;
  tokenIds: Int32Array;
  classes: Uint8Array;
  callLabels: Uint8Array;
}

export interface TokenFile {
  configHash: string;
  vocabSize: number;
  docs: DocTokens[];
}

function checkHeader(buf: Buffer, magic: string, path: string): { configHash: string; offset: number } {
  if (buf.subarray(0, 4).toString("latin1") !== magic) {
    throw new Error(`${path}: bad magic, expected ${magic}`);
  }
  const version = buf.readUInt16LE(4);
  if (version !== 1) {
    throw new Error(`${path}: unsupported format version ${version}`);
  }
  const configHash = buf.subarray(6, 38).toString("latin1").replace(/\0+$/, "");
  return { configHash, offset: HEADER_SIZE };
}

function writeHeader(magic: string, configHash: string): Buffer {
  const buf = Buffer.alloc(HEADER_SIZE);
  buf.write(magic, 0, "latin1");
  buf.writeUInt16LE(1, 4);
  buf.write(configHash.slice(0, 32), 6, "latin1");
  return buf;
}

export function packBits(bits: ArrayLike<number>): Buffer {
  const out = Buffer.alloc(Math.ceil(bits.length / 8));
  for (let i = 0; i < bits.length; i++) {
    if (bits[i]) out[i >> 3] |= 1 << (i & 7);
  }
  return out;
}

export function unpackBits(buf: Buffer, count: number): Uint8Array {
  const out = new Uint8Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = (buf[i >> 3] >> (i & 7)) & 1;
  }
  return out;
}

export function readTokenFile(path: string): TokenFile {
  const buf = readFileSync(path);
  const { configHash, offset } = checkHeader(buf, "CKTL", path);
  let off = offset;
  const vocabSize = buf.readUInt32LE(off);
  off += 4;
  const docs: DocTokens[] = [];
  while (off < buf.length) {
    const idLen = buf.readUInt16LE(off);
    off += 2;
    const docId = buf.subarray(off, off + idLen).toString("utf-8");
    off += idLen;
    const n = buf.readUInt32LE(off);
    off += 4;
    const tokenIds = new Int32Array(n);
    for (let i = 0; i < n; i++) tokenIds[i] = buf.readInt32LE(off + 4 * i);
    off += 4 * n;
    const classes = new Uint8Array(buf.subarray(off, off + n));
    off += n;
    const nBytes = Math.ceil(n / 8);
    const callLabels = unpackBits(buf.subarray(off, off + nBytes), n);
    off += nBytes;
    docs.push({ docId, tokenIds, classes, callLabels });
  }
  return { configHash, vocabSize, docs };
}

export function writeTokenFile(path: string, tf: TokenFile): void {
  const parts: Buffer[] = [writeHeader("CKTL", tf.configHash)];
  const vocab = Buffer.alloc(4);
  vocab.writeUInt32LE(tf.vocabSize, 0);
  parts.push(vocab);
  for (const doc of tf.docs) {
    const id = Buffer.from(doc.docId, "utf-8");
    const head = Buffer.alloc(2 + id.length + 4);
    head.writeUInt16LE(id.length, 0);
    id.copy(head, 2);
    head.writeUInt32LE(doc.tokenIds.length, 2 + id.length);
    parts.push(head);
    const ids = Buffer.alloc(4 * doc.tokenIds.length);
    for (let i = 0; i < doc.tokenIds.length; i++) ids.writeInt32LE(doc.tokenIds[i], 4 * i);
    parts.push(ids, Buffer.from(doc.classes), packBits(doc.callLabels));
  }
  writeFileSync(path, Buffer.concat(parts));
}

export function writeLossFile(
  path: string,
  records: Map<number, Float32Array>,
  configHash = "",
): void {
  const parts: Buffer[] = [writeHeader("CKLS", configHash)];
  for (const ordinal of [...records.keys()].sort((a, b) => a - b)) {
    const arr = records.get(ordinal)!;
    const head = Buffer.alloc(8);
    head.writeUInt32LE(ordinal, 0);
    head.writeUInt32LE(arr.length, 4);
    const data = Buffer.alloc(4 * arr.length);
    for (let i = 0; i < arr.length; i++) data.writeFloatLE(arr[i], 4 * i);
    parts.push(head, data);
  }
  writeFileSync(path, Buffer.concat(parts));
}

export interface MethodSpec {
  method: string;
  call_fraction: number;
  ignore_fraction: number;
  rng_seed: number;
}

export interface MaskFile {
  configHash: string;
  spec: MethodSpec;
  records: Map<number, { call: Uint8Array; ignore: Uint8Array }>;
}

export function readMaskFile(path: string): MaskFile {
  const buf = readFileSync(path);
  const { configHash, offset } = checkHeader(buf, "CKMK", path);
  let off = offset;
  const specLen = buf.readUInt32LE(off);
  off += 4;
  const spec = JSON.parse(buf.subarray(off, off + specLen).toString("utf-8")) as MethodSpec;
  off += specLen;
  const records = new Map<number, { call: Uint8Array; ignore: Uint8Array }>();
  while (off < buf.length) {
    const ordinal = buf.readUInt32LE(off);
    const n = buf.readUInt32LE(off + 4);
    off += 8;
    const nBytes = Math.ceil(n / 8);
    const call = unpackBits(buf.subarray(off, off + nBytes), n);
    off += nBytes;
    const ignore = unpackBits(buf.subarray(off, off + nBytes), n);
    off += nBytes;
    records.set(ordinal, { call, ignore });
  }
  return { configHash, spec, records };
}
