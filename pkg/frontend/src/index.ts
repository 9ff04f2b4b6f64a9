/**
 * callkit-bindings: thin TypeScript access to the callkit toolkit.
 *
 * Four operations are exposed: annotate (word labeling), tokenize (label
 * propagation to subwords), buildMask (call/ignore mask construction), and
 * convertJudgeAnnotations (database-lookup markup to call labels). Each
 * one drives the callkit CLI and parses the documented wire formats;
 * nothing is reimplemented, so outputs are bit-identical to the core.
 */
import { readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { CallkitError, RunOptions, runCallkit, withScratchDir } from "./cli.js";
import {
  DocTokens,
  MethodSpec,
  TokenFile,
  readMaskFile,
  readTokenFile,
  writeLossFile,
  writeTokenFile,
} from "./formats.js";

export { CallkitError } from "./cli.js";
export type { DocTokens, MethodSpec, TokenFile } from "./formats.js";
export { readMaskFile, readTokenFile, writeLossFile, writeTokenFile } from "./formats.js";

export type WordClass = "fact" | "grammatical" | "other";

export interface AnnotatedWord {
  surface: string;
  class: WordClass;
  reason: string;
  ws: string;
}

export interface AnnotatedDocument {
  doc_id: string;
  text: string;
  words: AnnotatedWord[];
}

/** Label every word of a CoNLL-U document set. Equivalent to
 * `callkit annotate` (it is `callkit annotate`). */
export function annotate(conlluText: string, opts?: RunOptions): AnnotatedDocument[] {
  return withScratchDir((dir) => {
    const input = join(dir, "input.conllu");
    const out = join(dir, "labels.jsonl");
    writeFileSync(input, conlluText, "utf-8");
    runCallkit(["annotate", input, "--out", out], opts);
    return parseAnnotateJsonl(out);
  });
}

export function parseAnnotateJsonl(path: string): AnnotatedDocument[] {
  const lines = readFileSync(path, "utf-8").split("\n").filter((l) => l.trim());
  const docs: AnnotatedDocument[] = [];
  for (const line of lines) {
    const rec = JSON.parse(line);
    if (!("words" in rec)) continue; // header line
    docs.push(rec as AnnotatedDocument);
  }
  return docs;
}

/** Propagate word labels to subword tokens via `callkit tokenize`. */
export function tokenize(labelsJsonl: string, opts?: RunOptions): TokenFile {
  return withScratchDir((dir) => {
    const input = join(dir, "labels.jsonl");
    const out = join(dir, "tokens.bin");
    writeFileSync(input, labelsJsonl, "utf-8");
    runCallkit(["tokenize", input, "--out", out], opts);
    return readTokenFile(out);
  });
}

export interface BuildMaskOptions {
  callFraction?: number;
  ignoreFraction?: number;
  /** Per-token reference-model losses for rho1 / spacy_refloss. */
  refLosses?: ArrayLike<number>;
  run?: RunOptions;
}

export interface MaskResult {
  call: Uint8Array;
  ignore: Uint8Array;
  spec: MethodSpec;
}

/**
 * Construct the call and ignore masks for one batch of tokens.
 *
 * `classes` are the per-token class codes (0 other, 1 fact, 2 grammatical;
 * for llm_judge they are the binary judge labels) and `losses` the
 * per-token losses in nats. Semantics and bits are identical to the core
 * implementation: the arrays are framed into the documented token/loss
 * files, `callkit mask` runs over a single exactly-aligned batch, and the
 * mask file is decoded. A leading sentinel token absorbs the trainer's
 * next-token shift so the returned masks index `classes` directly.
 */
export function buildMask(
  classes: ArrayLike<number>,
  losses: ArrayLike<number>,
  method: string,
  seed: number,
  options?: BuildMaskOptions,
): MaskResult {
  const n = classes.length;
  if (losses.length !== n) {
    throw new CallkitError(`classes (${n}) and losses (${losses.length}) lengths differ`);
  }
  if (n < 1) {
    throw new CallkitError("batch must contain at least one token");
  }
  return withScratchDir((dir) => {
    const tokensPath = join(dir, "tokens.bin");
    const lossPath = join(dir, "losses.bin");
    const maskPath = join(dir, "masks.bin");
    const fileClasses = new Uint8Array(n + 1);
    fileClasses[0] = 2; // sentinel, grammatical
    fileClasses.set(Array.from(classes, Number), 1);
    const fileCallLabels = new Uint8Array(n + 1);
    if (method === "llm_judge") {
      // judge labels ride the call-label bitfield in the file format; the
      // direct API reuses the classes argument for them
      for (let i = 0; i < n; i++) fileCallLabels[i + 1] = classes[i] ? 1 : 0;
    }
    writeTokenFile(tokensPath, {
      configHash: "",
      vocabSize: 4,
      docs: [
        {
          docId: "batch",
          tokenIds: new Int32Array(n + 1),
          classes: fileClasses,
          callLabels: fileCallLabels,
        },
      ],
    });
    writeLossFile(lossPath, new Map([[0, Float32Array.from(Array.from(losses, Number))]]));
    const args = [
      "mask", tokensPath, "--out", maskPath,
      "--method", method,
      "--losses", lossPath,
      "--seed", String(seed),
      "--batch-size", "1",
      "--context", String(n),
      "--steps", "1",
    ];
    if (options?.refLosses !== undefined) {
      if (options.refLosses.length !== n) {
        throw new CallkitError(`refLosses (${options.refLosses.length}) must have ${n} entries`);
      }
      const refPath = join(dir, "ref.bin");
      writeLossFile(refPath, new Map([[0, Float32Array.from(Array.from(options.refLosses, Number))]]));
      args.push("--ref-losses", refPath);
    }
    if (options?.callFraction !== undefined) {
      args.push("--call-fraction", String(options.callFraction));
    }
    if (options?.ignoreFraction !== undefined) {
      args.push("--ignore-fraction", String(options.ignoreFraction));
    }
    runCallkit(args, options?.run);
    const maskFile = readMaskFile(maskPath);
    const record = maskFile.records.get(0);
    if (!record || record.call.length !== n) {
      throw new CallkitError("mask file missing the batch record");
    }
    return { call: record.call, ignore: record.ignore, spec: maskFile.spec };
  });
}

export interface JudgeConversion {
  tokenIds: Int32Array;
  callLabels: Uint8Array;
}

/** Convert database-lookup markup into per-token call labels via
 * `callkit tokenize --from-markup`. */
export function convertJudgeAnnotations(annotated: string, opts?: RunOptions): JudgeConversion {
  return withScratchDir((dir) => {
    const input = join(dir, "markup.txt");
    const out = join(dir, "tokens.bin");
    writeFileSync(input, annotated, "utf-8");
    runCallkit(["tokenize", input, "--from-markup", "--out", out], opts);
    const tf = readTokenFile(out);
    if (tf.docs.length !== 1) {
      throw new CallkitError(`expected one document, got ${tf.docs.length}`);
    }
    return { tokenIds: tf.docs[0].tokenIds, callLabels: tf.docs[0].callLabels };
  });
}
