/**
 * Boundary equivalence: bound results must equal primary-component results
 * exactly, field for field and bit for bit.
 */
import { spawnSync } from "node:child_process";
import { readFileSync } from "node:fs";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import {
  annotate,
  buildMask,
  convertJudgeAnnotations,
  tokenize,
} from "../src/index.js";
import { runCallkit, withScratchDir } from "../src/cli.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO = resolve(HERE, "..", "..");
const FIXTURE = join(REPO, "fixtures", "wiki50.conllu");
const GOLD = join(REPO, "fixtures", "wiki50_gold.jsonl");

function python(code: string): string {
  const proc = spawnSync("python3", ["-c", code], { encoding: "utf-8" });
  if (proc.status !== 0) throw new Error(proc.stderr);
  return proc.stdout;
}

describe("annotate", () => {
  const conllu = readFileSync(FIXTURE, "utf-8");
  const docs = annotate(conllu);

  it("equals the primary CLI output field-for-field", () => {
    withScratchDir((dir) => {
      const out = join(dir, "ref.jsonl");
      runCallkit(["annotate", FIXTURE, "--out", out]);
      const refLines = readFileSync(out, "utf-8").split("\n").filter((l) => l.trim());
      const refDocs = refLines.map((l) => JSON.parse(l)).filter((r) => "words" in r);
      expect(docs).toEqual(refDocs);
    });
  });

  it("matches the hand-verified gold labels on every fixture document", () => {
    const gold = readFileSync(GOLD, "utf-8")
      .split("\n")
      .filter((l) => l.trim())
      .map((l) => JSON.parse(l));
    expect(docs.length).toBe(gold.length);
    for (let d = 0; d < docs.length; d++) {
      expect(docs[d].doc_id).toBe(gold[d].doc_id);
      expect(docs[d].words.length).toBe(gold[d].labels.length);
      for (let w = 0; w < docs[d].words.length; w++) {
        expect(docs[d].words[w].surface).toBe(gold[d].labels[w].surface);
        expect(docs[d].words[w].class).toBe(gold[d].labels[w].class);
        expect(docs[d].words[w].reason).toBe(gold[d].labels[w].reason);
      }
    }
  });

  it("empty input gives an empty list", () => {
    expect(annotate("")).toEqual([]);
  });

  it("malformed input raises with the core line number", () => {
    expect(() => annotate("1\tonly\tthree\n")).toThrowError(/line 1/);
  });
});

describe("buildMask", () => {
  it("reproduces the canonical 10-token selection", () => {
    const classes = [1, 0, 1, 2, 1, 0, 0, 1, 2, 0];
    const losses = [7.1, 2.0, 6.5, 0.5, 1.0, 3.0, 2.5, 8.0, 0.4, 2.2];
    const { call, ignore } = buildMask(classes, losses, "lacy", 0, { callFraction: 0.2 });
    const called = [...call].map((b, i) => (b ? i : -1)).filter((i) => i >= 0);
    expect(called).toEqual([0, 7]);
    expect([...ignore].every((b) => b === 0)).toBe(true);
  });

  it("baseline produces all-zero masks", () => {
    const { call, ignore } = buildMask([1, 0, 1], [1, 2, 3], "baseline", 0);
    expect([...call]).toEqual([0, 0, 0]);
    expect([...ignore]).toEqual([0, 0, 0]);
  });

  it("loss_random with a fixed seed is bit-identical across calls", () => {
    const classes = new Array(64).fill(0);
    const losses = classes.map((_, i) => i * 0.1);
    const a = buildMask(classes, losses, "loss_random", 7);
    const b = buildMask(classes, losses, "loss_random", 7);
    expect([...a.call]).toEqual([...b.call]);
    expect(a.call.includes(1)).toBe(true);
  });

  it("every method is bit-identical to the primary build_mask API", () => {
    const methods = [
      "baseline", "loss_random", "rho1", "llm_judge", "spacy_only",
      "lacy", "spacy_refloss", "lacy_ignorefacts", "lacy_ignore",
    ];
    for (const [trial, method] of methods.entries()) {
      const n = 24 + trial;
      const classes: number[] = [];
      const losses: number[] = [];
      const refLosses: number[] = [];
      for (let i = 0; i < n; i++) {
        classes.push(method === "llm_judge" ? (i % 7 === 0 ? 1 : 0) : (i * 2654435761) % 3);
        losses.push(((i * 40503) % 977) / 100);
        refLosses.push(((i * 69069 + 13) % 887) / 100);
      }
      const needsRef = method === "rho1" || method === "spacy_refloss";
      const bound = buildMask(classes, losses, method, trial, {
        callFraction: 0.15,
        ignoreFraction: 0.15,
        refLosses: needsRef ? refLosses : undefined,
      });
      // primary result straight from the core API; losses are framed as
      // float32 on the wire, so the reference casts the same way
      const code = `
import json
import numpy as np
from callkit.masks import MethodSpec, TrainingBatch, build_mask
classes = np.array(${JSON.stringify(classes)}, dtype=np.uint8)
losses = np.array(${JSON.stringify(losses)}, dtype=np.float32).astype(np.float64)
ref = np.array(${JSON.stringify(refLosses)}, dtype=np.float32).astype(np.float64)
spec = MethodSpec(${JSON.stringify(method)}, call_fraction=0.15, ignore_fraction=0.15, rng_seed=${trial})
batch = TrainingBatch(token_ids=np.arange(len(classes)), classes=classes, losses=losses,
                      ref_losses=ref if ${needsRef ? "True" : "False"} else None)
mask = build_mask(batch, spec, ordinal=0)
print(json.dumps({"call": mask.call.astype(int).tolist(), "ignore": mask.ignore.astype(int).tolist()}))
`;
      const primary = JSON.parse(python(code));
      expect([...bound.call], method).toEqual(primary.call);
      expect([...bound.ignore], method).toEqual(primary.ignore);
    }
  }, 60_000);

  it("rejects mismatched lengths", () => {
    expect(() => buildMask([1, 2], [1], "baseline", 0)).toThrowError(/lengths differ/);
  });
});

describe("tokenize", () => {
  it("round-trips the fixture through the binary format", () => {
    const labels = runAnnotateRaw();
    const tf = tokenize(labels);
    expect(tf.docs.length).toBe(50);
    const total = tf.docs.reduce((acc, d) => acc + d.tokenIds.length, 0);
    // cross-check against the primary reader
    const expected = Number(
      python(
        `
import sys
from callkit.tokenfile import read_token_file
import tempfile, subprocess, os, json
from callkit.cli import dispatch
with tempfile.TemporaryDirectory() as td:
    labels = os.path.join(td, "labels.jsonl")
    tokens = os.path.join(td, "tokens.bin")
    assert dispatch(["annotate", ${JSON.stringify(FIXTURE)}, "--out", labels]) == 0
    assert dispatch(["tokenize", labels, "--out", tokens]) == 0
    tf = read_token_file(tokens)
    print(tf.total_tokens())
`,
      ).trim(),
    );
    expect(total).toBe(expected);
    expect(tf.docs[0].classes.length).toBe(tf.docs[0].tokenIds.length);
  });
});

function runAnnotateRaw(): string {
  return withScratchDir((dir) => {
    const out = join(dir, "labels.jsonl");
    runCallkit(["annotate", FIXTURE, "--out", out]);
    return readFileSync(out, "utf-8");
  });
}

describe("convertJudgeAnnotations", () => {
  it("labels the canonical date example with seven calls", () => {
    const annotated =
      "Napoleon was born on <|db_start|>Napoleon<|sep|>Birth_Date" +
      "<|db_retrieve|> August 15, 1769<|db_end|>.";
    const { tokenIds, callLabels } = convertJudgeAnnotations(annotated);
    expect(tokenIds.length).toBe(callLabels.length);
    const total = [...callLabels].reduce((a, b) => a + b, 0);
    expect(total).toBe(7); // August(1) + 15(2) + 1769(4)
  });

  it("markup-free text has all-zero labels", () => {
    const { callLabels } = convertJudgeAnnotations("no markup here.");
    expect([...callLabels].every((b) => b === 0)).toBe(true);
  });

  it("nested markup surfaces the core error", () => {
    expect(() => convertJudgeAnnotations("a <|db_start|> b <|db_start|> c"))
      .toThrowError(/nested/);
  });
});
