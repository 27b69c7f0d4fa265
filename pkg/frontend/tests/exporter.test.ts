import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, readdirSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { HashEncoder, loadEncoder, tokenize } from "../src/encoder.js";
import { exportEmbeddings, formatRows, readDataset } from "../src/exporter.js";

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "embed-export-"));
}

function writeFixture(dir: string, n = 10): string {
  const groups = ["book a flight to", "play loud music by"];
  const lines: string[] = [];
  for (let i = 0; i < n; i++) {
    const g = i % 2;
    lines.push(
      JSON.stringify({
        id: `u${i}`,
        text: `${groups[g]} item ${i}`,
        labels: [`lab${g}`],
        split: "unlabeled",
      })
    );
  }
  const path = join(dir, "data.jsonl");
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

describe("tokenize", () => {
  it("lowercases and splits on punctuation", () => {
    expect(tokenize("Book a FLIGHT, please!")).toEqual(["book", "a", "flight", "please"]);
  });

  it("empty text yields no tokens", () => {
    expect(tokenize("  ...  ")).toEqual([]);
  });
});

describe("HashEncoder", () => {
  it("is deterministic and text-sensitive", () => {
    const enc = new HashEncoder(16, "hash-16");
    const [a1] = enc.encode(["book a flight"]);
    const [a2] = enc.encode(["book a flight"]);
    const [b] = enc.encode(["play some music"]);
    expect(a1).toEqual(a2);
    expect(a1).not.toEqual(b);
    expect(a1).toHaveLength(16);
  });

  it("shared tokens pull vectors together", () => {
    const enc = new HashEncoder(64, "hash-64");
    const [a, near, far] = enc.encode([
      "refund my late charge",
      "refund that duplicate charge",
      "play upbeat jazz now",
    ]);
    const cos = (x: number[], y: number[]) => {
      let dot = 0, nx = 0, ny = 0;
      for (let i = 0; i < x.length; i++) {
        dot += x[i] * y[i];
        nx += x[i] * x[i];
        ny += y[i] * y[i];
      }
      return dot / Math.sqrt(nx * ny);
    };
    expect(cos(a, near)).toBeGreaterThan(cos(a, far));
  });

  it("empty text maps to the zero vector", () => {
    const enc = new HashEncoder(8, "hash-8");
    expect(enc.encode([""])[0]).toEqual(new Array(8).fill(0));
  });
});

describe("loadEncoder", () => {
  it("parses the hash family dimension", () => {
    expect(loadEncoder("hash-128").dim).toBe(128);
  });

  it("rejects unknown models with a message", () => {
    expect(() => loadEncoder("no-such/model")).toThrow(/cannot load model/);
  });

  it("rejects out-of-range dimensions", () => {
    expect(() => loadEncoder("hash-0")).toThrow(/dimension/);
  });
});

describe("readDataset", () => {
  it("rejects duplicate ids", () => {
    const dir = tmp();
    const path = join(dir, "d.jsonl");
    writeFileSync(
      path,
      JSON.stringify({ id: "a", text: "x" }) + "\n" + JSON.stringify({ id: "a", text: "y" }) + "\n"
    );
    expect(() => readDataset(path)).toThrow(/duplicate/);
  });

  it("reports the offending line on bad JSON", () => {
    const dir = tmp();
    const path = join(dir, "d.jsonl");
    writeFileSync(path, JSON.stringify({ id: "a", text: "x" }) + "\nnot json\n");
    expect(() => readDataset(path)).toThrow(/line 2/);
  });
});

describe("formatRows", () => {
  it("aborts on dimension mismatch", () => {
    expect(() => formatRows(3, ["a"], [[1, 2]])).toThrow(/dim 2.*header says 3/);
  });

  it("aborts on non-finite values", () => {
    expect(() => formatRows(2, ["a"], [[1, NaN]])).toThrow(/non-finite/);
  });
});

describe("exportEmbeddings", () => {
  it("writes one row per utterance plus the header", () => {
    const dir = tmp();
    const dataset = writeFixture(dir, 3);
    const out = join(dir, "emb.tsv");
    const n = exportEmbeddings({ dataset, model: "hash-16", out, batch: 2 });
    expect(n).toBe(3);
    const lines = readFileSync(out, "utf-8").trimEnd().split("\n");
    expect(lines[0]).toBe("#dim=16");
    expect(lines).toHaveLength(4);
    for (const line of lines.slice(1)) {
      expect(line.split("\t")).toHaveLength(17);
    }
  });

  it("reruns are byte-identical and batch size does not matter", () => {
    const dir = tmp();
    const dataset = writeFixture(dir, 7);
    const out1 = join(dir, "a.tsv");
    const out2 = join(dir, "b.tsv");
    exportEmbeddings({ dataset, model: "hash-32", out: out1, batch: 3 });
    exportEmbeddings({ dataset, model: "hash-32", out: out2, batch: 7 });
    expect(readFileSync(out1)).toEqual(readFileSync(out2));
  });

  it("empty dataset produces a header-only file", () => {
    const dir = tmp();
    const dataset = join(dir, "empty.jsonl");
    writeFileSync(dataset, "");
    const out = join(dir, "emb.tsv");
    expect(exportEmbeddings({ dataset, model: "hash-8", out, batch: 4 })).toBe(0);
    expect(readFileSync(out, "utf-8")).toBe("#dim=8\n");
  });

  it("leaves no temp files behind", () => {
    const dir = tmp();
    const dataset = writeFixture(dir, 4);
    exportEmbeddings({ dataset, model: "hash-8", out: join(dir, "e.tsv"), batch: 2 });
    expect(readdirSync(dir).filter((f) => f.endsWith(".tmp"))).toEqual([]);
  });
});

describe("round trip into the core pipeline", () => {
  it("export loads via the python reader and discovery runs end to end", () => {
    const dir = tmp();
    const dataset = writeFixture(dir, 10);
    const out = join(dir, "emb.tsv");
    exportEmbeddings({ dataset, model: "hash-64", out, batch: 4 });
    const script = `
import json, sys
from intentgraph import corpus, discovery
from intentgraph.keyphrase import KeyphraseSet, ScoredKeyphrase

table = corpus.load_embeddings(sys.argv[1])
ds = corpus.load_dataset(sys.argv[2])
assert table.dim == 64
assert set(table.vectors) == {u.id for u in ds.utterances}

items = [ScoredKeyphrase(ngram=("flight",), score=2.0), ScoredKeyphrase(ngram=("music",), score=2.0)]
index = {("flight",): {u.id for u in ds.utterances if "flight" in u.text},
         ("music",): {u.id for u in ds.utterances if "music" in u.text}}
kps = KeyphraseSet(items=items, inverted_index=index)
seed = corpus.SeedMask(known_intents=frozenset(), labeled_ids=frozenset())
res = discovery.discover(ds, table, kps, seed)
print(json.dumps({"clusters": res.num_clusters, "n": len(res.assignment)}))
`;
    const stdout = execFileSync("python3", ["-c", script, out, dataset], {
      encoding: "utf-8",
    });
    const result = JSON.parse(stdout.trim());
    expect(result.n).toBe(10);
    expect(result.clusters).toBeGreaterThanOrEqual(2);
  });
});
