import { readFileSync, renameSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { loadEncoder } from "./encoder.js";

export interface ExportJob {
  dataset: string;
  model: string;
  out: string;
  batch: number;
}

export interface UtteranceRecord {
  id: string;
  text: string;
}

export function readDataset(path: string): UtteranceRecord[] {
  const raw = readFileSync(path, "utf-8");
  const records: UtteranceRecord[] = [];
  const seen = new Set<string>();
  raw.split("\n").forEach((line, idx) => {
    if (!line.trim()) return;
    let rec: unknown;
    try {
      rec = JSON.parse(line);
    } catch {
      throw new Error(`${path}: line ${idx + 1}: invalid JSON`);
    }
    const obj = rec as Record<string, unknown>;
    if (typeof obj.id !== "string" || typeof obj.text !== "string") {
      throw new Error(`${path}: line ${idx + 1}: needs string "id" and "text"`);
    }
    if (seen.has(obj.id)) {
      throw new Error(`${path}: duplicate utterance id "${obj.id}"`);
    }
    seen.add(obj.id);
    records.push({ id: obj.id, text: obj.text });
  });
  return records;
}

function formatValue(x: number): string {
  // shortest representation at 8 significant digits, stable across reruns
  return String(parseFloat(x.toPrecision(8)));
}

export function formatRows(dim: number, ids: string[], vectors: number[][]): string {
  const lines = [`#dim=${dim}`];
  vectors.forEach((vec, i) => {
    if (vec.length !== dim) {
      throw new Error(
        `embedding for "${ids[i]}" has dim ${vec.length}, header says ${dim}`
      );
    }
    for (const x of vec) {
      if (!Number.isFinite(x)) {
        throw new Error(`embedding for "${ids[i]}" contains a non-finite value`);
      }
    }
    lines.push([ids[i], ...vec.map(formatValue)].join("\t"));
  });
  return lines.join("\n") + "\n";
}

export function exportEmbeddings(job: ExportJob): number {
  if (job.batch < 1) throw new Error("batch size must be >= 1");
  const encoder = loadEncoder(job.model);
  const records = readDataset(job.dataset);
  const ids: string[] = [];
  const vectors: number[][] = [];
  for (let start = 0; start < records.length; start += job.batch) {
    const chunk = records.slice(start, start + job.batch);
    const encoded = encoder.encode(chunk.map((r) => r.text));
    chunk.forEach((r, i) => {
      ids.push(r.id);
      vectors.push(encoded[i]);
    });
  }
  const body = formatRows(encoder.dim, ids, vectors);
  // temp-then-rename so readers never observe a partial file
  const tmp = join(dirname(job.out), `.${process.pid}.${Date.now()}.tmp`);
  writeFileSync(tmp, body, "utf-8");
  renameSync(tmp, job.out);
  return records.length;
}
