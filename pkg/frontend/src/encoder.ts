export interface Encoder {
  readonly dim: number;
  encode(texts: string[]): number[][];
}

export function tokenize(text: string): string[] {
  return (text.toLowerCase().match(/[\p{L}\p{N}]+/gu) ?? []) as string[];
}

// FNV-1a, 32-bit
function fnv1a(s: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

// xorshift32; deterministic across platforms, no float state
function* xorshift32(seed: number): Generator<number> {
  let x = seed >>> 0 || 0x9e3779b9;
  for (;;) {
    x ^= x << 13;
    x ^= x >>> 17;
    x ^= x << 5;
    x >>>= 0;
    yield x / 0xffffffff;
  }
}

function tokenVector(token: string, dim: number, modelSeed: number): number[] {
  const rng = xorshift32(fnv1a(token) ^ modelSeed);
  const v = new Array<number>(dim);
  for (let i = 0; i < dim; i++) {
    v[i] = rng.next().value * 2 - 1;
  }
  return v;
}

/**
 * Offline stand-in encoder: every token maps to a pseudorandom vector seeded
 * by its hash, and an utterance is the mean of its token vectors. This keeps
 * exports fully deterministic with no model download; texts sharing tokens
 * land near each other, which is all the downstream graph needs for tests.
 */
export class HashEncoder implements Encoder {
  readonly dim: number;
  private readonly seed: number;

  constructor(dim: number, modelName: string) {
    this.dim = dim;
    this.seed = fnv1a(modelName);
  }

  encode(texts: string[]): number[][] {
    return texts.map((text) => {
      const tokens = tokenize(text);
      const out = new Array<number>(this.dim).fill(0);
      if (tokens.length === 0) return out;
      for (const tok of tokens) {
        const v = tokenVector(tok, this.dim, this.seed);
        for (let i = 0; i < this.dim; i++) out[i] += v[i];
      }
      // mean pooling, no unit normalization: the consumer computes cosine itself
      for (let i = 0; i < this.dim; i++) out[i] /= tokens.length;
      return out;
    });
  }
}

const HASH_MODEL = /^hash-(\d+)$/;

export function loadEncoder(model: string): Encoder {
  const m = HASH_MODEL.exec(model);
  if (m) {
    const dim = parseInt(m[1], 10);
    if (dim < 1 || dim > 4096) {
      throw new Error(`model ${model}: dimension out of range`);
    }
    return new HashEncoder(dim, model);
  }
  throw new Error(
    `cannot load model "${model}": only the offline hash-<dim> family is available`
  );
}
