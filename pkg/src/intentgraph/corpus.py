"""Dataset and embedding ingestion, splits, and seed masks."""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass

import numpy as np

VALID_SPLITS = ("train", "validation", "test", "unlabeled")

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class DataError(Exception):
    """Malformed or inconsistent input data."""


def tokenize(text):
    """Lowercase and split on whitespace/punctuation. No stemming."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Utterance:
    id: str
    text: str
    labels: frozenset[int]
    split: str


@dataclass
class Dataset:
    utterances: list[Utterance]
    label_vocab: list[str]
    K: int

    def __post_init__(self):
        self._by_id = {u.id: u for u in self.utterances}

    def __len__(self):
        return len(self.utterances)

    def get(self, utt_id: str) -> Utterance:
        return self._by_id[utt_id]

    def ids(self):
        return [u.id for u in self.utterances]

    def split_ids(self, split: str):
        return [u.id for u in self.utterances if u.split == split]

    def label_name(self, label_id: int) -> str:
        return self.label_vocab[label_id]


@dataclass
class BackgroundCorpus:
    utterances: list[str]


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray]

    def __contains__(self, utt_id):
        return utt_id in self.vectors

    def get(self, utt_id: str) -> np.ndarray:
        try:
            return self.vectors[utt_id]
        except KeyError:
            raise DataError(f"no embedding for utterance id {utt_id!r}") from None


@dataclass(frozen=True)
class SeedMask:
    labeled_ids: frozenset[str]
    known_intents: frozenset[int]

    @property
    def empty(self) -> bool:
        return not self.labeled_ids


def load_dataset(path, format="jsonl", k_override=None) -> Dataset:
    """Load a JSONL dataset; label vocabulary is built in first-seen order."""
    if format != "jsonl":
        raise ValueError(f"unsupported dataset format {format!r}")
    utterances = []
    vocab: list[str] = []
    vocab_index: dict[str, int] = {}
    seen_ids = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON: {exc}") from None
            if not isinstance(rec, dict):
                raise DataError(f"{path}: line {lineno}: record is not an object")
            for key in ("id", "text", "labels", "split"):
                if key not in rec:
                    raise DataError(f"{path}: line {lineno}: missing field {key!r}")
            utt_id = rec["id"]
            if utt_id in seen_ids:
                raise DataError(f"{path}: line {lineno}: duplicate id {utt_id!r}")
            seen_ids.add(utt_id)
            if rec["split"] not in VALID_SPLITS:
                raise DataError(
                    f"{path}: line {lineno}: bad split {rec['split']!r} "
                    f"(expected one of {', '.join(VALID_SPLITS)})"
                )
            if not isinstance(rec["labels"], list):
                raise DataError(f"{path}: line {lineno}: labels must be a list")
            label_ids = []
            for name in rec["labels"]:
                if name not in vocab_index:
                    vocab_index[name] = len(vocab)
                    vocab.append(name)
                label_ids.append(vocab_index[name])
            utterances.append(
                Utterance(
                    id=utt_id,
                    text=rec["text"],
                    labels=frozenset(label_ids),
                    split=rec["split"],
                )
            )
    k = len(vocab) if k_override is None else k_override
    return Dataset(utterances=utterances, label_vocab=vocab, K=k)


def save_dataset(dataset: Dataset, path):
    """Inverse of load_dataset; preserves utterance order and vocab order."""
    with open(path, "w", encoding="utf-8") as fh:
        for u in dataset.utterances:
            labels = [dataset.label_vocab[i] for i in sorted(u.labels)]
            rec = {"id": u.id, "text": u.text, "labels": labels, "split": u.split}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_background(path) -> BackgroundCorpus:
    """One raw utterance per line."""
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    return BackgroundCorpus(utterances=[ln for ln in lines if ln.strip()])


def load_embeddings(path) -> EmbeddingTable:
    """Load the text embedding format: "#dim=<D>" header, then id<TAB>floats."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        m = re.fullmatch(r"#dim=(\d+)", header)
        if not m:
            raise DataError(f"{path}: bad or missing '#dim=<D>' header: {header!r}")
        dim = int(m.group(1))
        vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            utt_id = parts[0]
            if utt_id in vectors:
                raise DataError(f"{path}: duplicate embedding row for id {utt_id!r}")
            if len(parts) - 1 != dim:
                raise DataError(
                    f"{path}: row {utt_id!r} has {len(parts) - 1} values, expected {dim}"
                )
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}: row {utt_id!r}: non-numeric value") from None
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{path}: row {utt_id!r}: non-finite value")
            vectors[utt_id] = vec
    return EmbeddingTable(dim=dim, vectors=vectors)


def save_embeddings(table: EmbeddingTable, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#dim={table.dim}\n")
        for utt_id, vec in table.vectors.items():
            vals = "\t".join(f"{x:.8g}" for x in vec)
            fh.write(f"{utt_id}\t{vals}\n")


def make_seed_mask(dataset: Dataset, kir, labeled_fraction, rng_seed) -> SeedMask:
    """Sample known intents and per-class labeled train utterances.

    kir=0 yields the fully unsupervised mask. Deterministic in rng_seed.
    """
    if not 0 <= kir <= 1:
        raise ValueError(f"kir must be in [0, 1], got {kir}")
    if not 0 < labeled_fraction <= 1:
        raise ValueError(f"labeled_fraction must be in (0, 1], got {labeled_fraction}")
    if kir == 0:
        return SeedMask(labeled_ids=frozenset(), known_intents=frozenset())

    rng = random.Random(rng_seed)
    n_known = math.floor(kir * dataset.K)
    label_ids = list(range(dataset.K))
    rng.shuffle(label_ids)
    known = set(label_ids[:n_known])

    eligible = [
        u for u in dataset.utterances
        if u.split == "train" and u.labels and u.labels <= known
    ]
    if not any(u.labels & known for u in dataset.utterances if u.split == "train"):
        raise DataError(
            "kir > 0 but no train utterance carries a known intent "
            f"(known_intents={sorted(known)})"
        )

    labeled: set[str] = set()
    for label in sorted(known):
        candidates = sorted(u.id for u in eligible if label in u.labels)
        if not candidates:
            continue
        n_take = max(1, int(labeled_fraction * len(candidates) + 0.5))
        rng.shuffle(candidates)
        labeled.update(candidates[:n_take])
    return SeedMask(labeled_ids=frozenset(labeled), known_intents=frozenset(known))
