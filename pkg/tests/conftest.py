import json

import numpy as np
import pytest

from intentgraph.corpus import Dataset, EmbeddingTable, Utterance


def make_dataset(records, k=None):
    """records: iterable of (id, text, labels, split) with label names as strings."""
    vocab = []
    index = {}
    utts = []
    for utt_id, text, labels, split in records:
        ids = []
        for name in labels:
            if name not in index:
                index[name] = len(vocab)
                vocab.append(name)
            ids.append(index[name])
        utts.append(Utterance(id=utt_id, text=text, labels=frozenset(ids), split=split))
    return Dataset(utterances=utts, label_vocab=vocab, K=k if k is not None else len(vocab))


def make_embeddings(vectors):
    """vectors: dict id -> list of floats."""
    arrays = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
    dim = len(next(iter(arrays.values())))
    return EmbeddingTable(dim=dim, vectors=arrays)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return path


@pytest.fixture
def tiny_dataset():
    return make_dataset(
        [
            ("u1", "book a flight", ["flight"], "train"),
            ("u2", "book me a flight now", ["flight"], "train"),
            ("u3", "play some jazz music", ["music"], "train"),
            ("u4", "play music loud", ["music"], "train"),
            ("u5", "what is the weather", [], "unlabeled"),
        ]
    )
