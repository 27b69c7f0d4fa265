"""Word n-gram extraction and corpus-association scoring.

An n-gram is scored by how strongly it is associated with the target corpus
relative to the union of the target corpus and a large background corpus,
with a squared-length boost favoring longer phrases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .corpus import BackgroundCorpus, Dataset, tokenize

DEFAULT_N_MAX = 3
DEFAULT_MIN_DF = 5
DEFAULT_TOP_K = 2000


@dataclass
class NgramStats:
    ngram: tuple[str, ...]
    df_target: int
    df_union: int


@dataclass(frozen=True)
class ScoredKeyphrase:
    ngram: tuple[str, ...]
    score: float


@dataclass
class KeyphraseSet:
    items: list[ScoredKeyphrase]
    inverted_index: dict[tuple[str, ...], frozenset[str]]

    def __len__(self):
        return len(self.items)

    def ngrams(self):
        return [kp.ngram for kp in self.items]

    def score_of(self, ngram) -> float:
        for kp in self.items:
            if kp.ngram == ngram:
                return kp.score
        raise KeyError(ngram)

    def restrict(self, ngrams) -> "KeyphraseSet":
        """Subset preserving order; used by feature elimination."""
        keep = set(ngrams)
        items = [kp for kp in self.items if kp.ngram in keep]
        index = {kp.ngram: self.inverted_index[kp.ngram] for kp in items}
        return KeyphraseSet(items=items, inverted_index=index)


def iter_ngrams(tokens, n_max):
    for n in range(1, n_max + 1):
        for i in range(len(tokens) - n + 1):
            yield tuple(tokens[i : i + n])


def extract_ngrams(dataset: Dataset, background: BackgroundCorpus, n_max=DEFAULT_N_MAX):
    """Collect all 1..n_max grams of the target corpus with document frequencies.

    Document frequency counts each utterance at most once regardless of how
    many times the n-gram repeats inside it.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    df_target: dict[tuple[str, ...], int] = {}
    occurrences: dict[tuple[str, ...], set[str]] = {}
    for u in dataset.utterances:
        seen = set(iter_ngrams(tokenize(u.text), n_max))
        for ng in seen:
            df_target[ng] = df_target.get(ng, 0) + 1
            occurrences.setdefault(ng, set()).add(u.id)
    df_union = dict(df_target)
    for text in background.utterances:
        seen = set(iter_ngrams(tokenize(text), n_max))
        for ng in seen:
            if ng in df_union:
                df_union[ng] += 1
    stats = [
        NgramStats(ngram=ng, df_target=df_target[ng], df_union=df_union[ng])
        for ng in sorted(df_target)
    ]
    return stats, occurrences


def score_keyphrase(stats: NgramStats, n_target: int, n_union: int) -> float:
    """len(ngram)^2 * log(df_union) * log(df_target*n_union / (df_union*n_target)).

    Natural logs. Zero whenever the target ratio matches the union ratio or
    the n-gram occurs only once in the union.
    """
    if stats.df_target < 1:
        raise ValueError("df_target must be >= 1")
    if n_target < 1 or n_union < n_target:
        raise ValueError(f"bad corpus sizes n_target={n_target}, n_union={n_union}")
    if stats.df_union < stats.df_target:
        raise ValueError("df_union < df_target")
    if stats.df_union == 0:
        raise ValueError("df_union must be positive")
    ratio = (stats.df_target * n_union) / (stats.df_union * n_target)
    return len(stats.ngram) ** 2 * math.log(stats.df_union) * math.log(ratio)


def build_keyphrase_set(
    stats,
    occurrences,
    n_target,
    n_union,
    min_df=DEFAULT_MIN_DF,
    top_k=DEFAULT_TOP_K,
) -> KeyphraseSet:
    """Threshold by target document frequency, score, rank, truncate.

    Ordering is (score descending, ngram ascending) so ties are deterministic.
    Non-positive scores are dropped: they mark anti-association and would
    only add misleading edges downstream.
    """
    if min_df < 1:
        raise ValueError(f"min_df must be >= 1, got {min_df}")
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    scored = []
    for st in stats:
        if st.df_target < min_df:
            continue
        score = score_keyphrase(st, n_target, n_union)
        if score > 0:
            scored.append(ScoredKeyphrase(ngram=st.ngram, score=score))
    scored.sort(key=lambda kp: (-kp.score, kp.ngram))
    scored = scored[:top_k]
    index = {kp.ngram: frozenset(occurrences[kp.ngram]) for kp in scored}
    return KeyphraseSet(items=scored, inverted_index=index)


def dump_keyphrases(kpset: KeyphraseSet, stats_by_ngram, path):
    """TSV dump: ngram, score, df_target, df_union."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ngram\tscore\tdf_target\tdf_union\n")
        for kp in kpset.items:
            st = stats_by_ngram[kp.ngram]
            fh.write(
                f"{' '.join(kp.ngram)}\t{kp.score:.12g}\t{st.df_target}\t{st.df_union}\n"
            )
