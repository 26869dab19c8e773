"""Bag-of-words corpora: loading, saving, and the three evaluation splits.

File formats
------------
docword: first line "D V NNZ"; then one "doc_id word_id count" triple per
line with 1-based ids and count >= 1 (UCI bag-of-words layout).
vocab:   one word per line; the line number is the word id.
labels:  optional, one integer per line aligned with document order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .distributions import ParameterError, RngStream

__all__ = [
    "Corpus",
    "CorpusFormatError",
    "HeldoutSplit",
    "load_corpus",
    "save_corpus",
    "split_documents",
    "split_words",
    "subsample_words",
]

# Fixed substream ids so the three split operations decorrelate even when the
# caller reuses one seed.
_DOC_SPLIT_STREAM = 11
_WORD_SPLIT_STREAM = 12
_SUBSAMPLE_STREAM = 13


class CorpusFormatError(ValueError):
    """A corpus file violates the documented format."""


@dataclass
class Corpus:
    """Sparse document-word count matrix plus vocabulary."""

    vocab: list[str]
    counts: sp.csr_matrix
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.counts = sp.csr_matrix(self.counts, dtype=np.int64)
        self.counts.eliminate_zeros()

    @property
    def num_docs(self) -> int:
        return self.counts.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.counts.shape[1]

    @property
    def total_tokens(self) -> int:
        return int(self.counts.sum())

    def doc_lengths(self) -> np.ndarray:
        return np.asarray(self.counts.sum(axis=1)).ravel().astype(np.int64)

    def dense(self) -> np.ndarray:
        return self.counts.toarray()

    @classmethod
    def from_dense(cls, dense, vocab=None, labels=None) -> "Corpus":
        dense = np.asarray(dense, dtype=np.int64)
        if vocab is None:
            vocab = [f"w{i:04d}" for i in range(dense.shape[1])]
        return cls(vocab=list(vocab), counts=sp.csr_matrix(dense), labels=labels)

    def validate(self) -> None:
        if len(self.vocab) != self.vocab_size:
            raise CorpusFormatError(
                f"vocabulary has {len(self.vocab)} entries for {self.vocab_size} columns"
            )
        if self.counts.nnz and self.counts.data.min() < 1:
            raise CorpusFormatError("stored counts must all be >= 1")
        if self.labels is not None and len(self.labels) != self.num_docs:
            raise CorpusFormatError("labels are not aligned with documents")


@dataclass
class HeldoutSplit:
    """Per-document token split: observed half plus heldout remainder."""

    observed: Corpus
    heldout: Corpus
    seed: int = 0

    def recomposes(self, source: Corpus) -> bool:
        delta = (self.observed.counts + self.heldout.counts) - source.counts
        return delta.nnz == 0


def load_corpus(docword_path, vocab_path, labels_path=None) -> Corpus:
    """Load a docword/vocab(/labels) triple into a Corpus.

    Malformed lines raise CorpusFormatError with the offending line number;
    word ids outside the vocabulary raise an IndexError-flavoured format
    error as well.
    """
    vocab = [
        line.rstrip("\n") for line in Path(vocab_path).read_text(encoding="utf-8").splitlines()
    ]
    num_words = len(vocab)

    with open(docword_path, encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 3:
            raise CorpusFormatError(f"{docword_path}:1: header must be 'D V NNZ'")
        try:
            num_docs, header_v, nnz = (int(p) for p in parts)
        except ValueError as exc:
            raise CorpusFormatError(f"{docword_path}:1: non-integer header field") from exc
        if header_v != num_words:
            raise CorpusFormatError(
                f"{docword_path}:1: header vocabulary size {header_v} "
                f"!= vocab file line count {num_words}"
            )
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.int64)
        filled = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise CorpusFormatError(f"{docword_path}:{lineno}: expected 3 fields")
            try:
                d, w, c = (int(p) for p in parts)
            except ValueError as exc:
                raise CorpusFormatError(f"{docword_path}:{lineno}: non-integer field") from exc
            if not 1 <= d <= num_docs:
                raise CorpusFormatError(
                    f"{docword_path}:{lineno}: doc id {d} out of range 1..{num_docs}"
                )
            if not 1 <= w <= num_words:
                raise CorpusFormatError(
                    f"{docword_path}:{lineno}: word id {w} out of range 1..{num_words}"
                )
            if c <= 0:
                raise CorpusFormatError(f"{docword_path}:{lineno}: count must be >= 1, got {c}")
            if filled >= nnz:
                raise CorpusFormatError(
                    f"{docword_path}:{lineno}: more triples than header NNZ {nnz}"
                )
            rows[filled] = d - 1
            cols[filled] = w - 1
            vals[filled] = c
            filled += 1
    if filled != nnz:
        raise CorpusFormatError(f"{docword_path}: header NNZ {nnz} but {filled} triples found")

    counts = sp.csr_matrix(
        (vals[:filled], (rows[:filled], cols[:filled])), shape=(num_docs, num_words)
    )

    labels = None
    if labels_path is not None:
        raw = Path(labels_path).read_text(encoding="utf-8").split()
        labels = np.asarray([int(x) for x in raw], dtype=np.int64)
        if len(labels) != num_docs:
            raise CorpusFormatError(
                f"{labels_path}: {len(labels)} labels for {num_docs} documents"
            )

    corpus = Corpus(vocab=vocab, counts=counts, labels=labels)
    corpus.validate()
    return corpus


def save_corpus(corpus: Corpus, docword_path, vocab_path=None) -> None:
    """Write a corpus back out in docword (and optionally vocab) format."""
    coo = corpus.counts.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{corpus.num_docs} {corpus.vocab_size} {coo.nnz}"]
    lines.extend(
        f"{coo.row[i] + 1} {coo.col[i] + 1} {coo.data[i]}" for i in order
    )
    Path(docword_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if vocab_path is not None:
        Path(vocab_path).write_text("\n".join(corpus.vocab) + "\n", encoding="utf-8")


def split_documents(corpus: Corpus, train_fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Disjoint seeded document partition; train gets round(fraction * D) docs."""
    if corpus.num_docs == 0:
        raise ParameterError("cannot split an empty corpus")
    if not 0.0 < train_fraction < 1.0:
        raise ParameterError(f"train fraction must lie in (0, 1), got {train_fraction}")
    rng = RngStream(seed, _DOC_SPLIT_STREAM)
    perm = rng.generator.permutation(corpus.num_docs)
    n_train = int(np.floor(train_fraction * corpus.num_docs + 0.5))
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])

    def _take(idx):
        labels = corpus.labels[idx] if corpus.labels is not None else None
        return Corpus(vocab=corpus.vocab, counts=corpus.counts[idx], labels=labels)

    return _take(train_idx), _take(test_idx)


def split_words(corpus: Corpus, seed: int) -> HeldoutSplit:
    """Randomly split each document's tokens: ceil(n/2) observed, rest heldout.

    Documents with a single token keep it on the observed side so that topic
    proportions can always be inferred.  observed + heldout recompose the
    source counts exactly.
    """
    if corpus.num_docs == 0:
        raise ParameterError("cannot split an empty corpus")
    rng = RngStream(seed, _WORD_SPLIT_STREAM)
    gen = rng.generator
    indptr = corpus.counts.indptr
    data = corpus.counts.data
    observed = np.zeros_like(data)
    for d in range(corpus.num_docs):
        lo, hi = indptr[d], indptr[d + 1]
        if lo == hi:
            continue
        cell_counts = data[lo:hi]
        n = int(cell_counts.sum())
        tokens = np.repeat(np.arange(hi - lo), cell_counts)
        picked = gen.permutation(n)[: (n + 1) // 2]
        observed[lo:hi] = np.bincount(tokens[picked], minlength=hi - lo)
    held = data - observed

    def _rebuild(new_data):
        mat = sp.csr_matrix(
            (new_data.copy(), corpus.counts.indices.copy(), indptr.copy()),
            shape=corpus.counts.shape,
        )
        return Corpus(vocab=corpus.vocab, counts=mat, labels=corpus.labels)

    return HeldoutSplit(observed=_rebuild(observed), heldout=_rebuild(held), seed=seed)


def subsample_words(corpus: Corpus, proportion: float, seed: int) -> Corpus:
    """Keep a uniform random round(proportion * n_d) tokens per document."""
    if not 0.0 < proportion <= 1.0:
        raise ParameterError(f"proportion must lie in (0, 1], got {proportion}")
    if proportion == 1.0:
        return Corpus(vocab=corpus.vocab, counts=corpus.counts.copy(), labels=corpus.labels)
    rng = RngStream(seed, _SUBSAMPLE_STREAM)
    gen = rng.generator
    indptr = corpus.counts.indptr
    data = corpus.counts.data
    kept = np.zeros_like(data)
    for d in range(corpus.num_docs):
        lo, hi = indptr[d], indptr[d + 1]
        if lo == hi:
            continue
        cell_counts = data[lo:hi]
        n = int(cell_counts.sum())
        n_keep = int(np.floor(proportion * n + 0.5))
        if n_keep == 0:
            continue
        tokens = np.repeat(np.arange(hi - lo), cell_counts)
        picked = gen.permutation(n)[:n_keep]
        kept[lo:hi] = np.bincount(tokens[picked], minlength=hi - lo)
    mat = sp.csr_matrix(
        (kept, corpus.counts.indices.copy(), indptr.copy()), shape=corpus.counts.shape
    )
    return Corpus(vocab=corpus.vocab, counts=mat, labels=corpus.labels)
