"""Heldout perplexity, NPMI coherence, topic hierarchies, shrinkage stats."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus
from .distributions import ParameterError
from .network import DirBNState, LatentCounts

__all__ = [
    "EvaluationError",
    "perplexity",
    "CooccurrenceStats",
    "build_cooccurrence",
    "npmi_coherence",
    "top_word_ids",
    "top_words",
    "TopicEntry",
    "LinkEntry",
    "TopicHierarchy",
    "extract_hierarchy",
    "ShrinkageStats",
    "shrinkage_stats",
]

_NPMI_EPS = 1e-12
_NPMI_TOP_TOPICS = 50


class EvaluationError(RuntimeError):
    """An evaluation hit a numerically degenerate input."""


def perplexity(phi_samples, theta_samples, heldout: Corpus) -> float:
    """Per-heldout-word perplexity of the posterior predictive mixture.

    The predictive probability of cell (d, v) averages theta_d . phi_v over
    the stored samples; the result is exp of the negative mean log predictive
    over heldout tokens.
    """
    phi_samples = np.asarray(phi_samples)
    theta_samples = np.asarray(theta_samples)
    if phi_samples.ndim != 3 or theta_samples.ndim != 3:
        raise ParameterError("expected sample arrays of shape (S, V, K) and (S, D, K)")
    if phi_samples.shape[0] != theta_samples.shape[0] or phi_samples.shape[0] == 0:
        raise ParameterError("need matching, non-empty sample sets")
    coo = heldout.counts.tocoo()
    if coo.nnz == 0:
        raise ParameterError("heldout corpus is empty")
    d_idx, v_idx, n = coo.row, coo.col, coo.data
    S = phi_samples.shape[0]
    acc = np.zeros(coo.nnz)
    for s in range(S):
        acc += np.einsum("ck,ck->c", theta_samples[s][d_idx, :], phi_samples[s][v_idx, :])
    p = acc / S
    if np.any(p <= 0):
        raise EvaluationError("zero predictive probability for a heldout token")
    total = float(n.sum())
    return float(np.exp(-(n * np.log(p)).sum() / total))


@dataclass
class CooccurrenceStats:
    """Document-level boolean co-occurrence counts over a reference corpus."""

    incidence: sp.csc_matrix  # boolean D x V
    num_docs: int

    def doc_counts(self, word_ids: np.ndarray) -> np.ndarray:
        return np.asarray(self.incidence[:, word_ids].sum(axis=0)).ravel().astype(np.int64)

    def joint_counts(self, word_ids: np.ndarray) -> np.ndarray:
        sub = self.incidence[:, word_ids].toarray().astype(np.int64)
        return sub.T @ sub


def build_cooccurrence(reference: Corpus) -> CooccurrenceStats:
    if reference.num_docs == 0:
        raise ParameterError("reference corpus is empty")
    incidence = (reference.counts > 0).astype(np.int8).tocsc()
    return CooccurrenceStats(incidence=incidence, num_docs=reference.num_docs)


def npmi_coherence(topics, cooc: CooccurrenceStats):
    """Per-topic mean NPMI over top-word pairs, plus the aggregate score.

    The aggregate averages the 50 highest-scoring topics (all topics when
    fewer), which stands in for discarding incoherent leftovers.  Pairs that
    never co-occur score -1 by convention.
    """
    topics = [np.asarray(t, dtype=np.int64) for t in topics]
    if not topics or any(t.size == 0 for t in topics):
        raise ParameterError("every topic needs a non-empty top-word list")
    words = np.unique(np.concatenate(topics))
    pos = {int(w): i for i, w in enumerate(words)}
    doc_counts = cooc.doc_counts(words)
    joint = cooc.joint_counts(words)
    D = cooc.num_docs

    scores = np.empty(len(topics))
    for ti, topic in enumerate(topics):
        idx = np.asarray([pos[int(w)] for w in topic])
        vals = []
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                i, j = idx[a], idx[b]
                if joint[i, j] == 0:
                    vals.append(-1.0)
                    continue
                pj = joint[i, j] / D
                pi = doc_counts[i] / D
                pk = doc_counts[j] / D
                num = np.log(pj + _NPMI_EPS) - np.log(pi + _NPMI_EPS) - np.log(pk + _NPMI_EPS)
                vals.append(float(num / -np.log(pj + _NPMI_EPS)))
        scores[ti] = float(np.mean(vals)) if vals else 0.0
    top = np.sort(scores)[::-1][: min(_NPMI_TOP_TOPICS, len(scores))]
    return scores, float(top.mean())


def top_word_ids(phi_column: np.ndarray, n: int) -> np.ndarray:
    """Ids of the n heaviest words; ties break toward the smaller id."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    col = np.asarray(phi_column, dtype=np.float64)
    n = min(n, col.size)
    order = np.lexsort((np.arange(col.size), -col))
    return order[:n]


def top_words(phi_column: np.ndarray, vocab, n: int) -> list[str]:
    return [vocab[i] for i in top_word_ids(phi_column, n)]


@dataclass
class TopicEntry:
    layer: int
    topic: int
    words: list[str]
    weights: list[float]
    mass: float


@dataclass
class LinkEntry:
    level: int
    parent: int
    child: int
    weight: float


@dataclass
class TopicHierarchy:
    """Layered topics plus column-normalised cross-layer link weights."""

    topics: list[TopicEntry]
    links: list[LinkEntry]
    top_parents: dict[int, list[tuple[int, float]]] = field(default_factory=dict)

    def to_records(self) -> list[dict]:
        recs = [
            {
                "kind": "topic",
                "layer": t.layer,
                "topic_id": t.topic,
                "top_words": t.words,
                "weights": t.weights,
                "mass": t.mass,
            }
            for t in self.topics
        ]
        recs.extend(
            {
                "kind": "link",
                "t": l.level,
                "parent": l.parent,
                "child": l.child,
                "normalized_weight": l.weight,
            }
            for l in self.links
        )
        return recs


def extract_hierarchy(
    state: DirBNState,
    vocab,
    top_n: int = 10,
    link_threshold: float = 0.0,
    layer_masses: list[np.ndarray] | None = None,
) -> TopicHierarchy:
    """Top words per topic on every layer plus thresholded normalised links.

    Link weights are normalised per child column before thresholding, so the
    retained weights of a fully exported child sum to one.  Each bottom topic
    also records its three strongest parents.
    """
    cfg = state.config
    topics: list[TopicEntry] = []
    for t in range(cfg.num_layers):
        phi = state.phi[t]
        masses = (
            layer_masses[t]
            if layer_masses is not None
            else np.zeros(cfg.layer_widths[t])
        )
        for k in range(cfg.layer_widths[t]):
            ids = top_word_ids(phi[:, k], top_n)
            topics.append(
                TopicEntry(
                    layer=t + 1,
                    topic=k,
                    words=[vocab[i] for i in ids],
                    weights=[float(phi[i, k]) for i in ids],
                    mass=float(masses[k]),
                )
            )

    links: list[LinkEntry] = []
    top_parents: dict[int, list[tuple[int, float]]] = {}
    for t in range(cfg.num_layers - 1):
        normalized = state.link_weights[t] / state.link_weights[t].sum(axis=0, keepdims=True)
        for child in range(cfg.layer_widths[t]):
            col = normalized[:, child]
            for parent in range(cfg.layer_widths[t + 1]):
                if col[parent] >= link_threshold:
                    links.append(
                        LinkEntry(level=t + 1, parent=parent, child=child, weight=float(col[parent]))
                    )
            if t == 0:
                order = np.lexsort((np.arange(col.size), -col))[:3]
                top_parents[child] = [(int(p), float(col[p])) for p in order]
    return TopicHierarchy(topics=topics, links=links, top_parents=top_parents)


@dataclass
class ShrinkageStats:
    masses: np.ndarray
    histogram: np.ndarray
    bin_edges: np.ndarray
    active_count: int


def shrinkage_stats(
    counts: LatentCounts, t: int, threshold: float = 0.001, bins: int = 20
) -> ShrinkageStats:
    """Normalised per-topic latent mass at layer t, histogram and active count."""
    if not 0 <= t < len(counts.input_counts):
        raise IndexError(f"layer index {t} out of range 0..{len(counts.input_counts) - 1}")
    col = counts.input_counts[t].sum(axis=0).astype(np.float64)
    total = col.sum()
    masses = col / total if total > 0 else np.zeros_like(col)
    hist, edges = np.histogram(masses, bins=bins, range=(0.0, max(masses.max(), 1e-12)))
    return ShrinkageStats(
        masses=masses,
        histogram=hist,
        bin_edges=edges,
        active_count=int((masses > threshold).sum()),
    )
