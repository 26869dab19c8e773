"""Finite conjugate base topic model and the joint training loop.

The base model is the classic non-collapsed sampler: explicit per-document
topic proportions with a symmetric Dirichlet prior, explicit bottom topics
(owned by the layered prior), and per-token topic assignments.  Its only job
is to supply the V x K_1 word-topic count matrix that feeds the upward pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .distributions import ParameterError, RngStream, multinomial_rows
from .network import (
    DirBNConfig,
    DirBNState,
    LatentCounts,
    compute_prior_cache,
    downward_pass,
    init_state,
    upward_pass,
)

__all__ = [
    "TopicModelState",
    "TrainSettings",
    "TrainResult",
    "init_model",
    "sample_assignments",
    "update_theta",
    "train",
    "infer_theta_heldout",
    "layer_masses",
]

_CELL_CHUNK = 65536

# substream tags for the per-sweep phases
_S_MODEL_INIT = 100
_S_ASSIGN = 101
_S_THETA = 102
_S_UPWARD = 103
_S_DOWNWARD = 104
_S_HELDOUT = 105


@dataclass
class TopicModelState:
    """Topic proportions, per-token assignments and their count matrices."""

    theta: np.ndarray             # num_docs x K, rows on the simplex
    token_topics: np.ndarray      # one topic id per token, documents concatenated
    word_topic_counts: np.ndarray # V x K
    doc_topic_counts: np.ndarray  # num_docs x K
    alpha_theta: float

    @property
    def num_topics(self) -> int:
        return self.theta.shape[1]

    def audit(self, corpus: Corpus) -> None:
        """Recompute both count matrices from the raw assignments."""
        V, K = self.word_topic_counts.shape
        token_words = np.repeat(corpus.counts.indices, corpus.counts.data)
        token_docs = np.repeat(np.arange(corpus.num_docs), corpus.doc_lengths())
        wt = np.bincount(token_words * K + self.token_topics, minlength=V * K).reshape(V, K)
        dt = np.bincount(token_docs * K + self.token_topics, minlength=corpus.num_docs * K)
        dt = dt.reshape(corpus.num_docs, K)
        if not np.array_equal(wt, self.word_topic_counts):
            raise AssertionError("word-topic counts inconsistent with assignments")
        if not np.array_equal(dt, self.doc_topic_counts):
            raise AssertionError("doc-topic counts inconsistent with assignments")


def _corpus_cells(corpus: Corpus):
    """Flattened nonzero cells of the doc-word matrix: (doc, word, count)."""
    csr = corpus.counts
    d_idx = np.repeat(np.arange(corpus.num_docs), np.diff(csr.indptr))
    return d_idx, csr.indices.astype(np.int64), csr.data.astype(np.int64)


def init_model(corpus: Corpus, num_topics: int, alpha_theta: float, rng: RngStream) -> TopicModelState:
    """Uniform random assignments, consistent counts, theta from its conditional."""
    if num_topics < 1:
        raise ParameterError("need at least one topic")
    if not alpha_theta > 0:
        raise ParameterError("alpha_theta must be positive")
    stream = rng.substream(_S_MODEL_INIT)
    K = num_topics
    V = corpus.vocab_size
    D = corpus.num_docs
    total = corpus.total_tokens
    token_topics = stream.generator.integers(0, K, size=total, dtype=np.int64)
    d_idx, v_idx, cell_counts = _corpus_cells(corpus)
    token_words = np.repeat(v_idx, cell_counts)
    token_docs = np.repeat(d_idx, cell_counts)
    word_topic = np.bincount(token_words * K + token_topics, minlength=V * K).reshape(V, K)
    doc_topic = np.bincount(token_docs * K + token_topics, minlength=D * K).reshape(D, K)
    model = TopicModelState(
        theta=np.empty((D, K)),
        token_topics=token_topics,
        word_topic_counts=word_topic.astype(np.int64),
        doc_topic_counts=doc_topic.astype(np.int64),
        alpha_theta=float(alpha_theta),
    )
    update_theta(model, stream)
    return model


def sample_assignments(
    model: TopicModelState, corpus: Corpus, phi1: np.ndarray, rng: RngStream
) -> float:
    """Resample every token's topic from theta * phi and rebuild the counts.

    Tokens sharing a (doc, word) cell are exchangeable, so each cell draws a
    multinomial over topics.  Returns the token log likelihood under the
    current parameters (computed before the draw).
    """
    stream = rng.substream(_S_ASSIGN)
    K = model.num_topics
    V, D = corpus.vocab_size, corpus.num_docs
    d_idx, v_idx, cell_counts = _corpus_cells(corpus)
    word_topic = np.zeros((V, K), dtype=np.int64)
    doc_topic = np.zeros((D, K), dtype=np.int64)
    token_topics = np.empty(int(cell_counts.sum()), dtype=np.int64)
    loglik = 0.0
    filled = 0
    for lo in range(0, d_idx.size, _CELL_CHUNK):
        sl = slice(lo, min(lo + _CELL_CHUNK, d_idx.size))
        w = model.theta[d_idx[sl], :] * phi1[v_idx[sl], :]
        mass = w.sum(axis=1)
        if np.any(mass <= 0):
            raise ParameterError("zero assignment mass for an observed token")
        loglik += float((cell_counts[sl] * np.log(mass)).sum())
        alloc = multinomial_rows(cell_counts[sl], w, stream)
        np.add.at(word_topic, v_idx[sl], alloc)
        np.add.at(doc_topic, d_idx[sl], alloc)
        n_tok = int(cell_counts[sl].sum())
        token_topics[filled : filled + n_tok] = np.repeat(
            np.tile(np.arange(K), alloc.shape[0]), alloc.ravel()
        )
        filled += n_tok
    model.token_topics = token_topics
    model.word_topic_counts = word_topic
    model.doc_topic_counts = doc_topic
    return loglik


def update_theta(model: TopicModelState, rng: RngStream) -> None:
    """Dirichlet-conditional redraw of every document's topic proportions."""
    alpha = model.alpha_theta + model.doc_topic_counts
    g = np.maximum(rng.generator.standard_gamma(alpha), 1e-300)
    model.theta = g / g.sum(axis=1, keepdims=True)


def layer_masses(counts: LatentCounts) -> list[np.ndarray]:
    """Normalised per-topic latent mass for every layer (zeros when empty)."""
    masses = []
    for x in counts.input_counts:
        col = x.sum(axis=0).astype(np.float64)
        total = col.sum()
        masses.append(col / total if total > 0 else np.zeros_like(col))
    return masses


@dataclass(frozen=True)
class TrainSettings:
    iterations: int = 3000
    burnin: int = 1500
    thinning: int = 10
    alpha_theta: float = 0.1
    seed: int = 0
    activity_threshold: float = 0.001

    def __post_init__(self):
        if self.iterations < 0 or self.burnin < 0 or self.thinning < 1:
            raise ParameterError("iterations/burnin must be >= 0 and thinning >= 1")
        if self.burnin > self.iterations:
            raise ParameterError("burnin cannot exceed the iteration count")


@dataclass
class TrainResult:
    state: DirBNState
    model: TopicModelState
    theta_samples: np.ndarray   # S x D x K_1
    phi1_samples: np.ndarray    # S x V x K_1
    final_masses: list[np.ndarray]
    mass_history: list[np.ndarray]  # per layer, iterations x K_t
    log_lines: list[str]
    degenerate_allocations: int = 0


def train(
    corpus: Corpus,
    config: DirBNConfig,
    settings: TrainSettings,
    log_fn=None,
) -> TrainResult:
    """Run the full Gibbs chain and collect thinned posterior samples.

    Each iteration: token assignments, topic proportions, upward pass,
    downward pass.  After burnin, (theta, bottom topics) pairs are stored at
    the thinning interval.  One log line per iteration records the token log
    likelihood, the active-topic count per layer and the elapsed seconds.
    """
    if config.layer_widths[0] < 1:
        raise ParameterError("bottom layer width must be positive")
    rng = RngStream(settings.seed)
    state = init_state(config, rng)
    model = init_model(corpus, config.layer_widths[0], settings.alpha_theta, rng)
    cache = compute_prior_cache(state)

    theta_samples, phi1_samples, log_lines = [], [], []
    mass_history = [
        np.zeros((settings.iterations, k)) for k in config.layer_widths
    ]
    counts = LatentCounts(input_counts=[model.word_topic_counts])
    degenerate = 0
    for it in range(1, settings.iterations + 1):
        tic = time.perf_counter()
        sweep = rng.substream(it)
        loglik = sample_assignments(model, corpus, state.phi[0], sweep.substream(_S_ASSIGN))
        update_theta(model, sweep.substream(_S_THETA))
        counts = upward_pass(
            state, cache, model.word_topic_counts, sweep.substream(_S_UPWARD)
        )
        cache = downward_pass(state, counts, sweep.substream(_S_DOWNWARD))
        degenerate += counts.degenerate_allocations

        masses = layer_masses(counts)
        active = []
        for t, m in enumerate(masses):
            mass_history[t][it - 1] = m
            active.append(int((m > settings.activity_threshold).sum()))
        line = (
            f"{it}\t{loglik:.6f}\t{','.join(str(a) for a in active)}"
            f"\t{time.perf_counter() - tic:.3f}"
        )
        log_lines.append(line)
        if log_fn is not None:
            log_fn(line)

        if it > settings.burnin and (it - settings.burnin) % settings.thinning == 0:
            theta_samples.append(model.theta.copy())
            phi1_samples.append(state.phi[0].copy())

    k1 = config.layer_widths[0]
    theta_arr = (
        np.stack(theta_samples)
        if theta_samples
        else np.zeros((0, corpus.num_docs, k1))
    )
    phi_arr = (
        np.stack(phi1_samples)
        if phi1_samples
        else np.zeros((0, corpus.vocab_size, k1))
    )
    return TrainResult(
        state=state,
        model=model,
        theta_samples=theta_arr,
        phi1_samples=phi_arr,
        final_masses=layer_masses(counts),
        mass_history=mass_history,
        log_lines=log_lines,
        degenerate_allocations=degenerate,
    )


def infer_theta_heldout(
    phi1_samples: np.ndarray,
    observed: Corpus,
    alpha_theta: float,
    inner_iterations: int,
    seed: int,
) -> np.ndarray:
    """Topic-proportion estimates for test documents, one per topic sample.

    For each stored bottom-topic sample, the assignment/theta pair is
    iterated on the observed halves with the topics frozen; the returned
    estimate is the conditional mean given the final assignment counts, so
    an empty document yields exactly the uniform prior mean.
    """
    phi1_samples = np.asarray(phi1_samples)
    if phi1_samples.ndim != 3:
        raise ParameterError("expected topic samples of shape (S, V, K)")
    if inner_iterations < 1:
        raise ParameterError("inner_iterations must be >= 1")
    S, _, K = phi1_samples.shape
    D = observed.num_docs
    out = np.empty((S, D, K))
    rng = RngStream(seed, _S_HELDOUT)
    doc_totals = observed.doc_lengths()[:, None]
    for s in range(S):
        stream = rng.substream(s)
        model = init_model(observed, K, alpha_theta, stream)
        for it in range(inner_iterations):
            sweep = stream.substream(it + 1)
            sample_assignments(model, observed, phi1_samples[s], sweep)
            update_theta(model, sweep.substream(_S_THETA))
        post = alpha_theta + model.doc_topic_counts
        out[s] = post / (K * alpha_theta + doc_totals)
    return out
