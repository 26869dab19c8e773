"""Joint-distribution correctness checking for the Gibbs sweep.

Two ways of sampling the same joint over (state, data, latent counts) must
agree: ancestral forward simulation, and a successive-conditional chain that
alternates regenerating the words given the parameters with one full Gibbs
transition.  Matching marginals of summary statistics across the two
samplers validates every conditional in the sweep at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .distributions import RngStream, multinomial_rows
from .network import (
    DirBNConfig,
    compute_prior_cache,
    downward_pass,
    init_state,
    upward_pass,
)
from .topicmodel import init_model, sample_assignments, update_theta

__all__ = ["GewekeSetup", "STATISTICS", "forward_samples", "gibbs_samples"]

STATISTICS = ("eta", "mean_link_weight", "mean_top_layer_count")

_S_FORWARD = 300
_S_CHAIN = 301


@dataclass(frozen=True)
class GewekeSetup:
    config: DirBNConfig
    num_docs: int = 10
    doc_length: int = 20
    alpha_theta: float = 0.5


def _stats(state, counts) -> dict[str, float]:
    if state.link_weights:
        mean_b = float(np.mean(np.concatenate([b.ravel() for b in state.link_weights])))
    else:
        mean_b = 0.0
    return {
        "eta": float(state.eta),
        "mean_link_weight": mean_b,
        "mean_top_layer_count": float(counts.input_counts[-1].mean()),
    }


def _simulate_data(
    theta: np.ndarray, phi1: np.ndarray, doc_length: int, rng: RngStream
) -> tuple[Corpus, np.ndarray]:
    """Draw fixed-length documents given proportions and topics.

    Returns the corpus together with the word-topic counts of the generative
    assignments (per token: topic from theta, word from that topic).
    """
    num_docs = theta.shape[0]
    V = phi1.shape[0]
    doc_topic = multinomial_rows(np.full(num_docs, doc_length), theta, rng)
    d_idx, k_idx = np.nonzero(doc_topic)
    words = multinomial_rows(doc_topic[d_idx, k_idx], phi1[:, k_idx].T, rng)
    dense = np.zeros((num_docs, V), dtype=np.int64)
    np.add.at(dense, d_idx, words)
    word_topic = np.zeros((V, theta.shape[1]), dtype=np.int64)
    np.add.at(word_topic.T, k_idx, words)
    return Corpus.from_dense(dense), word_topic


def _draw_theta(setup: GewekeSetup, rng: RngStream) -> np.ndarray:
    g = np.maximum(
        rng.generator.standard_gamma(
            setup.alpha_theta, size=(setup.num_docs, setup.config.layer_widths[0])
        ),
        1e-300,
    )
    return g / g.sum(axis=1, keepdims=True)


def forward_samples(setup: GewekeSetup, n_samples: int, seed: int) -> dict[str, np.ndarray]:
    """Independent ancestral draws of (state, data) plus one latent-count draw.

    The word-topic counts entering the upward pass are the counts of the
    generative assignments themselves, so (state, data, counts) is one
    coherent draw from the augmented joint.
    """
    out = {name: np.empty(n_samples) for name in STATISTICS}
    root = RngStream(seed, _S_FORWARD)
    for i in range(n_samples):
        rng = root.substream(i)
        state = init_state(setup.config, rng)
        theta = _draw_theta(setup, rng)
        _, word_topic = _simulate_data(theta, state.phi[0], setup.doc_length, rng)
        cache = compute_prior_cache(state)
        counts = upward_pass(state, cache, word_topic, rng)
        for name, value in _stats(state, counts).items():
            out[name][i] = value
    return out


def gibbs_samples(
    setup: GewekeSetup,
    n_samples: int,
    seed: int,
    thin: int = 5,
    burnin: int = 500,
) -> dict[str, np.ndarray]:
    """Successive-conditional chain: regenerate words, then one Gibbs sweep.

    Statistics are recorded every ``thin`` sweeps after ``burnin``; the state
    marginals must match the forward sampler if every conditional is correct.
    """
    out = {name: np.empty(n_samples) for name in STATISTICS}
    rng = RngStream(seed, _S_CHAIN)
    state = init_state(setup.config, rng)
    theta = _draw_theta(setup, rng)
    corpus, _ = _simulate_data(theta, state.phi[0], setup.doc_length, rng)
    model = init_model(corpus, setup.config.layer_widths[0], setup.alpha_theta, rng)
    model.theta = theta
    cache = compute_prior_cache(state)
    collected = 0
    sweep_idx = 0
    while collected < n_samples:
        sweep_idx += 1
        sweep = rng.substream(sweep_idx)
        corpus, _ = _simulate_data(model.theta, state.phi[0], setup.doc_length, sweep)
        sample_assignments(model, corpus, state.phi[0], sweep)
        update_theta(model, sweep.substream(1))
        counts = upward_pass(state, cache, model.word_topic_counts, sweep.substream(2))
        cache = downward_pass(state, counts, sweep.substream(3))
        if sweep_idx > burnin and (sweep_idx - burnin) % thin == 0:
            for name, value in _stats(state, counts).items():
                out[name][collected] = value
            collected += 1
    return out
