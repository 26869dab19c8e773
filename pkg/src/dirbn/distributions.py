"""Seeded exact samplers for the layered Gibbs sweep.

All draws go through an RngStream, a deterministic PCG64 stream addressed by
a (seed, stream_id) pair, so any phase of a sweep can be replayed bit for bit.
Vectorised variants consume randomness in a fixed order and are provided for
the hot paths; their per-element marginals match the scalar samplers.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ParameterError",
    "RngStream",
    "sample_gamma",
    "sample_dirichlet",
    "dirichlet_columns",
    "sample_beta",
    "sample_beta_vector",
    "sample_crt",
    "sample_crt_array",
    "crt_expectation",
    "sample_multinomial",
    "multinomial_rows",
    "TINY",
]

# Positivity floor: gamma/beta draws are clamped away from exact zero so that
# downstream Dirichlet parameters, CRT concentrations and log() stay finite.
TINY = 1e-300

_MASK64 = (1 << 64) - 1


class ParameterError(ValueError):
    """A sampler was called outside its parameter domain."""


def _mix64(a: int, b: int) -> int:
    # splitmix64-style combine; collision-free in practice for substream keys
    x = (a + 0x9E3779B97F4A7C15 * (b + 1)) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class RngStream:
    """Deterministic random stream addressed by (seed, stream_id).

    The same pair always yields the same draw sequence; distinct stream ids
    give statistically independent sequences.  Substreams derive new ids by
    hashing, so e.g. one stream per (sweep, phase, layer) can be set up
    without coordination.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self._gen = np.random.default_rng(
            np.random.SeedSequence([self.seed, self.stream_id])
        )

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def substream(self, *key: int) -> "RngStream":
        sid = self.stream_id
        for part in key:
            sid = _mix64(sid, int(part) & _MASK64)
        return RngStream(self.seed, sid)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def sample_gamma(shape, scale, rng: RngStream):
    """Gamma draw parameterised by shape and scale (mean = shape * scale).

    Accepts scalars or arrays (broadcast).  Draws are clamped to TINY so
    tiny shapes can never underflow to exactly zero.
    """
    shape = np.asarray(shape, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    if not np.all(shape > 0):
        raise ParameterError(f"gamma shape must be positive, got {shape!r}")
    if not np.all(scale > 0):
        raise ParameterError(f"gamma scale must be positive, got {scale!r}")
    draw = np.maximum(rng.generator.gamma(shape, scale), TINY)
    return float(draw) if draw.ndim == 0 else draw


def sample_dirichlet(alpha, rng: RngStream) -> np.ndarray:
    """Dirichlet draw via normalised clamped gamma variates.

    The gamma construction keeps every coordinate strictly positive even for
    very small concentrations.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 1 or alpha.size < 2:
        raise ParameterError("dirichlet needs a parameter vector of length >= 2")
    if not np.all(alpha > 0):
        raise ParameterError("dirichlet parameters must all be positive")
    g = np.maximum(rng.generator.standard_gamma(alpha), TINY)
    return g / g.sum()


def dirichlet_columns(alpha: np.ndarray, rng: RngStream) -> np.ndarray:
    """Column-wise Dirichlet draws for a V x K parameter matrix."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 2 or alpha.shape[0] < 2:
        raise ParameterError("expected a V x K parameter matrix with V >= 2")
    if not np.all(alpha > 0):
        raise ParameterError("dirichlet parameters must all be positive")
    g = np.maximum(rng.generator.standard_gamma(alpha), TINY)
    return g / g.sum(axis=0, keepdims=True)


def sample_beta(a: float, b: float, rng: RngStream) -> float:
    """Beta(a, b) draw in (0, 1]; Beta(a, 0) is the point mass at 1."""
    if not a > 0:
        raise ParameterError(f"beta a must be positive, got {a}")
    if b < 0:
        raise ParameterError(f"beta b must be nonnegative, got {b}")
    if b == 0:
        return 1.0
    return float(np.clip(rng.generator.beta(a, b), TINY, 1.0))


def sample_beta_vector(a: np.ndarray, b: np.ndarray, rng: RngStream) -> np.ndarray:
    """Element-wise Beta(a_i, b_i) with the Beta(a, 0) = 1 convention."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not np.all(a > 0):
        raise ParameterError("beta a parameters must all be positive")
    if np.any(b < 0):
        raise ParameterError("beta b parameters must all be nonnegative")
    out = np.ones_like(a)
    live = b > 0
    if np.any(live):
        out[live] = np.clip(rng.generator.beta(a[live], b[live]), TINY, 1.0)
    return out


def sample_crt(n: int, r: float, rng: RngStream) -> int:
    """Chinese Restaurant Table draw: tables after seating n with mass r.

    Simulated exactly as a sum of n Bernoullis with probabilities
    r / (r + i - 1), i = 1..n.  The first Bernoulli always succeeds, so the
    result is 0 iff n = 0 and lies in [1, n] otherwise.
    """
    n = int(n)
    if n < 0:
        raise ParameterError(f"crt count must be nonnegative, got {n}")
    if not r > 0:
        raise ParameterError(f"crt concentration must be positive, got {r}")
    if n == 0:
        return 0
    u = rng.generator.random(n)
    # u * (r + i) < r  <=>  u < r / (r + i), i = 0..n-1; avoids divisions
    return int(np.count_nonzero(u * (r + np.arange(n)) < r))


def sample_crt_array(counts, concentrations, rng: RngStream) -> np.ndarray:
    """Vectorised CRT draws for an array of (count, concentration) pairs.

    Runs one Bernoulli pass per seating round over the cells still active,
    so total work is the sum of the counts.
    """
    counts = np.asarray(counts, dtype=np.int64)
    conc = np.asarray(concentrations, dtype=np.float64)
    if counts.shape != conc.shape:
        raise ParameterError("counts and concentrations must share a shape")
    if np.any(counts < 0):
        raise ParameterError("crt counts must be nonnegative")
    if not np.all(conc > 0):
        raise ParameterError("crt concentrations must all be positive")
    flat_c = counts.ravel()
    flat_r = conc.ravel()
    if flat_c.size == 0:
        return np.zeros(counts.shape, dtype=np.int64)
    order = np.argsort(-flat_c, kind="stable")
    c_sorted = flat_c[order]
    r_sorted = flat_r[order]
    y_sorted = (c_sorted > 0).astype(np.int64)  # seating round 1 always opens a table
    gen = rng.generator
    max_count = int(c_sorted[0])
    for i in range(2, max_count + 1):
        m = int(np.searchsorted(-c_sorted, -i, side="right"))
        if m == 0:
            break
        u = gen.random(m)
        y_sorted[:m] += u * (r_sorted[:m] + (i - 1)) < r_sorted[:m]
    out = np.empty_like(y_sorted)
    out[order] = y_sorted
    return out.reshape(counts.shape)


def crt_expectation(n: int, r: float) -> float:
    """Exact mean of the CRT: sum_{i=1..n} r / (r + i - 1)."""
    n = int(n)
    if n < 0:
        raise ParameterError(f"crt count must be nonnegative, got {n}")
    if not r > 0:
        raise ParameterError(f"crt concentration must be positive, got {r}")
    if n == 0:
        return 0.0
    return float((r / (r + np.arange(n))).sum())


def multinomial_rows(n, pvals, rng: RngStream) -> np.ndarray:
    """Row-wise multinomial draws via sequential conditional binomials.

    ``n`` is a vector of totals and ``pvals`` a matching matrix of
    nonnegative weights (renormalised per row).  Each output row sums to its
    total exactly.  A row with zero total mass but a positive count is a
    parameter-domain error.
    """
    n = np.asarray(n, dtype=np.int64)
    p = np.asarray(pvals, dtype=np.float64)
    if p.ndim != 2 or n.shape != (p.shape[0],):
        raise ParameterError("expected totals (m,) and weights (m, K)")
    if np.any(n < 0):
        raise ParameterError("multinomial totals must be nonnegative")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ParameterError("multinomial weights must be finite and nonnegative")
    mass = p.sum(axis=1)
    if np.any((mass <= 0) & (n > 0)):
        raise ParameterError("zero probability mass with a positive count")
    m, num_slots = p.shape
    out = np.zeros((m, num_slots), dtype=np.int64)
    if m == 0 or num_slots == 0:
        return out
    p = p / np.where(mass > 0, mass, 1.0)[:, None]
    remaining = n.copy()
    tail_mass = np.ones(m)
    gen = rng.generator
    for k in range(num_slots - 1):
        cond = np.zeros(m)
        np.divide(p[:, k], tail_mass, out=cond, where=tail_mass > 0)
        draw = gen.binomial(remaining, np.clip(cond, 0.0, 1.0))
        out[:, k] = draw
        remaining -= draw
        tail_mass -= p[:, k]
    out[:, num_slots - 1] = remaining
    return out


def sample_multinomial(n: int, probs, rng: RngStream) -> np.ndarray:
    """Multinomial draw whose output sums to n exactly."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise ParameterError("probs must be a vector")
    return multinomial_rows(np.asarray([n]), probs[None, :], rng)[0]
