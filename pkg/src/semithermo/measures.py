"""Maximal entropy measure sampling, Lyapunov exponents and fiberwise Green's functions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as K
from .semigroup import MultiMap, Word, _chain_chunk, generator_weights, repelling_fixed_point
from .streams import chunk_map, stream

BURN_IN = 64
_ESCAPED_MODULUS = 1e30


@dataclass(frozen=True)
class BernoulliWeights:
    p: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if not p:
            raise ValueError("empty weight vector")
        if len(p) > 1 and any(not 0.0 < x < 1.0 for x in p):
            raise ValueError("weights must lie in (0, 1)")
        if abs(sum(p) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {sum(p)!r}, not 1")
        object.__setattr__(self, "p", p)

    @classmethod
    def uniform(cls, s: int) -> BernoulliWeights:
        return cls(tuple([1.0 / s] * s))

    @classmethod
    def by_degree(cls, F: MultiMap) -> BernoulliWeights:
        """The weights (d_j / d) paired with the maximal entropy measure."""
        return cls(tuple(d / F.d for d in F.degrees))

    def __len__(self):
        return len(self.p)


def _draw_symbols(p: BernoulliWeights, shape, rng: np.random.Generator) -> np.ndarray:
    """0-based symbols with P(j) = p_j."""
    cum = np.cumsum(p.p)
    cum[-1] = 1.0 + 1e-12
    return np.searchsorted(cum, rng.random(shape), side="right").astype(np.int64)


def sample_bernoulli_word(p: BernoulliWeights, length: int, rng: np.random.Generator) -> Word:
    """i.i.d. word (1-based symbols) of the given length."""
    return tuple(int(j) + 1 for j in _draw_symbols(p, length, rng))


@dataclass(frozen=True)
class MeasureSample:
    word: Word  # forward convention: word[0] is the map applied first at ``point``
    point: complex


@dataclass
class SampleSet:
    """Samples (word prefix, point) of the maximal entropy measure."""

    points: np.ndarray
    words: np.ndarray  # (n, m), 1-based, forward convention
    skipped: int = 0

    def __len__(self):
        return self.points.size

    def __getitem__(self, i) -> MeasureSample:
        return MeasureSample(tuple(int(j) for j in self.words[i]), complex(self.points[i]))

    def pushed_forward(self, F: MultiMap) -> np.ndarray:
        """Fiber coordinates after one skew-product step (omega, z) -> (shift omega, f_{omega_1}(z))."""
        out = np.empty_like(self.points)
        for j in range(1, F.s + 1):
            sel = self.words[:, 0] == j
            out[sel] = F[j].eval_array(self.points[sel])
        return out


def sample_max_entropy(F: MultiMap, burn_in: int = BURN_IN, n_samples: int = 10000, seed: int = 0,
                       prefix: int = 8, chunk: int = 1024) -> SampleSet:
    """Independent backward random walks with generator weights d_j / d.

    Each sample is the endpoint of its own walk from a repelling fixed point
    of f_1; at each step a generator j is chosen with probability d_j/d and
    then one of its d_j preimages uniformly, i.e. every one of the d
    preimages of the skew product is equally likely.
    """
    if burn_in < prefix:
        raise ValueError("burn_in must be at least the recorded prefix length")
    start = repelling_fixed_point(F.maps[0])
    w = generator_weights(F, "degree")
    nchunks = math.ceil(n_samples / chunk)

    def run(k):
        size = min(chunk, n_samples - k * chunk)
        pts, syms, _, status = _chain_chunk(F, start, burn_in, w, stream(seed, "maxent", k), size)
        bad = np.flatnonzero(status != K.OK)
        skipped = 0
        if bad.size:
            p2, s2, _, st2 = _chain_chunk(F, start, burn_in, w, stream(seed, "maxent-retry", k), bad.size)
            pts[bad], syms[bad] = p2, s2
            failed = bad[st2 != K.OK]
            skipped = failed.size
            keep = np.ones(size, dtype=bool)
            keep[failed] = False
            pts, syms = pts[keep], syms[keep]
        # the last backward choice is the first forward symbol
        words = syms[:, ::-1][:, :prefix] + 1
        return pts[:, -1], words, skipped

    parts = chunk_map(run, range(nchunks))
    return SampleSet(
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        sum(p[2] for p in parts),
    )


def lyapunov_mc(F: MultiMap, samples: SampleSet) -> tuple[float, float]:
    """Mean and standard error of log ||f_{omega_1}'(z)|| over the samples."""
    if len(samples) < 1000:
        raise ValueError("need at least 1000 samples")
    vals = np.empty(len(samples))
    for j in range(1, F.s + 1):
        sel = np.flatnonzero(samples.words[:, 0] == j)
        m = F[j]
        nump, denp, numr, denr = m.padded()
        for i in sel:
            vals[i] = K.log_sph_deriv(nump, denp, numr, denr, m.degree, samples.points[i])
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(vals.size))
    return mean, stderr


# Green's functions ----------------------------------------------------------------------
@dataclass(frozen=True)
class GreenEval:
    value: float
    depth: int
    escaped: bool
    degree_product: float


def green_function(F: MultiMap, word: Sequence[int], y: complex, max_depth: int = 64,
                   radius: float | None = None) -> GreenEval:
    """G_omega(y) = lim (1 / deg f_omega|n) log+ |f_omega|n (y)| for polynomial generators.

    Iterates along the word until |z| exceeds ``radius``; the orbit is then
    followed exactly until |z| ~ 1e30 and the remaining limit is completed
    with the leading-coefficient series sum_k log|a_k| / (d_1 ... d_k).
    """
    if not F.is_polynomial:
        raise ValueError("Green's functions need polynomial generators")
    if len(word) < max_depth:
        raise ValueError("word shorter than max_depth")
    R = F.escape_radius() if radius is None else radius
    z = complex(y)
    logdeg = 0.0
    n = 0
    while abs(z) <= R:
        if n == max_depth:
            return GreenEval(0.0, n, False, math.exp(min(logdeg, 700.0)))
        j = word[n]
        z = complex(F[j].num(z))
        logdeg += math.log(F.degrees[j - 1])
        n += 1
    escaped_at = n
    while abs(z) < _ESCAPED_MODULUS and n < len(word):
        j = word[n]
        z = complex(F[j].num(z))
        logdeg += math.log(F.degrees[j - 1])
        n += 1
    total = math.log(abs(z)) / math.exp(logdeg) if np.isfinite(z) else math.inf
    scale = logdeg
    for k in range(n, len(word)):
        j = word[k]
        scale += math.log(F.degrees[j - 1])
        if scale > 745:
            break
        total += math.log(abs(F[j].lead)) / math.exp(scale)
    return GreenEval(max(total, 0.0), escaped_at, True, math.exp(min(logdeg, 700.0)))


def _finite_critical_points(F: MultiMap) -> list[list[tuple[complex, int]]]:
    out = []
    for m in F.maps:
        out.append([(c, k) for c, k in m.critical_points() if np.isfinite(c)])
    return out


def omega_functional(F: MultiMap, word: Sequence[int], max_depth: int = 64, radius: float | None = None,
                     _crit=None) -> float:
    """Sum of G_omega(c) over the finite critical points c of f_{omega_1}, with multiplicity."""
    crit = _crit if _crit is not None else _finite_critical_points(F)
    total = 0.0
    for c, mult in crit[word[0] - 1]:
        total += mult * green_function(F, word, c, max_depth, radius).value
    return total


def lyapunov_green(F: MultiMap, p: BernoulliWeights | None = None, n_words: int = 2000, max_depth: int = 64,
                   seed: int = 0, radius: float | None = None, chunk: int = 512) -> tuple[float, float]:
    """sum_j p_j log d_j + E_tau[Omega], with Monte-Carlo standard error of the second term."""
    if not F.is_polynomial:
        raise ValueError("the Green's-function estimator needs polynomial generators")
    p = p or BernoulliWeights.by_degree(F)
    if len(p) != F.s:
        raise ValueError("weight vector length does not match the number of generators")
    crit = _finite_critical_points(F)
    R = F.escape_radius() if radius is None else radius
    length = max_depth + 64
    nchunks = math.ceil(n_words / chunk)

    def run(k):
        size = min(chunk, n_words - k * chunk)
        syms = _draw_symbols(p, (size, length), stream(seed, "green", k)) + 1
        return np.array([omega_functional(F, tuple(w), max_depth, R, crit) for w in syms.tolist()])

    omegas = np.concatenate(chunk_map(run, range(nchunks)))
    base = math.fsum(pj * math.log(dj) for pj, dj in zip(p.p, F.degrees))
    mean = base + math.fsum(omegas) / omegas.size
    stderr = float(np.std(omegas, ddof=1) / math.sqrt(omegas.size)) if omegas.size > 1 else 0.0
    return mean, stderr


def lyapunov_closed_form(F: MultiMap) -> float:
    """sum (d_j / d) log d_j, the exponent of postcritically bounded polynomial families."""
    return math.fsum(dj / F.d * math.log(dj) for dj in F.degrees)


# escape probability -----------------------------------------------------------------------
def _escape_tables(F: MultiMap):
    dmax = max(F.degrees)
    polys = np.zeros((F.s, dmax + 1), dtype=complex)
    for j, m in enumerate(F.maps):
        polys[j, : m.degree + 1] = m.num.coeffs
    return polys, np.array(F.degrees, dtype=np.int64)


def random_words(p: BernoulliWeights, n_trials: int, n_steps: int, seed: int, chunk: int = 1024) -> np.ndarray:
    """0-based i.i.d. words, one row per trial, drawn chunk by chunk."""
    nchunks = math.ceil(n_trials / chunk)
    rows = [
        _draw_symbols(p, (min(chunk, n_trials - k * chunk), n_steps), stream(seed, "escape", k))
        for k in range(nchunks)
    ]
    return np.concatenate(rows)


def escape_fractions(F: MultiMap, p: BernoulliWeights, points: np.ndarray, n_steps: int = 200,
                     n_trials: int = 1000, radius: float | None = None, seed: int = 0) -> np.ndarray:
    """Escape fraction at many points with one shared set of random words."""
    if not F.is_polynomial:
        raise ValueError("escape probabilities need polynomial generators")
    R = F.escape_radius() if radius is None else radius
    words = random_words(p, n_trials, n_steps, seed)
    polys, degs = _escape_tables(F)
    pts = np.ascontiguousarray(np.asarray(points, dtype=complex).ravel())
    counts = K.escape_counts(pts, words, polys, degs, float(R))
    return (counts / n_trials).reshape(np.shape(points))


def escape_probability(F: MultiMap, p: BernoulliWeights, z: complex, n_steps: int = 200, n_trials: int = 10000,
                       radius: float | None = None, seed: int = 0) -> float:
    """Fraction of random forward orbits of z that leave the escape radius within n_steps."""
    return float(escape_fractions(F, p, np.array([z]), n_steps, n_trials, radius, seed)[0])


def binomial_stderr(value: float, n_trials: int) -> float:
    return math.sqrt(max(value * (1 - value), 0.0) / n_trials)
