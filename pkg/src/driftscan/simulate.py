"""Wright-Fisher forward simulator with sampling and pool sequencing.

Generates the validation datasets used for null calibration, power
analysis and the empirical-FDR baseline: per locus, a trajectory of true
allele frequencies (drift + optional selection), then at each sequenced
generation a binomial sample of alleles followed by binomial read
sampling at a drawn coverage.

Loci are simulated in fixed-size blocks, each with its own RNG stream
derived from (seed, block index), so results are bit-identical no matter
how blocks are scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

__all__ = [
    "SimConfig",
    "SimData",
    "step_selection",
    "simulate_trajectory",
    "sample_and_pool",
    "simulate_experiment",
    "iter_blocks",
    "empirical_fdr_cutoff",
    "BLOCK_SIZE",
]

BLOCK_SIZE = 1 << 16  # loci per RNG block; fixed so partitioning never matters


def step_selection(p, s, h):
    """Deterministic next-generation frequency under diploid selection.

    Genotype fitnesses are 1 : 1+h*s : 1+s for 0, 1 and 2 copies of
    allele 1.  Fixed points at p = 0 and p = 1; identity when s = 0.
    """
    p = np.asarray(p, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    het = 1.0 + h * s
    num = p * p * (1.0 + s) + p * (1.0 - p) * het
    wbar = num + (1.0 - p) * (p * het + (1.0 - p))
    return num / wbar


def simulate_trajectory(p0, ne, generations, s, h, rng):
    """True allele frequencies at the requested generations.

    Each generation applies :func:`step_selection` and then resamples
    2*ne gametes binomially; 0 and 1 are absorbing.  Returns an array of
    shape (len(generations),) + shape(p0).
    """
    times = np.asarray(generations, dtype=np.int64)
    if times[0] != 0 or np.any(np.diff(times) <= 0):
        raise ValueError("generations must start at 0 and increase strictly")
    p = np.asarray(p0, dtype=np.float64).copy()
    two_ne = 2 * int(ne)
    out = np.empty((len(times),) + p.shape, dtype=np.float64)
    ti = 0
    for g in range(int(times[-1]) + 1):
        if g == times[ti]:
            out[ti] = p
            ti += 1
        if g < times[-1]:
            p = rng.binomial(two_ne, step_selection(p, s, h)) / two_ne
    return out


def _draw_coverage(spec: str, rng, size):
    kind, _, arg = spec.partition(":")
    if kind == "fixed":
        c = int(arg)
        if c < 1:
            raise ValueError("fixed coverage must be >= 1")
        return np.full(size, c, dtype=np.int64), 0
    if kind == "poisson":
        lam = float(arg)
        if lam <= 0:
            raise ValueError("poisson coverage mean must be positive")
        cov = rng.poisson(lam, size)
        resampled = 0
        while True:
            zero = cov == 0
            if not zero.any():
                break
            resampled += int(zero.sum())
            cov[zero] = rng.poisson(lam, int(zero.sum()))
        return cov, resampled
    raise ValueError(f"unknown coverage spec {spec!r}")


def sample_and_pool(p_true, sample_size, coverage, rng):
    """One sequencing event: allele sample, coverage draw, read counts.

    Returns (sample_count, read_count, coverage_drawn).  Coverage draws
    of zero are resampled so every locus keeps an observation.
    """
    p_true = np.asarray(p_true, dtype=np.float64)
    sc = rng.binomial(sample_size, p_true)
    cov, _ = _draw_coverage(coverage, rng, p_true.shape or (1,))
    cov = cov.reshape(p_true.shape) if p_true.shape else cov[0]
    reads = rng.binomial(cov, sc / sample_size)
    return sc, reads, cov


def _draw_start(spec: str, rng, size):
    kind, _, arg = spec.partition(":")
    if kind == "uniform":
        return rng.uniform(0.0, 1.0, size)
    if kind == "beta":
        a, b = (float(v) for v in arg.split(","))
        if a <= 0 or b <= 0:
            raise ValueError("beta parameters must be positive")
        return rng.beta(a, b, size)
    if kind == "fixed":
        p = float(arg)
        if not 0.0 <= p <= 1.0:
            raise ValueError("fixed start frequency must lie in [0, 1]")
        return np.full(size, p, dtype=np.float64)
    raise ValueError(f"unknown start spec {spec!r}")


def _draw_s(spec: str, rng, size):
    kind, _, arg = spec.partition(":")
    if kind == "fixed":
        return np.full(size, float(arg), dtype=np.float64)
    if kind == "exp":
        mean = float(arg)
        if mean <= 0:
            raise ValueError("exponential mean must be positive")
        return rng.exponential(mean, size)
    raise ValueError(f"unknown selection spec {spec!r}")


@dataclass(frozen=True)
class SimConfig:
    """Configuration of one simulated experiment.

    ``start`` is one of ``uniform``, ``beta:a,b`` or ``fixed:p``;
    ``coverage`` is ``poisson:mean`` or ``fixed:c``; ``selection`` is
    ``fixed:s`` or ``exp:mean`` and applies to the first
    ``selected_fraction`` of loci (the rest are neutral, s = 0).
    """

    n_loci: int
    ne: int
    generations: tuple[int, ...]
    start: str = "uniform"
    sample_size: int = 1000
    coverage: str = "poisson:80"
    replicates: int = 1
    selected_fraction: float = 0.0
    selection: str = "fixed:0.1"
    dominance: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "generations",
                           tuple(int(g) for g in self.generations))
        g = self.generations
        if not g or g[0] != 0 or any(b <= a for a, b in zip(g, g[1:])):
            raise ValueError("generations must start at 0 and increase strictly")
        if self.n_loci < 0 or self.ne < 1 or self.sample_size < 1:
            raise ValueError("n_loci >= 0, ne >= 1 and sample_size >= 1 required")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")
        if not 0.0 <= self.selected_fraction <= 1.0:
            raise ValueError("selected_fraction must lie in [0, 1]")

    @property
    def n_selected(self) -> int:
        return int(round(self.selected_fraction * self.n_loci))


@dataclass
class SimData:
    """Simulated experiment: truth plus observations, (K, T, n) arrays."""

    config: SimConfig
    times: np.ndarray
    true_freq: np.ndarray      # float64 (K, T, n)
    sample_count: np.ndarray   # int64   (K, T, n)
    read_count: np.ndarray     # int64   (K, T, n)
    coverage: np.ndarray       # int64   (K, T, n)
    s: np.ndarray              # float64 (n,)
    selected: np.ndarray       # bool    (n,)
    n_coverage_resampled: int = 0

    @property
    def n_loci(self) -> int:
        return self.s.shape[0]


def _simulate_block(cfg: SimConfig, block: int, lo: int, hi: int) -> SimData:
    nb = hi - lo
    rng = np.random.default_rng([cfg.seed, block])
    times = np.asarray(cfg.generations, dtype=np.int64)
    K, T = cfg.replicates, len(times)

    p0 = _draw_start(cfg.start, rng, nb)
    s = np.zeros(nb, dtype=np.float64)
    selected = np.zeros(nb, dtype=bool)
    n_sel_here = max(0, min(hi, cfg.n_selected) - lo)
    if n_sel_here:
        selected[:n_sel_here] = True
        s[:n_sel_here] = _draw_s(cfg.selection, rng, n_sel_here)

    # replicates share the starting frequency (common founder population)
    # but drift and are sequenced independently; fold them into one wide
    # array so each generation is a single vectorized draw
    P = np.tile(p0, K)
    S = np.tile(s, K)
    true_freq = np.empty((K, T, nb), dtype=np.float64)
    sample_count = np.empty((K, T, nb), dtype=np.int64)
    read_count = np.empty((K, T, nb), dtype=np.int64)
    coverage = np.empty((K, T, nb), dtype=np.int64)
    resampled = 0
    two_ne = 2 * cfg.ne
    ti = 0
    for g in range(int(times[-1]) + 1):
        if g == times[ti]:
            sc = rng.binomial(cfg.sample_size, P)
            cov, rz = _draw_coverage(cfg.coverage, rng, K * nb)
            reads = rng.binomial(cov, sc / cfg.sample_size)
            true_freq[:, ti] = P.reshape(K, nb)
            sample_count[:, ti] = sc.reshape(K, nb)
            read_count[:, ti] = reads.reshape(K, nb)
            coverage[:, ti] = cov.reshape(K, nb)
            resampled += rz
            ti += 1
        if g < times[-1]:
            P = rng.binomial(two_ne, step_selection(P, S, cfg.dominance)) / two_ne
    return SimData(cfg, times, true_freq, sample_count, read_count, coverage,
                   s, selected, resampled)


def iter_blocks(cfg: SimConfig) -> Iterator[SimData]:
    """Yield the experiment block by block (bounded memory)."""
    for block in range(0, (cfg.n_loci + BLOCK_SIZE - 1) // BLOCK_SIZE):
        lo = block * BLOCK_SIZE
        yield _simulate_block(cfg, block, lo, min(lo + BLOCK_SIZE, cfg.n_loci))


def simulate_experiment(cfg: SimConfig) -> SimData:
    """Simulate the full experiment into one in-memory dataset."""
    times = np.asarray(cfg.generations, dtype=np.int64)
    K, T, n = cfg.replicates, len(times), cfg.n_loci
    data = SimData(cfg, times,
                   np.empty((K, T, n)), np.empty((K, T, n), np.int64),
                   np.empty((K, T, n), np.int64), np.empty((K, T, n), np.int64),
                   np.empty(n), np.empty(n, bool))
    for block, chunk in enumerate(iter_blocks(cfg)):
        lo = block * BLOCK_SIZE
        sl = slice(lo, lo + chunk.n_loci)
        data.true_freq[:, :, sl] = chunk.true_freq
        data.sample_count[:, :, sl] = chunk.sample_count
        data.read_count[:, :, sl] = chunk.read_count
        data.coverage[:, :, sl] = chunk.coverage
        data.s[sl] = chunk.s
        data.selected[sl] = chunk.selected
        data.n_coverage_resampled += chunk.n_coverage_resampled
    return data


def empirical_fdr_cutoff(null_pvalues, target_fraction):
    """Empirical quantile of simulated null p-values.

    The classical-test baseline uses this as its significance cutoff:
    the threshold below which ``target_fraction`` of the simulated null
    p-values fall.
    """
    p = np.asarray(null_pvalues, dtype=np.float64)
    if p.size == 0:
        raise ValueError("need at least one null p-value")
    if not 0.0 < target_fraction < 1.0:
        raise ValueError("target_fraction must lie strictly between 0 and 1")
    return float(np.quantile(p, target_fraction))
