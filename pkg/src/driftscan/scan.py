"""Vectorized per-locus scan: counts in, statistics and p-values out.

:func:`scan_counts` is the workhorse used by the CLI and the benchmark
harness; :class:`FrequencyScan` wraps it in an estimator with the usual
fit / attributes / get_support surface so scans compose with sklearn-style
tooling.

Scan policy (applied in this order):

1. zero-adjust: a count of 0 at one time point while the same allele is
   seen at another time point of the same replicate becomes 1 (the depth
   grows by one read), so every testable locus has a well-defined table;
2. loci whose pair table keeps a zero margin in any replicate after the
   adjustment are not testable as a stratified statistic and are reported
   with statistic 0, p-value 1 and the DEGENERATE_MARGIN flag (scans must
   be total over millions of loci, so nothing aborts);
3. an optional minimum-allele-frequency filter on the pooled base
   population marks loci FILTERED_MIN_AF (reported, not tested).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .correction import TailCorrection, benjamini_hochberg
from .errors import ScenarioMismatchError
from .stats import chi2_sf
from .tables import CountTable, LocusFlag, Trajectory, TwoStepTable
from .variances import (
    SamplingModel,
    Scenario,
    clamp_frequency,
    estimate_variances,
    mean_frequency,
    mean_frequency_timeseries,
)

__all__ = ["ScanResult", "scan_counts", "zero_adjust_counts", "FrequencyScan"]


@dataclass
class ScanResult:
    """Per-locus outcome of a scan.

    ``s1_sq``/``s2_sq`` hold the variance estimates actually used, one
    row per replicate; ``flags`` is a LocusFlag bitmask per locus.
    """

    statistic: np.ndarray
    p_value: np.ndarray
    s1_sq: np.ndarray
    s2_sq: np.ndarray
    flags: np.ndarray
    p_adjusted: np.ndarray | None = None

    @property
    def n_loci(self) -> int:
        return self.statistic.shape[0]

    def testable(self) -> np.ndarray:
        """Loci that produced a real test (no degeneracy, not filtered)."""
        return (self.flags & (LocusFlag.DEGENERATE_MARGIN
                              | LocusFlag.FILTERED_MIN_AF)) == 0


def zero_adjust_counts(counts, depths):
    """Apply the zero-count policy to (K, T, n) count/depth arrays.

    Per replicate: an allele with count 0 at one time point but a
    positive count at another gets count 1 there, and the depth grows by
    the added read.  Idempotent.  Returns (counts, depths, adjusted_mask)
    with adjusted_mask per locus.
    """
    counts = np.asarray(counts, dtype=np.int64).copy()
    depths = np.asarray(depths, dtype=np.int64).copy()
    if counts.shape != depths.shape or counts.ndim != 3:
        raise ValueError("counts and depths must both have shape (K, T, n)")
    other = depths - counts
    if np.any(other < 0):
        raise ValueError("counts cannot exceed depths")
    observed = depths > 0  # never invent reads for unsequenced time points
    seen1 = (counts > 0).any(axis=1, keepdims=True)
    seen2 = (other > 0).any(axis=1, keepdims=True)
    bump1 = (counts == 0) & seen1 & observed
    bump2 = (other == 0) & seen2 & observed
    counts[bump1] += 1
    depths[bump1] += 1
    depths[bump2] += 1
    adjusted = (bump1 | bump2).any(axis=(0, 1))
    return counts, depths, adjusted


def _pair_table(counts_k, depths_k, sample_sizes):
    """Observed 2x2 table of one replicate from the first/last time points."""
    a1, d1 = counts_k[0].astype(float), depths_k[0].astype(float)
    a2, d2 = counts_k[-1].astype(float), depths_k[-1].astype(float)
    cells = dict(x11=a1, x12=d1 - a1, x21=a2, x22=d2 - a2)
    if sample_sizes is None:
        return CountTable(**cells)
    size1, size2 = sample_sizes
    return TwoStepTable(**cells, size1=size1, size2=size2)


def scan_counts(counts, depths, times, scenario: Scenario, *,
                sample_sizes=None, statistic="auto",
                min_af=0.0, zero_adjust=True) -> ScanResult:
    """Run the adapted (or classical) test over an array of loci.

    Parameters
    ----------
    counts, depths : (K, T, n) integer arrays
        Observed allele-1 counts and total depths per replicate and
        sequenced time point (reads for pool-seq, alleles otherwise).
    times : (T,) increasing generations starting at 0.
    scenario : Scenario
        Sampling models and drift parameters; the statistic is computed
        from the first/last time points, intermediate ones feed the
        trajectory estimators.
    sample_sizes : (size1, size2), optional
        Underlying sample sizes for two-step sides (scalars or arrays).
    statistic : "auto" | "chi2" | "cmh"
        "auto" picks chi2 for a single replicate, cmh otherwise; the
        choice only affects the classical (one_step/one_step) scenario,
        where the cmh path uses the n-1 denominator convention.
    min_af : float in [0, 0.5)
        Drop loci whose pooled base-population frequency of either
        allele is <= min_af (flagged, reported with p = 1).
    """
    counts = np.asarray(counts, dtype=np.int64)
    depths = np.asarray(depths, dtype=np.int64)
    times = np.asarray(times, dtype=np.int64)
    if counts.ndim != 3:
        raise ValueError("counts must have shape (K, T, n)")
    K, T, n = counts.shape
    if len(times) != T:
        raise ValueError("times length must match the time axis")
    if statistic == "auto":
        statistic = "chi2" if K == 1 else "cmh"
    if statistic not in ("chi2", "cmh"):
        raise ValueError("statistic must be 'auto', 'chi2' or 'cmh'")
    if statistic == "chi2" and K != 1:
        raise ValueError("the chi-square path takes exactly one replicate")
    if not 0.0 <= min_af < 0.5:
        raise ValueError("min_af must lie in [0, 0.5)")
    if scenario.generation_times is not None and tuple(times) != scenario.generation_times:
        raise ScenarioMismatchError("times do not match scenario.generation_times")
    two_step = scenario.base_model.two_step or scenario.evolved_model.two_step
    if two_step and sample_sizes is None:
        raise ScenarioMismatchError("two-step models need sample_sizes")

    flags = np.zeros(n, dtype=np.uint8)
    if zero_adjust:
        counts, depths, adjusted = zero_adjust_counts(counts, depths)
        flags[adjusted] |= np.uint8(LocusFlag.ZERO_ADJUSTED)

    stratified = statistic == "cmh"
    use_traj = T > 2
    num = np.zeros(n)
    den = np.zeros(n)
    s1_all = np.zeros((K, n))
    s2_all = np.zeros((K, n))
    valid_all = np.ones(n, dtype=bool)
    clamped_any = np.zeros(n, dtype=bool)
    sizes = None
    if sample_sizes is not None:
        sizes = tuple(np.asarray(s, dtype=np.float64) for s in sample_sizes)

    for k in range(K):
        table = _pair_table(counts[k], depths[k], sizes)
        valid = table.margins_positive() & (table.n >= 2)
        if use_traj:
            # intermediate time points must be observed to use the
            # trajectory estimators
            valid &= (depths[k] > 0).all(axis=0)
        valid_all &= valid
        idx = np.flatnonzero(valid)
        if idx.size == 0:
            continue
        sub_sizes = None
        if sizes is not None:
            sub_sizes = tuple(s[..., idx] if s.ndim else s for s in sizes)
        sub = _pair_table(counts[k][:, idx], depths[k][:, idx], sub_sizes)
        traj = None
        if use_traj:
            traj = Trajectory(times, counts[k][:, idx], depths[k][:, idx])
        s1, s2 = estimate_variances(sub, scenario, traj, stratified=stratified)
        s1_all[k, idx] = s1
        s2_all[k, idx] = s2
        det = sub.x11 * sub.x22 - sub.x12 * sub.x21
        num[idx] += det / sub.n
        den[idx] += (sub.x2p**2 * s1 + sub.x1p**2 * s2) / sub.n**2
        if not scenario.classical and scenario.evolved_model != SamplingModel.TWO_STEP:
            p2 = (mean_frequency_timeseries(traj) if traj is not None
                  else mean_frequency(sub))
            _, was = clamp_frequency(p2, sub.x2p)
            clamped_any[idx] |= was

    flags[~valid_all] |= np.uint8(LocusFlag.DEGENERATE_MARGIN)
    flags[clamped_any & valid_all] |= np.uint8(LocusFlag.FREQ_CLAMPED)

    stat = np.zeros(n)
    ok = valid_all & (den > 0)
    stat[ok] = num[ok] ** 2 / den[ok]
    p_value = np.ones(n)
    p_value[ok] = chi2_sf(stat[ok])

    if min_af > 0.0:
        base_counts = counts[:, 0].sum(axis=0)
        base_depths = depths[:, 0].sum(axis=0)
        with np.errstate(invalid="ignore"):
            f = base_counts / base_depths
        keep = (f > min_af) & (1.0 - f > min_af)
        dropped = ~keep
        flags[dropped] |= np.uint8(LocusFlag.FILTERED_MIN_AF)
        stat[dropped] = 0.0
        p_value[dropped] = 1.0

    return ScanResult(stat, p_value, s1_all, s2_all, flags)


class FrequencyScan(BaseEstimator):
    """Genome-scan estimator for allele-frequency change between time points.

    Parameters mirror :func:`scan_counts` plus the p-value adjustment:
    ``correction`` is one of ``"none"``, ``"bh"`` (Benjamini-Hochberg) or
    ``"bh-tail"`` (tail correction first, then BH; requires a fitted
    ``tail_model``).

    ``fit(X)`` accepts either a :class:`~driftscan.simulate.SimData` or a
    tuple ``(counts, depths, times)`` of (K, T, n) arrays.  Fitted
    attributes: ``statistic_``, ``pvalues_``, ``pvalues_adjusted_``,
    ``s1_sq_``, ``s2_sq_``, ``flags_``.
    """

    def __init__(self, base_model="two_step_drift", evolved_model=None,
                 ne=None, sample_size=None, statistic="auto", min_af=0.0,
                 correction="bh", tail_model=None, alpha=0.05):
        self.base_model = base_model
        self.evolved_model = evolved_model
        self.ne = ne
        self.sample_size = sample_size
        self.statistic = statistic
        self.min_af = min_af
        self.correction = correction
        self.tail_model = tail_model
        self.alpha = alpha

    def _unpack(self, X):
        from .simulate import SimData

        if isinstance(X, SimData):
            sizes = None
            base = SamplingModel(self.base_model)
            evolved = SamplingModel(self.evolved_model or self.base_model)
            if base.two_step or evolved.two_step:
                size = self.sample_size or X.config.sample_size
                sizes = (size, size)
            return X.read_count, X.coverage, X.times, sizes
        counts, depths, times = X
        sizes = None
        if self.sample_size is not None:
            sizes = (self.sample_size, self.sample_size)
        return counts, depths, times, sizes

    def fit(self, X, y=None):
        counts, depths, times, sizes = self._unpack(X)
        times = np.asarray(times, dtype=np.int64)
        scenario = Scenario(
            base_model=self.base_model,
            evolved_model=self.evolved_model or self.base_model,
            ne=self.ne,
            t=int(times[-1] - times[0]),
            generation_times=tuple(times) if len(times) > 2 else None,
        )
        result = scan_counts(counts, depths, times, scenario,
                             sample_sizes=sizes, statistic=self.statistic,
                             min_af=self.min_af)
        raw = result.p_value
        if self.correction == "none":
            adjusted = raw.copy()
        elif self.correction == "bh":
            adjusted = benjamini_hochberg(raw)
        elif self.correction == "bh-tail":
            if not isinstance(self.tail_model, TailCorrection):
                raise ValueError("correction='bh-tail' needs a fitted tail_model")
            adjusted = benjamini_hochberg(self.tail_model.transform(raw))
        else:
            raise ValueError("correction must be 'none', 'bh' or 'bh-tail'")
        result.p_adjusted = adjusted
        self.result_ = result
        self.statistic_ = result.statistic
        self.pvalues_ = raw
        self.pvalues_adjusted_ = adjusted
        self.s1_sq_ = result.s1_sq
        self.s2_sq_ = result.s2_sq
        self.flags_ = result.flags
        self.n_loci_ = result.n_loci
        return self

    def get_support(self, alpha=None):
        """Boolean mask of loci significant at ``alpha`` (adjusted p)."""
        check_is_fitted(self, "pvalues_adjusted_")
        return self.pvalues_adjusted_ < (self.alpha if alpha is None else alpha)
