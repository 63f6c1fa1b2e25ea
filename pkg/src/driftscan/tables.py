"""Count containers shared by the statistics and variance estimators.

All cell fields accept scalars or equally-shaped numpy arrays, so a single
object can describe one locus or a whole scan's worth of loci at once.
Row 1 is the base population (earlier time point), row 2 the evolved one;
column 1 holds the focal allele.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class LocusFlag(enum.IntFlag):
    """Per-locus diagnostic flags, stored as a bitmask."""

    NONE = 0
    ZERO_ADJUSTED = 1
    DEGENERATE_MARGIN = 2
    MULTIALLELIC_COLLAPSED = 4
    FILTERED_MIN_AF = 8
    FREQ_CLAMPED = 16


def flag_names(mask: int) -> str:
    """Render a flag bitmask as a semicolon-joined string ('.' if empty)."""
    if not mask:
        return "."
    return ";".join(f.name for f in LocusFlag if f and mask & f)


def _as_float(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("counts must be non-negative")
    return arr


@dataclass(frozen=True)
class CountTable:
    """2x2 table of observed allele counts (one sampling step).

    In a pool-sequencing context the cells are read counts and the row
    totals are coverages; with individual sequencing they are sampled
    allele counts and sample sizes.
    """

    x11: np.ndarray
    x12: np.ndarray
    x21: np.ndarray
    x22: np.ndarray

    def __post_init__(self):
        for name in ("x11", "x12", "x21", "x22"):
            object.__setattr__(self, name, _as_float(getattr(self, name)))

    @property
    def x1p(self):
        return self.x11 + self.x12

    @property
    def x2p(self):
        return self.x21 + self.x22

    @property
    def xp1(self):
        return self.x11 + self.x21

    @property
    def xp2(self):
        return self.x12 + self.x22

    @property
    def n(self):
        return self.x1p + self.x2p

    def margins_positive(self):
        """Boolean mask of loci whose four margins are all positive."""
        return (self.x1p > 0) & (self.x2p > 0) & (self.xp1 > 0) & (self.xp2 > 0)

    @property
    def f1(self):
        """Allele-1 frequency in the base population."""
        return self.x11 / self.x1p

    @property
    def f2(self):
        """Allele-1 frequency in the evolved population."""
        return self.x21 / self.x2p


@dataclass(frozen=True)
class TwoStepTable(CountTable):
    """Read-count table plus the underlying sample sizes.

    The cells are sequencing reads (row totals are coverages r1, r2); in
    addition ``size1``/``size2`` give how many alleles were sampled from
    each population before pooling.  A side whose observation involved a
    single sampling step may leave its size as None.
    """

    size1: np.ndarray | None = None
    size2: np.ndarray | None = None

    def __post_init__(self):
        super().__post_init__()
        for name in ("size1", "size2"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value, dtype=np.float64)
                if np.any(value < 1):
                    raise ValueError(f"{name} must be >= 1")
                object.__setattr__(self, name, value)

    @property
    def r1(self):
        return self.x1p

    @property
    def r2(self):
        return self.x2p

    @property
    def m(self):
        return self.n


@dataclass(frozen=True)
class Trajectory:
    """Allele-1 counts and depths at successive sequenced generations.

    ``counts``/``depths`` have shape (T,) for a single locus or (T, n_loci)
    for a vectorized scan; ``times`` is the (T,) vector of generations.
    """

    times: np.ndarray
    counts: np.ndarray
    depths: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.int64)
        if times.ndim != 1 or len(times) < 2:
            raise ValueError("need at least two time points")
        if times[0] != 0 or np.any(np.diff(times) <= 0):
            raise ValueError("times must start at 0 and be strictly increasing")
        counts = _as_float(self.counts)
        depths = np.asarray(self.depths, dtype=np.float64)
        if counts.shape != depths.shape or counts.shape[0] != len(times):
            raise ValueError("counts/depths must be (T, ...) matching times")
        if np.any(depths < 1):
            raise ValueError("depths must be >= 1 at every time point")
        if np.any(counts > depths):
            raise ValueError("counts cannot exceed depths")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "depths", depths)

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def freqs(self):
        return self.counts / self.depths
