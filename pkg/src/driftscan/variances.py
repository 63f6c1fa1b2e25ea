"""Variance estimators for allele counts under drift and pool sequencing.

The adapted statistics in :mod:`driftscan.stats` take a pair of variance
estimates (s1_sq, s2_sq) for the allele-1 cells of the 2x2 table.  This
module provides those estimates for the four sampling scenarios:

========================  =====================================================
one_step                  a single binomial sampling step (the classical test)
one_step_drift            binomial sampling + Wright-Fisher drift
two_step                  sampling from the population, then pool sequencing
two_step_drift            both sampling steps + drift
========================  =====================================================

Models may differ between the base and the evolved population; drift only
ever enters through the evolved side.  When sequence data from intermediate
generations is available, the drift mean/variance plug-ins use the whole
trajectory instead of the two end points.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMarginError, ScenarioMismatchError
from .stats import classical_variances
from .tables import CountTable, Trajectory, TwoStepTable

__all__ = [
    "SamplingModel",
    "Scenario",
    "drift_variance",
    "drift_factor",
    "mean_frequency",
    "drift_variance_estimate",
    "mean_frequency_timeseries",
    "drift_variance_timeseries",
    "clamp_frequency",
    "estimate_variances",
]


class SamplingModel(str, enum.Enum):
    ONE_STEP = "one_step"
    ONE_STEP_DRIFT = "one_step_drift"
    TWO_STEP = "two_step"
    TWO_STEP_DRIFT = "two_step_drift"

    @property
    def has_drift(self) -> bool:
        return self in (SamplingModel.ONE_STEP_DRIFT, SamplingModel.TWO_STEP_DRIFT)

    @property
    def two_step(self) -> bool:
        return self in (SamplingModel.TWO_STEP, SamplingModel.TWO_STEP_DRIFT)


@dataclass(frozen=True)
class Scenario:
    """Sampling model per population plus the drift parameters.

    ``base_model`` describes how the earlier time point was observed and
    ``evolved_model`` the later one.  ``ne`` is the (diploid) effective
    population size and ``t`` the number of generations between the two
    time points; both are required as soon as either model involves
    drift.  ``generation_times`` lists the sequenced generations
    (0, ..., t) when intermediate data exists.
    """

    base_model: SamplingModel
    evolved_model: SamplingModel
    ne: int | None = None
    t: int | None = None
    generation_times: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "base_model", SamplingModel(self.base_model))
        object.__setattr__(self, "evolved_model", SamplingModel(self.evolved_model))
        if self.base_model.has_drift and not self.evolved_model.has_drift:
            raise ScenarioMismatchError(
                "drift affects the evolved population only; a base-side drift "
                "model requires a drift model on the evolved side as well"
            )
        if self.has_drift:
            if self.ne is None or self.ne < 1:
                raise ScenarioMismatchError("drift models require ne >= 1")
            if self.t is None or self.t < 0:
                raise ScenarioMismatchError("drift models require t >= 0")
        if self.generation_times is not None:
            times = tuple(int(g) for g in self.generation_times)
            if len(times) < 2 or times[0] != 0 or any(
                b <= a for a, b in zip(times, times[1:])
            ):
                raise ScenarioMismatchError(
                    "generation_times must start at 0 and increase strictly"
                )
            if self.t is not None and times[-1] != self.t:
                raise ScenarioMismatchError("generation_times must end at t")
            object.__setattr__(self, "generation_times", times)

    @property
    def has_drift(self) -> bool:
        return self.base_model.has_drift or self.evolved_model.has_drift

    @property
    def classical(self) -> bool:
        """True for the plain chi-square/CMH situation (one step, no drift)."""
        return (self.base_model == SamplingModel.ONE_STEP
                and self.evolved_model == SamplingModel.ONE_STEP)


def drift_factor(ne, t):
    """1 - (1 - 1/(2*ne))^t, the variance fraction accumulated by drift."""
    return 1.0 - (1.0 - 1.0 / (2.0 * np.asarray(ne, dtype=np.float64))) ** t


def drift_variance(p1, ne, t):
    """Conditional variance of the allele frequency after t generations.

    p1*(1-p1)*(1 - (1 - 1/(2*ne))^t) for a Wright-Fisher population of
    2*ne gametes.
    """
    p1 = np.asarray(p1, dtype=np.float64)
    return p1 * (1.0 - p1) * drift_factor(ne, t)


def mean_frequency(table: CountTable):
    """Average of the two per-population allele-1 frequencies.

    Estimates E[p2 | p1]; compared with the base frequency alone this
    keeps null p-values closer to uniform.
    """
    return 0.5 * (table.f1 + table.f2)


def drift_variance_estimate(table: CountTable, ne, t):
    """Plug-in drift variance using the base-population frequency."""
    return table.f1 * (1.0 - table.f1) * drift_factor(ne, t)


def mean_frequency_timeseries(traj: Trajectory):
    """Mean of the per-generation frequencies (estimates E[p2 | p1])."""
    return traj.freqs.mean(axis=0)


def drift_variance_timeseries(traj: Trajectory, ne):
    """Drift variance accumulated interval by interval along a trajectory.

    sum_i f_i*(1-f_i)*(1 - (1 - 1/(2*ne))^(t_{i+1}-t_i)); with two time
    points this reduces exactly to :func:`drift_variance_estimate`.
    """
    f = traj.freqs
    steps = np.diff(traj.times)
    factors = drift_factor(ne, steps)
    shape = (len(steps),) + (1,) * (f.ndim - 1)
    return np.sum(f[:-1] * (1.0 - f[:-1]) * factors.reshape(shape), axis=0)


def clamp_frequency(p, depth):
    """Clamp a frequency to [1/(2*depth), 1 - 1/(2*depth)].

    Keeps the product p*(1-p) away from exact zero at boundary
    frequencies.  Returns (clamped, was_clamped).
    """
    p = np.asarray(p, dtype=np.float64)
    bound = 1.0 / (2.0 * np.asarray(depth, dtype=np.float64))
    clamped = np.clip(p, bound, 1.0 - bound)
    return clamped, clamped != p


def _require_two_step(obs, side: str, size):
    if not isinstance(obs, TwoStepTable) or size is None:
        raise ScenarioMismatchError(
            f"{side} model is two-step but no underlying sample size is attached"
        )


def estimate_variances(obs: CountTable, scenario: Scenario,
                       traj: Trajectory | None = None, *,
                       stratified: bool = False):
    """Variance estimates (s1_sq, s2_sq) for the allele-1 cells of ``obs``.

    ``obs`` is the observed table (reads for two-step sides).  ``traj``
    supplies intermediate-generation data and is required when the
    scenario declares more than two sequenced generations.  With
    ``stratified=True`` the classical (one_step/one_step) pair uses the
    n-1 convention of the CMH denominator; all other rows are identical
    between the chi-square and CMH paths.
    """
    if np.any(obs.x1p <= 0) or np.any(obs.x2p <= 0):
        raise DegenerateMarginError("row totals must be positive")
    if scenario.classical:
        return classical_variances(obs, stratified=stratified)

    gens = scenario.generation_times
    if gens is not None and len(gens) > 2 and traj is None:
        raise ScenarioMismatchError(
            "scenario declares intermediate generations but no trajectory given"
        )
    if traj is not None and gens is not None and tuple(traj.times) != gens:
        raise ScenarioMismatchError("trajectory times do not match the scenario")

    base = scenario.base_model
    evolved = scenario.evolved_model

    # s1: base-population cell variance (never includes a drift term)
    if base.two_step:
        _require_two_step(obs, "base", getattr(obs, "size1", None))
        s1 = (obs.x11 * obs.x12 / obs.x1p) * (1.0 + (obs.x1p - 1.0) / obs.size1)
    else:
        s1 = obs.x11 * obs.x12 / obs.x1p

    # shared plug-ins for the evolved side
    needs_p2 = evolved in (SamplingModel.ONE_STEP, SamplingModel.ONE_STEP_DRIFT,
                           SamplingModel.TWO_STEP_DRIFT)
    if needs_p2:
        if traj is not None:
            p2 = mean_frequency_timeseries(traj)
        else:
            p2 = mean_frequency(obs)
        p2, _ = clamp_frequency(p2, obs.x2p)
        p2q2 = p2 * (1.0 - p2)
    if evolved.has_drift:
        if traj is not None:
            sigma_sq = drift_variance_timeseries(traj, scenario.ne)
        else:
            sigma_sq = drift_variance_estimate(obs, scenario.ne, scenario.t)

    if evolved == SamplingModel.ONE_STEP:
        s2 = obs.x2p * p2q2
    elif evolved == SamplingModel.ONE_STEP_DRIFT:
        s2 = obs.x2p * (p2q2 + (obs.x2p - 1.0) * sigma_sq)
    elif evolved == SamplingModel.TWO_STEP:
        _require_two_step(obs, "evolved", getattr(obs, "size2", None))
        s2 = (obs.x21 * obs.x22 / obs.x2p) * (1.0 + (obs.x2p - 1.0) / obs.size2)
    else:  # TWO_STEP_DRIFT
        _require_two_step(obs, "evolved", getattr(obs, "size2", None))
        r2 = obs.x2p
        size2 = obs.size2
        s2 = r2 * (p2q2 * (1.0 + (r2 - 1.0) / size2)
                   + (r2 - 1.0) * ((size2 - 1.0) / size2) * sigma_sq)
    return s1, s2
