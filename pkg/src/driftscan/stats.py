"""Classical and variance-adapted chi-square / CMH statistics.

Every function is a pure, vectorized map over one locus or an array of
loci.  Statistics are referred to the chi-square distribution with one
degree of freedom via :func:`chi2_sf`.

The adapted statistics take externally supplied variance estimates for
the two allele-1 cells, which is what lets them absorb over-dispersion
from drift and pool sequencing (see :mod:`driftscan.variances`).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import erfc

from .errors import DegenerateMarginError, ZeroDenominatorError
from .tables import CountTable

__all__ = [
    "chi_square",
    "chi_square_adapted",
    "cmh",
    "cmh_adapted",
    "chi2_sf",
    "classical_variances",
]


def _det(table: CountTable):
    # cross-product form; avoids cancellation of the centered form
    # (x11 - x1p*xp1/n) for large counts
    return table.x11 * table.x22 - table.x12 * table.x21


def chi_square(table: CountTable):
    """Pearson chi-square statistic of a 2x2 table of counts.

    Equals n*(x11*x22 - x12*x21)^2 / (x1p*x2p*xp1*xp2).  Requires all
    four margins to be positive.
    """
    valid = table.margins_positive()
    if not np.all(valid):
        raise DegenerateMarginError()
    det = _det(table)
    return table.n * det * det / (table.x1p * table.x2p * table.xp1 * table.xp2)


def chi_square_adapted(table: CountTable, s1_sq, s2_sq):
    """Chi-square statistic with general variances for x11 and x21.

    (x11 - x1p*xp1/n)^2 / ((x2p/n)^2 * s1_sq + (x1p/n)^2 * s2_sq),
    computed in the equivalent cross-product form.  Inserting the
    classical estimators (see :func:`classical_variances`) recovers
    :func:`chi_square` exactly.
    """
    s1_sq = np.asarray(s1_sq, dtype=np.float64)
    s2_sq = np.asarray(s2_sq, dtype=np.float64)
    den = table.x2p**2 * s1_sq + table.x1p**2 * s2_sq
    if np.any(den <= 0) or np.any(table.n <= 0):
        raise ZeroDenominatorError("weighted variance sum must be positive")
    det = _det(table)
    return det * det / den


def classical_variances(table: CountTable, stratified: bool = False):
    """Single-sampling-step variance estimators for (x11, x21).

    With ``stratified=False`` these are the plug-ins whose insertion into
    the adapted chi-square reproduces the classical statistic; with
    ``stratified=True`` the second factor uses n - 1, matching the
    Mantel-Haenszel denominator of the classical CMH.
    """
    n2 = table.n * (table.n - 1.0) if stratified else table.n * table.n
    core = table.xp1 * table.xp2 / n2
    return table.x1p * core, table.x2p * core


def cmh(tables: Sequence[CountTable]):
    """Classical Cochran-Mantel-Haenszel statistic over K independent 2x2 tables.

    Uses the Mantel-Haenszel convention with the 1/(n_k - 1) factor in
    each denominator term.  Requires positive margins and n_k >= 2 in
    every table.
    """
    num = 0.0
    den = 0.0
    for k, t in enumerate(tables):
        if not np.all(t.margins_positive()):
            raise DegenerateMarginError(replicate=k + 1)
        if np.any(t.n < 2):
            raise DegenerateMarginError("need n >= 2", replicate=k + 1)
        num = num + _det(t) / t.n
        den = den + t.x1p * t.xp1 * t.x2p * t.xp2 / (t.n * t.n * (t.n - 1.0))
    return num * num / den


def cmh_adapted(tables: Sequence[CountTable], variances):
    """CMH statistic with general per-replicate variances.

    ``variances`` is a sequence of (s1k_sq, s2k_sq) pairs aligned with
    ``tables``.  Inserting the stratified classical estimators recovers
    :func:`cmh` exactly.
    """
    if len(variances) != len(tables):
        raise ValueError("need one (s1_sq, s2_sq) pair per table")
    num = 0.0
    den = 0.0
    for t, (s1_sq, s2_sq) in zip(tables, variances):
        inv_n2 = 1.0 / (t.n * t.n)
        num = num + _det(t) / t.n
        den = den + (t.x2p**2 * np.asarray(s1_sq, dtype=np.float64)
                     + t.x1p**2 * np.asarray(s2_sq, dtype=np.float64)) * inv_n2
    if np.any(den <= 0):
        raise ZeroDenominatorError("weighted variance sum must be positive")
    # num is already scaled by 1/n_k per term; den carries the matching 1/n_k^2
    return num * num / den


def chi2_sf(stat):
    """Survival function of the chi-square distribution with 1 d.f.

    chi2_sf(q) = erfc(sqrt(q/2)); strictly decreasing, chi2_sf(0) = 1.
    """
    stat = np.asarray(stat, dtype=np.float64)
    if np.any(stat < 0):
        raise ValueError("statistic must be non-negative")
    return erfc(np.sqrt(stat / 2.0))
