"""Multiple-testing adjustment and the small-p-value tail correction.

:func:`benjamini_hochberg` is the standard step-up FDR adjustment used on
scan output.  :class:`TailCorrection` repairs the anti-conservative far
tail that the two-time-point adapted tests show at boundary allele
frequencies: it is fitted on p-values simulated under the null and then
applied to observed p-values, mapping the sub-threshold region through a
pair of beta CDFs so that the corrected values are uniform again.
"""

from __future__ import annotations

import numpy as np
from scipy.special import betainc
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DegenerateMomentsError, InsufficientTailError

__all__ = [
    "benjamini_hochberg",
    "regularized_incomplete_beta",
    "fit_beta_moments",
    "TailCorrection",
]

MIN_TAIL_POINTS = 100


def benjamini_hochberg(pvalues):
    """Benjamini-Hochberg step-up adjustment, returned in input order.

    q_(i) = min(1, p_(i) * m / i), made monotone by the cumulative
    minimum from the largest rank down.
    """
    p = np.asarray(pvalues, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("pvalues must be a non-empty 1-d sequence")
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * (m / np.arange(1, m + 1))
    q = np.minimum.accumulate(scaled[::-1])[::-1]
    np.clip(q, 0.0, 1.0, out=q)
    out = np.empty_like(q)
    out[order] = q
    return out


def regularized_incomplete_beta(x, a, b):
    """Regularized incomplete beta I_x(a, b), the Beta(a, b) CDF."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("shape parameters must be positive")
    x = np.asarray(x, dtype=np.float64)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("x must lie in [0, 1]")
    return betainc(a, b, x)


def fit_beta_moments(samples):
    """Method-of-moments beta fit: returns (a, b).

    With sample mean m and variance v, the common factor is
    c = m*(1-m)/v - 1, a = m*c, b = (1-m)*c.  Requires at least 10
    samples and 0 < v < m*(1-m).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 10:
        raise DegenerateMomentsError("need at least 10 samples")
    mean = x.mean()
    var = x.var(ddof=1)
    if not 0.0 < mean < 1.0:
        raise DegenerateMomentsError("sample mean must lie strictly in (0, 1)")
    # the lower bound absorbs rounding noise from effectively constant samples
    if var <= 1e-18 or var >= mean * (1.0 - mean):
        raise DegenerateMomentsError(
            "sample variance incompatible with a beta distribution"
        )
    c = mean * (1.0 - mean) / var - 1.0
    return mean * c, (1.0 - mean) * c


class TailCorrection(TransformerMixin, BaseEstimator):
    """Beta-CDF correction of small null p-values.

    Parameters
    ----------
    z : float in (0, 1]
        P-values at or above ``z`` pass through unchanged.
    s : float in (0, z], optional
        Inner threshold for the second-stage fit; defaults to ``z / 10``.

    After ``fit`` on null p-values, ``transform`` maps a p-value p < z to
    u = z * F_A(p / z) and, when u < s, on through s * F_A2(u / s); the
    upper branch is the identity, which is the unique continuous choice
    with F(1) = 1.  Both beta parameter pairs are estimated by the
    method of moments on the rescaled points.
    """

    def __init__(self, z=0.05, s=None):
        self.z = z
        self.s = s

    def _inner(self):
        return self.z / 10.0 if self.s is None else self.s

    def fit(self, X, y=None):
        if not 0.0 < self.z <= 1.0:
            raise ValueError("z must lie in (0, 1]")
        s = self._inner()
        if not 0.0 < s <= self.z:
            raise ValueError("s must lie in (0, z]")
        p = np.asarray(X, dtype=np.float64).ravel()
        if np.any((p < 0) | (p > 1)):
            raise ValueError("p-values must lie in [0, 1]")
        tail = p[p < self.z]
        if tail.size < MIN_TAIL_POINTS:
            raise InsufficientTailError(
                f"only {tail.size} null p-values below z={self.z}; need at "
                f"least {MIN_TAIL_POINTS} (simulate more null loci or raise z)"
            )
        self.alpha_a_, self.beta_a_ = fit_beta_moments(tail / self.z)
        u = self.z * betainc(self.alpha_a_, self.beta_a_, tail / self.z)
        inner = u[u < s]
        if inner.size < 10:
            raise InsufficientTailError(
                f"only {inner.size} transformed p-values below s={s}; "
                "raise s or supply more null p-values"
            )
        self.alpha_a2_, self.beta_a2_ = fit_beta_moments(inner / s)
        self.s_ = s
        self.delta_ = s  # s * F_A2(1) with F_A2 a proper CDF
        self.n_tail_ = int(tail.size)
        return self

    def transform(self, X):
        check_is_fitted(self, "alpha_a_")
        p = np.asarray(X, dtype=np.float64)
        out = p.astype(np.float64, copy=True)
        small = p < self.z
        if np.any(small):
            u = self.z * betainc(self.alpha_a_, self.beta_a_, p[small] / self.z)
            deep = u < self.s_
            u[deep] = self.s_ * betainc(self.alpha_a2_, self.beta_a2_,
                                        u[deep] / self.s_)
            out[small] = u
        np.clip(out, 0.0, 1.0, out=out)
        return out

    def save(self, path):
        """Write the fitted model as a small key-value text file."""
        check_is_fitted(self, "alpha_a_")
        fields = {
            "z": self.z,
            "s": self.s_,
            "alphaA": self.alpha_a_,
            "betaA": self.beta_a_,
            "alphaA2": self.alpha_a2_,
            "betaA2": self.beta_a2_,
        }
        with open(path, "w", encoding="utf-8") as fh:
            for key, value in fields.items():
                fh.write(f"{key} {format(float(value), '.17g')}\n")

    @classmethod
    def load(cls, path):
        values = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, _, raw = line.partition(" ")
                values[key] = float(raw)
        missing = {"z", "s", "alphaA", "betaA", "alphaA2", "betaA2"} - set(values)
        if missing:
            raise ValueError(f"model file missing fields: {sorted(missing)}")
        model = cls(z=values["z"], s=values["s"])
        model.alpha_a_ = values["alphaA"]
        model.beta_a_ = values["betaA"]
        model.alpha_a2_ = values["alphaA2"]
        model.beta_a2_ = values["betaA2"]
        model.s_ = values["s"]
        model.delta_ = values["s"]
        model.n_tail_ = -1
        return model
