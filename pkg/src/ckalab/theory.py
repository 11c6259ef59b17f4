"""Closed-form limit of linear CKA under subset translation.

When all rows outside a subset S of a centered matrix X are translated
arbitrarily far along any fixed unit direction, the linear CKA between X
and the translated copy converges to

    gamma(rho) * ||mean(S)||^2 / mean(||x||^2) * sqrt(PR(X))

with rho = |S| / n, gamma(rho) = rho / (1 - rho), and PR the participation
ratio of the covariance eigenvalues. The limit does not depend on the
direction or on the distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RepresentationMatrix, SpectrumSummary, covariance_spectrum
from .errors import DegenerateData, InvalidRho, InvalidSubset, NotCentered


@dataclass(frozen=True)
class LimitPrediction:
    """All factors of the limit formula, plus their product."""

    rho: float
    gamma: float
    mean_s_sq_norm: float
    mean_sq_norm: float
    pr: float
    predicted_cka_limit: float


def gamma(rho: float) -> float:
    """Subset-fraction factor rho / (1 - rho); at most 1 iff rho <= 1/2."""
    if not 0.0 < rho < 1.0:
        raise InvalidRho(f"rho must lie in (0, 1), got {rho}")
    return rho / (1.0 - rho)


def participation_ratio(spectrum: SpectrumSummary) -> float:
    """Effective dimensionality (sum lambda)^2 / sum lambda^2, in [1, p]."""
    eig = spectrum.eigenvalues
    sq = float(np.sum(eig * eig))
    if sq == 0.0:
        raise DegenerateData("all-zero spectrum has no participation ratio")
    return float(eig.sum()) ** 2 / sq


def predict_limit(x: RepresentationMatrix, subset_mask: np.ndarray) -> LimitPrediction:
    """Evaluate the translation limit for S = rows where the mask is true.

    Requires the centered flag; the hypothesis that X is centered is
    load-bearing (the identity |S| mean(S) = -|S'| mean(S') fails without
    it), so an unset flag is an error rather than silently fixed. The data
    is still recentered defensively to scrub accumulated drift.
    """
    if not x.centered:
        raise NotCentered("predict_limit requires a centered matrix")
    mask = np.asarray(subset_mask, dtype=bool)
    if mask.shape != (x.n,):
        raise InvalidSubset(f"mask length {mask.shape} does not match n={x.n}")
    size = int(mask.sum())
    if size == 0 or size == x.n:
        raise InvalidSubset("subset must be a proper nonempty subset of the rows")
    data = x.data - x.data.mean(axis=0)
    rho = size / x.n
    g = gamma(rho)
    mean_s_sq_norm = float(np.sum(data[mask].mean(axis=0) ** 2))
    mean_sq_norm = float(np.mean(np.sum(data * data, axis=1)))
    if mean_sq_norm <= 0.0:
        raise DegenerateData("zero matrix has no meaningful limit")
    pr = participation_ratio(covariance_spectrum(x))
    bound = min(x.n, x.p)
    if not (1.0 - 1e-9) <= pr <= bound + 1e-9:
        raise DegenerateData(f"participation ratio {pr} outside [1, {bound}]")
    predicted = g * mean_s_sq_norm / mean_sq_norm * float(np.sqrt(pr))
    return LimitPrediction(rho, g, mean_s_sq_norm, mean_sq_norm, pr, predicted)


def predict_limit_outlier(x: RepresentationMatrix, index: int) -> LimitPrediction:
    """Single-point special case: S = {row ``index``}, rho = 1/n."""
    if x.n < 3:
        raise InvalidSubset("outlier prediction needs n >= 3")
    if not 0 <= index < x.n:
        raise InvalidSubset(f"row index {index} out of range for n={x.n}")
    mask = np.zeros(x.n, dtype=bool)
    mask[index] = True
    return predict_limit(x, mask)
