"""Dense-matrix primitives shared by every other module.

Representations are ``n x p`` float64 matrices: one row per example, one
column per feature. Column centering is tracked explicitly because the
sensitivity theory is only valid on centered data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateData, InvalidMatrix, NotCentered

CENTERED_ATOL = 1e-10
# Relative floor below which covariance eigenvalues are treated as zero.
# The participation ratio is a ratio of sums; tiny solver negatives would
# corrupt it.
EIGENVALUE_CLAMP_REL = 1e-12


@dataclass(frozen=True)
class RepresentationMatrix:
    """An ``n x p`` activation matrix with its centering state.

    Attributes:
        data: float64 matrix, n rows (examples) by p columns (features).
        centered: True when every column mean is zero (within 1e-10).
    """

    data: np.ndarray
    centered: bool = False

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise InvalidMatrix(f"expected a 2-d matrix, got ndim={arr.ndim}")
        n, p = arr.shape
        if n < 2 or p < 1:
            raise InvalidMatrix(f"need n >= 2 and p >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidMatrix("matrix contains non-finite entries")
        object.__setattr__(self, "data", arr)
        if self.centered:
            worst = float(np.max(np.abs(arr.mean(axis=0))))
            # Tolerance scales with entry magnitude: recentering data whose
            # values are ~1e9 cannot beat eps * scale in float64.
            scale = max(1.0, float(np.max(np.abs(arr))))
            if worst > CENTERED_ATOL * scale:
                raise NotCentered(
                    f"centered flag set but a column mean is {worst:.3e}"
                )

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def rms_row_norm(self) -> float:
        """Root mean squared row norm, the natural distance scale of the data."""
        return float(np.sqrt(np.mean(np.sum(self.data**2, axis=1))))


@dataclass(frozen=True)
class SpectrumSummary:
    """Covariance eigenvalues, nonincreasing, clamped at zero.

    ``total_variance`` equals the mean squared row norm of the centered
    matrix the spectrum came from.
    """

    eigenvalues: np.ndarray
    total_variance: float = field(init=False)

    def __post_init__(self):
        eig = np.asarray(self.eigenvalues, dtype=np.float64)
        if eig.ndim != 1 or eig.size == 0:
            raise InvalidMatrix("eigenvalues must be a non-empty vector")
        largest = float(eig.max(initial=0.0))
        if float(eig.min()) < -1e-8 * max(largest, 1.0):
            raise InvalidMatrix("spectrum has a negative eigenvalue beyond tolerance")
        eig = np.sort(eig)[::-1].copy()
        eig[eig < EIGENVALUE_CLAMP_REL * largest] = 0.0
        object.__setattr__(self, "eigenvalues", eig)
        object.__setattr__(self, "total_variance", float(eig.sum()))


@dataclass(frozen=True)
class SeededRng:
    """Reproducible randomness source: a 64-bit seed plus a stream id.

    Identical (seed, stream) pairs yield identical sample sequences no
    matter how many parallel tasks are running; each task should derive
    its own stream with :meth:`stream`.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= int(value) < 2**64:
                raise InvalidMatrix(f"{name} must be a 64-bit unsigned integer")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(seq)

    def stream(self, stream_id: int) -> "SeededRng":
        return SeededRng(self.seed, stream_id)


def center_columns(x: RepresentationMatrix) -> RepresentationMatrix:
    """Subtract each column's mean. Idempotent.

    Row-pair differences are preserved (up to one rounding step per entry,
    since the same mean is subtracted from every row).
    """
    centered = x.data - x.data.mean(axis=0)
    return RepresentationMatrix(centered, centered=True)


def gram(x: RepresentationMatrix) -> np.ndarray:
    """Linear-kernel Gram matrix, entry (i, j) = <x_i, x_j>."""
    return x.data @ x.data.T


def covariance_spectrum(x: RepresentationMatrix) -> SpectrumSummary:
    """Eigenvalues of the biased covariance (1/n) X^T X of a centered matrix.

    Computed on whichever of the p x p covariance or the n x n scaled Gram
    is smaller; both have the same nonzero eigenvalues.
    """
    if not x.centered:
        raise NotCentered("covariance_spectrum requires a centered matrix")
    a = x.data
    n, p = a.shape
    if p <= n:
        small = (a.T @ a) / n
    else:
        small = (a @ a.T) / n
    eig = np.linalg.eigvalsh(small)
    return SpectrumSummary(eig)


def sample_unit_direction(rng: SeededRng, p: int) -> np.ndarray:
    """Uniform random direction on the (p-1)-sphere (normalized Gaussian)."""
    if p < 1:
        raise DegenerateData("dimension must be at least 1")
    gen = rng.generator()
    while True:
        v = gen.standard_normal(p)
        norm = float(np.linalg.norm(v))
        if norm > 1e-12:
            return v / norm
