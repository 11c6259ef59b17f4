"""Kernel construction and the CKA / HSIC estimator family.

Implements the biased HSIC ``tr(K H L H) / (n - 1)^2``, full-batch CKA for
linear and RBF kernels, the unbiased HSIC estimator (zeroed-diagonal form),
and the minibatch CKA that averages unbiased HSIC terms over batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RepresentationMatrix, SeededRng, center_columns
from .errors import (
    DegenerateData,
    InvalidBandwidth,
    InvalidMatrix,
    ShapeMismatch,
    TooFewSamples,
)

BIASED_FULL = "biased_full"
UNBIASED_MINIBATCH = "unbiased_minibatch"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice: ``linear`` or ``rbf`` with a median-distance rule.

    For RBF the bandwidth is ``median_fraction`` times the median pairwise
    Euclidean distance of the matrix being kernelized (0.2 and 0.8 are the
    fractions used by the bundled experiments).
    """

    kind: str
    median_fraction: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise InvalidMatrix(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf":
            if self.median_fraction is None or self.median_fraction <= 0:
                raise InvalidBandwidth("rbf kernel needs median_fraction > 0")

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse CLI-style kernel flags: ``linear`` or ``rbf:<fraction>``."""
        if text == "linear":
            return cls("linear")
        if text.startswith("rbf:"):
            try:
                fraction = float(text.split(":", 1)[1])
            except ValueError as exc:
                raise InvalidBandwidth(f"bad rbf fraction in {text!r}") from exc
            return cls("rbf", fraction)
        raise InvalidMatrix(f"unknown kernel flag {text!r}")

    def label(self) -> str:
        if self.kind == "linear":
            return "linear"
        return f"rbf_f{self.median_fraction:g}"


@dataclass(frozen=True)
class KernelMatrix:
    """A realized n x n kernel matrix together with the spec that built it."""

    values: np.ndarray
    source_kernel: KernelSpec

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidMatrix(f"kernel matrix must be square, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidMatrix("kernel matrix contains non-finite entries")
        if float(np.max(np.abs(arr - arr.T))) > 1e-10 * max(1.0, float(np.max(np.abs(arr)))):
            raise InvalidMatrix("kernel matrix is not symmetric")
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CkaResult:
    value: float
    estimator: str
    kernel: KernelSpec


def pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    """Full n x n matrix of squared Euclidean distances, clamped at zero."""
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def rbf_bandwidth(x: RepresentationMatrix, fraction: float) -> float:
    """Bandwidth = fraction times the median pairwise Euclidean distance.

    The median of an even number of distances is the average of the two
    middle values. All rows identical is degenerate (zero median).
    """
    if fraction <= 0:
        raise InvalidBandwidth("fraction must be positive")
    d2 = pairwise_sq_dists(x.data)
    dists = np.sqrt(d2[np.triu_indices(x.n, k=1)])
    median = float(np.median(dists))
    if median <= 0.0:
        raise DegenerateData("all rows identical; median pairwise distance is 0")
    return fraction * median


def kernel_matrix(
    x: RepresentationMatrix, spec: KernelSpec, sigma: float | None = None
) -> KernelMatrix:
    """Realize the kernel: linear Gram or RBF ``exp(-d^2 / (2 sigma^2))``.

    ``sigma`` overrides the median rule; experiments use this to anchor the
    bandwidth to a reference matrix while sweeping a transformed copy.
    """
    if spec.kind == "linear":
        return KernelMatrix(x.data @ x.data.T, spec)
    if sigma is None:
        sigma = rbf_bandwidth(x, spec.median_fraction)
    if sigma <= 0:
        raise InvalidBandwidth(f"sigma must be positive, got {sigma}")
    d2 = pairwise_sq_dists(x.data)
    k = np.exp(d2 / (-2.0 * sigma * sigma))
    np.fill_diagonal(k, 1.0)
    return KernelMatrix(k, spec)


def _kernel_values(k) -> np.ndarray:
    return k.values if isinstance(k, KernelMatrix) else np.asarray(k, dtype=np.float64)


def _double_center(k: np.ndarray) -> np.ndarray:
    col = k.mean(axis=0)
    row = k.mean(axis=1)
    return k - col[None, :] - row[:, None] + col.mean()


def hsic_biased(k, l) -> float:
    """Biased HSIC: ``tr(K H L H) / (n - 1)^2`` with H the centering matrix.

    One operand is double-centered in O(n^2) (row means, column means,
    grand mean) instead of materializing H K H.
    """
    kv, lv = _kernel_values(k), _kernel_values(l)
    if kv.shape != lv.shape:
        raise ShapeMismatch(f"kernel shapes differ: {kv.shape} vs {lv.shape}")
    n = kv.shape[0]
    if n < 2:
        raise TooFewSamples("biased HSIC needs n >= 2")
    return float(np.sum(kv * _double_center(lv))) / (n - 1) ** 2


def hsic_unbiased(k, l) -> float:
    """Unbiased HSIC estimator on zeroed-diagonal kernels.

    With K~, L~ the kernels with zeroed diagonals:

        [ tr(K~ L~) + (1'K~1)(1'L~1) / ((n-1)(n-2)) - (2/(n-2)) 1'K~L~1 ]
        / (n (n-3))
    """
    kv, lv = _kernel_values(k), _kernel_values(l)
    if kv.shape != lv.shape:
        raise ShapeMismatch(f"kernel shapes differ: {kv.shape} vs {lv.shape}")
    n = kv.shape[0]
    if n < 4:
        raise TooFewSamples("unbiased HSIC needs n >= 4")
    kt = kv.copy()
    lt = lv.copy()
    np.fill_diagonal(kt, 0.0)
    np.fill_diagonal(lt, 0.0)
    trace_term = float(np.sum(kt * lt))
    sum_term = kt.sum() * lt.sum() / ((n - 1) * (n - 2))
    cross_term = 2.0 / (n - 2) * float(kt.sum(axis=1) @ lt.sum(axis=1))
    return (trace_term + sum_term - cross_term) / (n * (n - 3))


def _linear_hsic_terms(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    # For centered x, y the Gram matrices are already double-centered, so
    # tr(K L) = ||X'Y||_F^2; never materializes an n x n matrix.
    cross = x.T @ y
    hxy = float(np.sum(cross * cross))
    sx = x.T @ x
    sy = y.T @ y
    return hxy, float(np.sum(sx * sx)), float(np.sum(sy * sy))


def cka(
    x: RepresentationMatrix,
    y: RepresentationMatrix,
    spec: KernelSpec,
    sigma: float | None = None,
) -> CkaResult:
    """Full-batch biased CKA between two representation sets.

    Inputs are centered internally when their flags are unset. For RBF, each
    matrix gets its own median-rule bandwidth unless ``sigma`` pins one
    bandwidth for both. The biased estimate is clamped into [0, 1].
    """
    if x.n != y.n:
        raise ShapeMismatch(f"row counts differ: {x.n} vs {y.n}")
    if not x.centered:
        x = center_columns(x)
    if not y.centered:
        y = center_columns(y)
    if spec.kind == "linear":
        hxy, hxx, hyy = _linear_hsic_terms(x.data, y.data)
    else:
        k = kernel_matrix(x, spec, sigma=sigma).values
        l = kernel_matrix(y, spec, sigma=sigma).values
        kc = _double_center(k)
        lc = _double_center(l)
        hxy = float(np.sum(kc * lc))
        hxx = float(np.sum(kc * kc))
        hyy = float(np.sum(lc * lc))
    if hxx <= 0.0 or hyy <= 0.0:
        raise DegenerateData("constant representations give zero self-HSIC")
    value = hxy / np.sqrt(hxx * hyy)
    return CkaResult(float(np.clip(value, 0.0, 1.0)), BIASED_FULL, spec)


def minibatch_cka(
    x: RepresentationMatrix,
    y: RepresentationMatrix,
    spec: KernelSpec,
    batch_size: int,
    rng: SeededRng,
    bandwidth_mode: str = "per-batch",
) -> CkaResult:
    """Minibatch CKA: unbiased HSIC terms averaged over disjoint batches.

    Rows are shuffled once, partitioned into ``floor(n / batch_size)`` full
    batches (remainder dropped), and the estimate is

        mean_b HSIC1(Q_b, Z_b) / sqrt(mean_b HSIC1(Q_b, Q_b) * mean_b HSIC1(Z_b, Z_b)).

    Batch index sets are sorted so a single-batch run reproduces the
    full-matrix unbiased CKA bit for bit. RBF bandwidths follow
    ``bandwidth_mode``: ``per-batch`` (each batch's own median distances) or
    ``global`` (one bandwidth per matrix from all rows). The unbiased value
    is reported unclamped and may be slightly negative.
    """
    if x.n != y.n:
        raise ShapeMismatch(f"row counts differ: {x.n} vs {y.n}")
    if batch_size < 4:
        raise TooFewSamples("batch_size must be at least 4")
    if x.n < batch_size:
        raise TooFewSamples(f"n={x.n} smaller than batch_size={batch_size}")
    if bandwidth_mode not in ("per-batch", "global"):
        raise InvalidMatrix(f"unknown bandwidth_mode {bandwidth_mode!r}")
    if not x.centered:
        x = center_columns(x)
    if not y.centered:
        y = center_columns(y)

    sigma_x = sigma_y = None
    if spec.kind == "rbf" and bandwidth_mode == "global":
        sigma_x = rbf_bandwidth(x, spec.median_fraction)
        sigma_y = rbf_bandwidth(y, spec.median_fraction)

    perm = rng.generator().permutation(x.n)
    n_batches = x.n // batch_size
    num = 0.0
    den_x = 0.0
    den_y = 0.0
    for b in range(n_batches):
        idx = np.sort(perm[b * batch_size : (b + 1) * batch_size])
        xb = RepresentationMatrix(x.data[idx])
        yb = RepresentationMatrix(y.data[idx])
        q = kernel_matrix(xb, spec, sigma=sigma_x).values
        z = kernel_matrix(yb, spec, sigma=sigma_y).values
        hxx = hsic_unbiased(q, q)
        hyy = hsic_unbiased(z, z)
        if hxx == 0.0 or hyy == 0.0:
            raise DegenerateData(f"batch {b} has zero self-HSIC")
        num += hsic_unbiased(q, z)
        den_x += hxx
        den_y += hyy
    num /= n_batches
    den_x /= n_batches
    den_y /= n_batches
    if den_x <= 0.0 or den_y <= 0.0:
        raise DegenerateData("mean self-HSIC is not positive")
    return CkaResult(num / float(np.sqrt(den_x * den_y)), UNBIASED_MINIBATCH, spec)
