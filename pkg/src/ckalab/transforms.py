"""Representation-space transformations.

Subset translations (the construction behind the limit theory), directions
that provably preserve linear separability and margins, separation checks,
and random invertible Gaussian maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RepresentationMatrix, SeededRng
from .errors import (
    DegenerateData,
    InvalidDirection,
    InvalidMatrix,
    InvalidSubset,
    InvertibilityFailure,
    NoOrthogonalDirection,
    ShapeMismatch,
)

MAX_INVERTIBILITY_DRAWS = 50
SINGULAR_VALUE_RATIO = 1e-10


@dataclass(frozen=True)
class TranslationSpec:
    """A subset translation: rows in S stay put, the rest move by c * v.

    ``subset_mask`` is true for members of S (the rows that are NOT
    translated). ``distance`` may be negative, which reverses the direction
    and makes the transformation its own inverse.
    """

    subset_mask: np.ndarray
    direction: np.ndarray
    distance: float

    def __post_init__(self):
        mask = np.asarray(self.subset_mask, dtype=bool)
        direction = np.asarray(self.direction, dtype=np.float64)
        if mask.ndim != 1:
            raise InvalidSubset("subset mask must be a 1-d boolean vector")
        if mask.all() or not mask.any():
            raise InvalidSubset("subset mask must be neither all-true nor all-false")
        if direction.ndim != 1 or not np.all(np.isfinite(direction)):
            raise InvalidDirection("direction must be a finite 1-d vector")
        if abs(float(np.linalg.norm(direction)) - 1.0) > 1e-12:
            raise InvalidDirection("direction must have unit norm (within 1e-12)")
        if not np.isfinite(self.distance):
            raise InvalidDirection("distance must be finite")
        object.__setattr__(self, "subset_mask", mask)
        object.__setattr__(self, "direction", direction)


@dataclass(frozen=True)
class Hyperplane:
    """Separating hyperplane <w, x> = k with normal w and offset k."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=np.float64)
        if normal.ndim != 1 or not np.all(np.isfinite(normal)):
            raise InvalidMatrix("hyperplane normal must be a finite 1-d vector")
        if float(np.linalg.norm(normal)) == 0.0:
            raise InvalidMatrix("hyperplane normal must be nonzero")
        object.__setattr__(self, "normal", normal)


@dataclass(frozen=True)
class SeparationReport:
    separated: bool
    margin_s: float
    margin_complement: float


def subset_translate(
    x: RepresentationMatrix, spec: TranslationSpec
) -> RepresentationMatrix:
    """Copy X, then add c * v to every row outside S.

    The result's centered flag is false: translating a subset moves the
    column means by (#translated / n) * c * v.
    """
    if spec.subset_mask.shape != (x.n,):
        raise ShapeMismatch(f"mask length {spec.subset_mask.size} != n={x.n}")
    if spec.direction.shape != (x.p,):
        raise ShapeMismatch(f"direction length {spec.direction.size} != p={x.p}")
    out = x.data.copy()
    out[~spec.subset_mask] += spec.distance * spec.direction
    return RepresentationMatrix(out, centered=False)


def margin_preserving_direction(h: Hyperplane, rng: SeededRng) -> np.ndarray:
    """Unit direction orthogonal to the hyperplane normal.

    Translating any subset along the result leaves every <w, x> projection
    unchanged, hence separability and margins are preserved. Built by
    sampling a random direction and removing its w-component, resampling
    when the residual is degenerate.
    """
    w = h.normal
    p = w.size
    if p < 2:
        raise NoOrthogonalDirection("p = 1 leaves no orthogonal direction")
    gen = rng.generator()
    w_sq = float(w @ w)
    for _ in range(100):
        u = gen.standard_normal(p)
        u = u - (float(u @ w) / w_sq) * w
        norm = float(np.linalg.norm(u))
        if norm >= 1e-8:
            return u / norm
    raise NoOrthogonalDirection("projection onto the orthogonal complement kept degenerating")


def check_separation(
    x: RepresentationMatrix, h: Hyperplane, mask: np.ndarray
) -> SeparationReport:
    """Margins of S (mask true, side <w, x> <= k) and its complement."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (x.n,):
        raise ShapeMismatch(f"mask length {mask.size} != n={x.n}")
    if h.normal.shape != (x.p,):
        raise ShapeMismatch(f"normal length {h.normal.size} != p={x.p}")
    if mask.all() or not mask.any():
        raise InvalidSubset("need points on both sides to measure margins")
    proj = x.data @ h.normal
    margin_s = float(h.offset - proj[mask].max())
    margin_complement = float(proj[~mask].min() - h.offset)
    return SeparationReport(
        separated=margin_s > 0 and margin_complement > 0,
        margin_s=margin_s,
        margin_complement=margin_complement,
    )


def random_invertible_gaussian(
    p: int, mu: float, sigma: float, rng: SeededRng
) -> tuple[np.ndarray, float]:
    """p x p matrix with i.i.d. Normal(mu, sigma^2) entries, plus condition estimate.

    Draws are rejected until the smallest singular value exceeds 1e-10
    times the largest (a determinant test is scale-fragile at p ~ 1000).
    """
    if sigma < 0:
        raise DegenerateData("sigma must be nonnegative")
    if sigma == 0 and mu == 0:
        raise DegenerateData("mu = sigma = 0 draws the zero matrix")
    gen = rng.generator()
    for _ in range(MAX_INVERTIBILITY_DRAWS):
        m = gen.normal(mu, sigma, size=(p, p))
        svals = np.linalg.svd(m, compute_uv=False)
        largest, smallest = float(svals[0]), float(svals[-1])
        if smallest > SINGULAR_VALUE_RATIO * largest:
            return m, largest / smallest
    raise InvertibilityFailure(
        f"{MAX_INVERTIBILITY_DRAWS} consecutive draws failed the invertibility test "
        f"(mu={mu}, sigma={sigma})"
    )


def apply_linear(x: RepresentationMatrix, m: np.ndarray) -> RepresentationMatrix:
    """Right-multiply every row by M; preserves zero column means."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != x.p:
        raise ShapeMismatch(f"matrix shape {m.shape} incompatible with p={x.p}")
    return RepresentationMatrix(x.data @ m, centered=x.centered)
