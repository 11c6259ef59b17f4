"""Synthetic dataset generators for the bundled experiments."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import RepresentationMatrix, SeededRng
from .errors import InvalidMatrix
from .transforms import Hyperplane


class CubesOverlapWarning(UserWarning):
    """Offset <= 1 lets the two unit cubes overlap; separability is not guaranteed."""


@dataclass(frozen=True)
class TwoCubeConfig:
    """Two side-1 cubes on the first axis, the second shifted by ``offset``.

    Offsets above 1 guarantee linear separability along axis 1 with margin
    at least (offset - 1) / 2 on each side of the midpoint plane.
    """

    points_per_cube: int
    dims: int
    offset: float = 1.1
    seed: int = 0

    def __post_init__(self):
        if self.points_per_cube < 2:
            raise InvalidMatrix("need at least 2 points per cube")
        if self.dims < 1:
            raise InvalidMatrix("need at least 1 dimension")


@dataclass(frozen=True)
class TwoCubeDataset:
    """Centered sample, cube-membership mask (true = cube 1), and the
    separating hyperplane with its offset adjusted for the centering shift."""

    matrix: RepresentationMatrix
    subset_mask: np.ndarray
    hyperplane: Hyperplane


def two_cubes(cfg: TwoCubeConfig) -> TwoCubeDataset:
    """Sample both cubes, center the stack, and adjust the hyperplane.

    Cube 1 is uniform on [-0.5, 0.5]^p, cube 2 on the same cube shifted by
    (offset, 0, ..., 0). Rows 0..points_per_cube-1 are cube 1. Output is
    exactly reproducible from the seed.
    """
    if cfg.offset <= 1.0:
        warnings.warn(
            f"offset {cfg.offset} <= 1: cubes overlap, separability not guaranteed",
            CubesOverlapWarning,
        )
    gen = SeededRng(cfg.seed).generator()
    m, p = cfg.points_per_cube, cfg.dims
    cube1 = gen.uniform(-0.5, 0.5, size=(m, p))
    cube2 = gen.uniform(-0.5, 0.5, size=(m, p))
    cube2[:, 0] += cfg.offset
    stacked = np.vstack([cube1, cube2])
    col_means = stacked.mean(axis=0)
    centered = RepresentationMatrix(stacked - col_means, centered=True)
    mask = np.zeros(2 * m, dtype=bool)
    mask[:m] = True
    normal = np.zeros(p)
    normal[0] = 1.0
    # <e1, x> = offset/2 separates the raw cubes; centering shifts every
    # projection by the first coordinate of the mean.
    plane = Hyperplane(normal, cfg.offset / 2.0 - float(col_means[0]))
    return TwoCubeDataset(centered, mask, plane)


def gaussian_cloud(n: int, p: int, seed: int) -> RepresentationMatrix:
    """Column-centered i.i.d. standard normal sample."""
    if n < 2:
        raise InvalidMatrix("need at least 2 rows")
    gen = SeededRng(seed).generator()
    raw = gen.standard_normal((n, p))
    return RepresentationMatrix(raw - raw.mean(axis=0), centered=True)
