"""Desk-scale experiment runners.

Pure functions over (data, SeededRng): translation-distance sweeps, outlier
sweeps, invertible-map grids, and targeted CKA manipulation. All file and
wire concerns live in the service and CLI layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    RepresentationMatrix,
    SeededRng,
    center_columns,
    sample_unit_direction,
)
from .errors import InvalidMatrix, InvertibilityFailure
from .manipulate import ManipulationConfig, manipulate_to_target
from .similarity import KernelSpec, cka, rbf_bandwidth
from .theory import predict_limit, predict_limit_outlier
from .transforms import (
    Hyperplane,
    TranslationSpec,
    apply_linear,
    check_separation,
    margin_preserving_direction,
    random_invertible_gaussian,
    subset_translate,
)

DEFAULT_GRID_POINTS = 20
DEFAULT_GRID_LO = 0.1
DEFAULT_GRID_HI = 1e4

# Stream ids carved out of each experiment's SeededRng.
_STREAM_DIRECTION = 0
_STREAM_INVMAP_BASE = 100


def default_distance_grid(rms: float, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Geometric grid from 0.1 to 1e4 times the data RMS row norm."""
    return np.geomspace(DEFAULT_GRID_LO, DEFAULT_GRID_HI, points) * rms


def _validate_distances(distances) -> np.ndarray:
    arr = np.asarray(distances, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidMatrix("distance grid must be a non-empty vector")
    if np.any(np.diff(arr) <= 0):
        raise InvalidMatrix("distances must be strictly increasing")
    if arr[0] < 0:
        raise InvalidMatrix("distances must be nonnegative")
    return arr


@dataclass(frozen=True)
class SweepRow:
    distance: float
    cka_values: dict  # kernel label -> biased CKA value
    predicted_limit: float
    margin_ok: bool | None
    margin_s: float | None = None
    margin_complement: float | None = None
    max_projection_drift: float | None = None


@dataclass(frozen=True)
class SweepRun:
    rows: list
    direction: np.ndarray
    predicted_limit: float
    kernel_labels: list = field(default_factory=list)


def _sorted_kernels(kernels: list[KernelSpec]) -> list[KernelSpec]:
    linear = [k for k in kernels if k.kind == "linear"]
    rbf = sorted(
        (k for k in kernels if k.kind == "rbf"), key=lambda k: k.median_fraction
    )
    return linear[:1] + rbf


def run_sweep(
    x: RepresentationMatrix,
    subset_mask: np.ndarray,
    kernels: list[KernelSpec],
    rng: SeededRng,
    distances=None,
    direction_mode: str = "random",
    hyperplane: Hyperplane | None = None,
    bandwidth_mode: str = "anchored",
) -> SweepRun:
    """Translate everything outside the masked subset across a distance grid.

    For each distance c the translated copy is recentered and every
    configured kernel's CKA against the original is recorded, together with
    the closed-form limit prediction (constant across the grid — the limit
    is independent of direction and distance).

    ``direction_mode``: ``random`` draws a uniform direction;
    ``margin-preserving`` draws one orthogonal to the hyperplane normal.
    Whenever a hyperplane is available the rows also report margins and the
    worst per-row drift of the projections onto its normal.

    ``bandwidth_mode``: ``anchored`` computes each RBF fraction's bandwidth
    once from the untranslated data and keeps the kernel fixed across the
    sweep; ``per-matrix`` recomputes it from each translated copy (at large
    distances the recomputed median inflates with the translation, so even
    small-bandwidth CKA collapses).
    """
    if not x.centered:
        x = center_columns(x)
    distances = (
        default_distance_grid(x.rms_row_norm())
        if distances is None
        else _validate_distances(distances)
    )
    if direction_mode == "margin-preserving":
        if hyperplane is None:
            raise InvalidMatrix("margin-preserving mode needs a hyperplane")
        direction = margin_preserving_direction(
            hyperplane, rng.stream(_STREAM_DIRECTION)
        )
    elif direction_mode == "random":
        direction = sample_unit_direction(rng.stream(_STREAM_DIRECTION), x.p)
    else:
        raise InvalidMatrix(f"unknown direction mode {direction_mode!r}")
    if bandwidth_mode not in ("anchored", "per-matrix"):
        raise InvalidMatrix(f"unknown bandwidth mode {bandwidth_mode!r}")

    kernels = _sorted_kernels(kernels)
    anchored_sigmas = {}
    if bandwidth_mode == "anchored":
        for spec in kernels:
            if spec.kind == "rbf":
                anchored_sigmas[spec.label()] = rbf_bandwidth(x, spec.median_fraction)

    prediction = predict_limit(x, subset_mask).predicted_cka_limit
    base_proj = x.data @ hyperplane.normal if hyperplane is not None else None
    w_norm = float(np.linalg.norm(hyperplane.normal)) if hyperplane is not None else 0.0

    rows = []
    for c in distances:
        spec_t = TranslationSpec(subset_mask, direction, float(c))
        y = center_columns(subset_translate(x, spec_t))
        values = {}
        for kspec in kernels:
            values[kspec.label()] = cka(
                x, y, kspec, sigma=anchored_sigmas.get(kspec.label())
            ).value
        margin_ok = margin_s = margin_c = drift = None
        if hyperplane is not None:
            report = check_separation(y, hyperplane, subset_mask)
            margin_ok = report.separated
            margin_s = report.margin_s
            margin_c = report.margin_complement
            drift = float(np.max(np.abs(y.data @ hyperplane.normal - base_proj)))
        rows.append(
            SweepRow(
                distance=float(c),
                cka_values=values,
                predicted_limit=prediction,
                margin_ok=margin_ok,
                margin_s=margin_s,
                margin_complement=margin_c,
                max_projection_drift=drift,
            )
        )
    return SweepRun(
        rows=rows,
        direction=direction,
        predicted_limit=prediction,
        kernel_labels=[k.label() for k in kernels],
    )


def run_outlier(
    x: RepresentationMatrix,
    index: int,
    kernels: list[KernelSpec],
    rng: SeededRng,
    distances=None,
    bandwidth_mode: str = "anchored",
) -> SweepRun:
    """Sweep that moves a single row; the prediction comes from the
    singleton-subset special case (its complement identity makes the two
    mask conventions agree)."""
    if not x.centered:
        x = center_columns(x)
    prediction = predict_limit_outlier(x, index).predicted_cka_limit
    mask = np.ones(x.n, dtype=bool)
    mask[index] = False  # everything except the outlier stays put
    run = run_sweep(
        x,
        mask,
        kernels,
        rng,
        distances=distances,
        direction_mode="random",
        bandwidth_mode=bandwidth_mode,
    )
    rows = [
        SweepRow(
            distance=r.distance,
            cka_values=r.cka_values,
            predicted_limit=prediction,
            margin_ok=r.margin_ok,
        )
        for r in run.rows
    ]
    return SweepRun(rows, run.direction, prediction, run.kernel_labels)


@dataclass(frozen=True)
class InvmapRow:
    mu: float
    sigma: float
    mean_cka: float
    std_cka: float


def run_invmap(
    x: RepresentationMatrix,
    mu_values,
    sigma_values,
    repeats: int,
    rng: SeededRng,
) -> list[InvmapRow]:
    """Linear CKA between X and X M for random invertible Gaussian M.

    For each (mu, sigma) cell, ``repeats`` matrices are drawn (rejecting
    singular ones) and the mean and standard deviation of CKA(X, XM) are
    reported.
    """
    if repeats < 1:
        raise InvalidMatrix("repeats must be at least 1")
    if not x.centered:
        x = center_columns(x)
    linear = KernelSpec("linear")
    rows = []
    cell = 0
    for mu in mu_values:
        for sigma in sigma_values:
            values = []
            for rep in range(repeats):
                stream = rng.stream(_STREAM_INVMAP_BASE + cell * repeats + rep)
                try:
                    m, _ = random_invertible_gaussian(x.p, mu, sigma, stream)
                except InvertibilityFailure as exc:
                    raise InvertibilityFailure(
                        f"(mu={mu}, sigma={sigma}): {exc}"
                    ) from exc
                y = apply_linear(x, m)
                values.append(cka(x, y, linear).value)
            rows.append(
                InvmapRow(
                    mu=float(mu),
                    sigma=float(sigma),
                    mean_cka=float(np.mean(values)),
                    std_cka=float(np.std(values)),
                )
            )
            cell += 1
    return rows


@dataclass(frozen=True)
class ManipulationRun:
    final_cka: float
    translation_norm: float
    iterations: int
    converged: bool
    margins_preserved: bool | None
    trace: list


def run_manipulate(
    x: RepresentationMatrix,
    y0: RepresentationMatrix,
    cfg: ManipulationConfig,
    mask: np.ndarray,
) -> ManipulationRun:
    """Run the optimizer and, under a constraint, verify margin preservation.

    ``margins_preserved`` checks that every row's projection onto the
    constraint normal moved by less than 1e-9 * ||w|| * (1 + ||t||).
    """
    y_star, trace = manipulate_to_target(x, y0, cfg, mask)
    last = trace[-1]
    margins_preserved = None
    if cfg.constraint is not None:
        w = cfg.constraint.normal
        if not y0.centered:
            y0 = center_columns(y0)
        drift = float(np.max(np.abs((y_star.data - y0.data) @ w)))
        bound = 1e-9 * float(np.linalg.norm(w)) * (1.0 + last.translation_norm)
        margins_preserved = drift < bound
    return ManipulationRun(
        final_cka=last.cka,
        translation_norm=last.translation_norm,
        iterations=last.iteration,
        converged=abs(last.cka - cfg.target_cka) < cfg.tolerance,
        margins_preserved=margins_preserved,
        trace=trace,
    )
