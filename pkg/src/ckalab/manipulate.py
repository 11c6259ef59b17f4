"""Driving CKA to arbitrary targets without changing classifier behaviour.

The optimization variable is a single translation vector applied to a
masked subset of rows, so the search stays inside the family covered by
the limit theory, and constraining the vector to a hyperplane normal's
orthogonal complement makes every ``<w, y>`` projection exactly invariant:
any fixed linear classifier keeps its predictions through every iterate.

Also provides, as pure functions, the log-cosh loss between CKA maps and
the dynamic lambda balancing rule used when such a loss is traded off
against an accuracy-preservation term.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import RepresentationMatrix, SeededRng, center_columns
from .errors import (
    DegenerateData,
    InvalidMatrix,
    InvalidSubset,
    NotCentered,
    ShapeMismatch,
    Stalled,
)
from .transforms import Hyperplane

STALL_WINDOW = 50
STALL_DELTA = 1e-12


@dataclass(frozen=True)
class CkaMap:
    """Symmetric L x L matrix of pairwise CKA values with unit diagonal."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidMatrix(f"CKA map must be square, got {arr.shape}")
        if float(np.max(np.abs(arr - arr.T))) > 1e-10:
            raise InvalidMatrix("CKA map must be symmetric")
        if float(np.max(np.abs(np.diag(arr) - 1.0))) > 1e-10:
            raise InvalidMatrix("CKA map diagonal must be 1")
        if arr.min() < -1e-10 or arr.max() > 1.0 + 1e-10:
            raise InvalidMatrix("CKA map entries must lie in [0, 1]")
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class LambdaSchedulerState:
    """State of the dynamic loss-balancing multiplier.

    ``lam`` weights the map loss against output preservation;
    ``original_accuracy`` is the reference accuracy in percent.
    """

    lam: float
    scaling_factor: float
    accuracy_threshold: float
    original_accuracy: float

    def __post_init__(self):
        if self.lam <= 0:
            raise InvalidMatrix("lambda must stay positive")
        if not 0.0 < self.scaling_factor < 1.0:
            raise InvalidMatrix("scaling factor must lie in (0, 1)")
        if self.accuracy_threshold < 0:
            raise InvalidMatrix("accuracy threshold must be nonnegative")
        if not 0.0 <= self.original_accuracy <= 100.0:
            raise InvalidMatrix("original accuracy must lie in [0, 100]")


@dataclass(frozen=True)
class ManipulationConfig:
    """Optimizer settings for :func:`manipulate_to_target`.

    ``constraint`` restricts the translation to the orthogonal complement
    of the hyperplane normal (None means unconstrained). ``seed`` feeds the
    deterministic escape nudge used when the optimizer starts exactly at a
    stationary point (e.g. Y0 = X, where CKA is already maximal).
    """

    target_cka: float
    step_size: float
    max_iters: int
    tolerance: float
    constraint: Hyperplane | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.target_cka <= 1.0:
            raise InvalidMatrix("target CKA must lie in [0, 1]")
        if self.step_size <= 0 or self.tolerance <= 0:
            raise InvalidMatrix("step size and tolerance must be positive")
        if self.max_iters < 1:
            raise InvalidMatrix("max_iters must be at least 1")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    cka: float
    translation_norm: float
    loss: float


def log_cosh_map_loss(current: CkaMap, target: CkaMap) -> float:
    """Sum of ln cosh(current - target) over all entries, diagonal included.

    Nonnegative, zero exactly when the maps are equal. Unit diagonals
    contribute nothing, so including them is observable only for malformed
    maps, which the CkaMap invariant rejects.
    """
    if current.values.shape != target.values.shape:
        raise ShapeMismatch(
            f"map shapes differ: {current.values.shape} vs {target.values.shape}"
        )
    return float(np.sum(np.log(np.cosh(current.values - target.values))))


def lambda_step(
    state: LambdaSchedulerState, current_accuracy: float
) -> LambdaSchedulerState:
    """One balancing update: shrink lambda when accuracy slipped too far.

    With delta = original - current accuracy: lambda *= alpha when
    delta > threshold, otherwise lambda /= alpha. A down-up pair restores
    the starting value, and lambda stays positive for every input sequence.
    """
    if not 0.0 <= current_accuracy <= 100.0:
        raise InvalidMatrix("current accuracy must lie in [0, 100]")
    delta = state.original_accuracy - current_accuracy
    if delta > state.accuracy_threshold:
        new_lam = state.lam * state.scaling_factor
    else:
        new_lam = state.lam / state.scaling_factor
    return replace(state, lam=new_lam)


def _linear_cka_terms(x: np.ndarray, y: np.ndarray):
    cross = x.T @ y
    a = float(np.sum(cross * cross))
    sy = y.T @ y
    b = float(np.sqrt(np.sum((x.T @ x) ** 2)))
    d = float(np.sqrt(np.sum(sy * sy)))
    return cross, sy, a, b, d


def linear_cka_gradient(
    x: RepresentationMatrix, y: RepresentationMatrix
) -> np.ndarray:
    """Exact gradient of biased linear CKA with respect to the entries of Y.

    With centered inputs, CKA = ||X'Y||_F^2 / (||X'X||_F ||Y'Y||_F); the
    gradient is (2 / (b d)) (X X'Y - (a / d^2) Y Y'Y), already column
    centered, and every intermediate is at most p x p or n x p.
    """
    if x.n != y.n:
        raise ShapeMismatch(f"row counts differ: {x.n} vs {y.n}")
    if not (x.centered and y.centered):
        raise NotCentered("gradient formula requires centered inputs")
    cross, sy, a, b, d = _linear_cka_terms(x.data, y.data)
    if b == 0.0 or d == 0.0:
        raise DegenerateData("constant representations give a degenerate denominator")
    return (2.0 / (b * d)) * (x.data @ cross) - (2.0 * a / (b * d**3)) * (y.data @ sy)


def _project_out(vec: np.ndarray, w: np.ndarray, w_sq: float) -> np.ndarray:
    return vec - (float(vec @ w) / w_sq) * w


def manipulate_to_target(
    x: RepresentationMatrix,
    y0: RepresentationMatrix,
    cfg: ManipulationConfig,
    mask: np.ndarray,
) -> tuple[RepresentationMatrix, list[TraceRow]]:
    """Gradient descent on (CKA(X, Y) - target)^2 over a translation vector.

    ``mask`` selects the rows that receive the translation, so
    Y(t) = Y0 + mask (x) t. Under a hyperplane constraint, t is re-projected
    onto the normal's orthogonal complement after every step, which keeps
    every row's projection onto the normal invariant across all iterates.

    Stops as soon as |CKA - target| < tolerance or after max_iters; raises
    :class:`Stalled` (trace attached) after 50 consecutive iterations whose
    CKA movement stays below 1e-12 while the target is still out of reach.

    Returns the centered optimized representations and the iteration trace.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (y0.n,):
        raise InvalidSubset(f"mask length {mask.size} does not match n={y0.n}")
    if x.n != y0.n:
        raise ShapeMismatch(f"row counts differ: {x.n} vs {y0.n}")
    if not x.centered:
        x = center_columns(x)
    if not y0.centered:
        y0 = center_columns(y0)

    w = None
    w_sq = 0.0
    if cfg.constraint is not None:
        if cfg.constraint.normal.shape != (y0.p,):
            raise ShapeMismatch("constraint normal length does not match p")
        w = cfg.constraint.normal
        w_sq = float(w @ w)

    # Centered indicator: adding outer(mask_c, t) to centered Y0 is exactly
    # the centered version of translating the masked rows by t.
    mask_c = mask.astype(np.float64)
    mask_c -= mask_c.mean()

    xd = x.data
    p = y0.p
    t = np.zeros(p)

    def evaluate(t_vec):
        yd = y0.data + np.outer(mask_c, t_vec)
        cross, sy, a, b, d = _linear_cka_terms(xd, yd)
        if b == 0.0 or d == 0.0:
            raise DegenerateData("degenerate denominator during optimization")
        cka_val = a / (b * d)
        grad_y = (2.0 / (b * d)) * (xd @ cross) - (2.0 * a / (b * d**3)) * (yd @ sy)
        grad_t = grad_y.T @ mask_c
        return cka_val, grad_t

    def result(t_vec):
        return RepresentationMatrix(y0.data + np.outer(mask_c, t_vec), centered=True)

    def descend(t_vec, gap, grad_t):
        update = 2.0 * gap * grad_t
        if w is not None:
            update = _project_out(update, w, w_sq)
        moved = t_vec - cfg.step_size * update
        if w is not None:
            moved = _project_out(moved, w, w_sq)
        return moved

    cka_val, grad_t = evaluate(t)
    gap = cka_val - cfg.target_cka
    trace = [TraceRow(0, cka_val, 0.0, gap * gap)]
    if abs(gap) < cfg.tolerance:
        return result(t), trace

    # A start at a stationary point (Y0 = X makes CKA maximal, gradient
    # exactly zero) cannot be left by gradient steps; nudge once with a tiny
    # deterministic in-constraint translation instead of the first step.
    loss_grad = 2.0 * gap * grad_t
    if w is not None:
        loss_grad = _project_out(loss_grad, w, w_sq)
    if float(np.linalg.norm(loss_grad)) < 1e-9:
        nudge = SeededRng(cfg.seed, stream_id=1).generator().standard_normal(p)
        if w is not None:
            nudge = _project_out(nudge, w, w_sq)
        nudge_norm = float(np.linalg.norm(nudge))
        if nudge_norm > 0:
            t = (1e-2 * x.rms_row_norm() / nudge_norm) * nudge
    else:
        t = descend(t, gap, grad_t)

    stall_count = 0
    prev_cka = cka_val
    for iteration in range(1, cfg.max_iters + 1):
        cka_val, grad_t = evaluate(t)
        gap = cka_val - cfg.target_cka
        trace.append(TraceRow(iteration, cka_val, float(np.linalg.norm(t)), gap * gap))
        if abs(gap) < cfg.tolerance:
            return result(t), trace
        if abs(cka_val - prev_cka) < STALL_DELTA:
            stall_count += 1
            if stall_count >= STALL_WINDOW:
                raise Stalled(
                    f"no CKA progress for {STALL_WINDOW} iterations at "
                    f"CKA={cka_val:.6f} (target {cfg.target_cka})",
                    trace=trace,
                )
        else:
            stall_count = 0
        prev_cka = cka_val
        if iteration < cfg.max_iters:
            t = descend(t, gap, grad_t)
    return result(t), trace
