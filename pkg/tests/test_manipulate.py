import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckalab.core import RepresentationMatrix, center_columns
from ckalab.errors import (
    DegenerateData,
    InvalidMatrix,
    NotCentered,
    ShapeMismatch,
    Stalled,
)
from ckalab.manipulate import (
    CkaMap,
    LambdaSchedulerState,
    ManipulationConfig,
    lambda_step,
    linear_cka_gradient,
    log_cosh_map_loss,
    manipulate_to_target,
)
from ckalab.similarity import KernelSpec, cka
from ckalab.synthetic import TwoCubeConfig, two_cubes
from ckalab.theory import predict_limit

from oracles import central_difference_gradient, naive_linear_cka, random_orthogonal

LINEAR = KernelSpec("linear")


def sym_map(entries):
    arr = np.asarray(entries, dtype=float)
    return CkaMap(arr)


class TestCkaMap:
    def test_rejects_bad_diagonal(self):
        with pytest.raises(InvalidMatrix):
            CkaMap(np.array([[0.9, 0.2], [0.2, 1.0]]))

    def test_rejects_asymmetry(self):
        with pytest.raises(InvalidMatrix):
            CkaMap(np.array([[1.0, 0.2], [0.3, 1.0]]))

    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidMatrix):
            CkaMap(np.array([[1.0, 1.2], [1.2, 1.0]]))


class TestLogCoshMapLoss:
    def test_equal_maps_give_zero(self):
        m = sym_map([[1.0, 0.4], [0.4, 1.0]])
        assert log_cosh_map_loss(m, m) == 0.0

    def test_single_gap_counted_twice(self):
        d = 0.3
        a = sym_map([[1.0, 0.5], [0.5, 1.0]])
        b = sym_map([[1.0, 0.5 - d], [0.5 - d, 1.0]])
        assert log_cosh_map_loss(a, b) == pytest.approx(2 * np.log(np.cosh(d)))

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(0)
        vals = rng.uniform(0, 1, size=(3, 3))
        vals = (vals + vals.T) / 2
        np.fill_diagonal(vals, 1.0)
        other = rng.uniform(0, 1, size=(3, 3))
        other = (other + other.T) / 2
        np.fill_diagonal(other, 1.0)
        a, b = CkaMap(vals), CkaMap(other)
        expected = sum(
            np.log(np.cosh(vals[i, j] - other[i, j]))
            for i in range(3)
            for j in range(3)
        )
        assert log_cosh_map_loss(a, b) == pytest.approx(expected, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            log_cosh_map_loss(sym_map(np.eye(2)), sym_map(np.eye(3)))

    def test_nonnegative_and_zero_iff_equal(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            vals = rng.uniform(0, 1, size=(4, 4))
            vals = (vals + vals.T) / 2
            np.fill_diagonal(vals, 1.0)
            other = rng.uniform(0, 1, size=(4, 4))
            other = (other + other.T) / 2
            np.fill_diagonal(other, 1.0)
            loss = log_cosh_map_loss(CkaMap(vals), CkaMap(other))
            if np.array_equal(vals, other):
                assert loss == 0.0
            else:
                assert loss > 0.0


class TestLambdaStep:
    def test_threshold_breach_scales_down(self):
        state = LambdaSchedulerState(
            lam=500.0, scaling_factor=0.8, accuracy_threshold=1.0,
            original_accuracy=90.0,
        )
        assert lambda_step(state, 84.0).lam == pytest.approx(400.0)

    def test_within_threshold_scales_up(self):
        state = LambdaSchedulerState(
            lam=500.0, scaling_factor=0.8, accuracy_threshold=1.0,
            original_accuracy=90.0,
        )
        assert lambda_step(state, 90.0).lam == pytest.approx(625.0)

    def test_down_up_pair_restores_lambda(self):
        state = LambdaSchedulerState(
            lam=500.0, scaling_factor=0.8, accuracy_threshold=1.0,
            original_accuracy=90.0,
        )
        down = lambda_step(state, 84.0)
        up = lambda_step(down, 90.0)
        assert up.lam == pytest.approx(500.0)

    @given(
        st.lists(st.floats(min_value=0.0, max_value=100.0), min_size=1, max_size=30)
    )
    @settings(max_examples=30, deadline=None)
    def test_lambda_stays_positive(self, accuracies):
        state = LambdaSchedulerState(
            lam=500.0, scaling_factor=0.8, accuracy_threshold=1.0,
            original_accuracy=90.0,
        )
        for acc in accuracies:
            state = lambda_step(state, acc)
            assert state.lam > 0

    def test_rejects_out_of_range_accuracy(self):
        state = LambdaSchedulerState(
            lam=1.0, scaling_factor=0.5, accuracy_threshold=0.0,
            original_accuracy=50.0,
        )
        with pytest.raises(InvalidMatrix):
            lambda_step(state, 101.0)


class TestLinearCkaGradient:
    def test_zero_at_maximum(self):
        rng = np.random.default_rng(2)
        x = center_columns(RepresentationMatrix(rng.standard_normal((12, 4))))
        q = random_orthogonal(4, rng)
        y = center_columns(RepresentationMatrix(x.data @ q))
        grad = linear_cka_gradient(x, y)
        assert np.abs(grad).max() < 1e-8

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x = center_columns(RepresentationMatrix(rng.standard_normal((8, 3))))
        y_raw = rng.standard_normal((8, 3))
        y = center_columns(RepresentationMatrix(y_raw))
        grad = linear_cka_gradient(x, y)
        fd = central_difference_gradient(
            lambda m: naive_linear_cka(x.data, m), y_raw, step=1e-5
        )
        scale = np.abs(grad).max()
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5 * scale)

    def test_symmetry_of_arguments(self):
        rng = np.random.default_rng(4)
        x = center_columns(RepresentationMatrix(rng.standard_normal((9, 2))))
        y = center_columns(RepresentationMatrix(rng.standard_normal((9, 5))))
        np.testing.assert_allclose(
            linear_cka_gradient(x, y),
            central_difference_gradient(
                lambda m: naive_linear_cka(m, x.data), y.data, step=1e-5
            ),
            rtol=1e-4,
            atol=1e-9,
        )

    def test_requires_centered(self):
        rng = np.random.default_rng(5)
        x = RepresentationMatrix(rng.standard_normal((6, 2)) + 3.0)
        with pytest.raises(NotCentered):
            linear_cka_gradient(x, x)

    def test_degenerate_denominator(self):
        x = RepresentationMatrix(np.zeros((4, 2)), centered=True)
        with pytest.raises(DegenerateData):
            linear_cka_gradient(x, x)


@pytest.fixture(scope="module")
def cubes():
    return two_cubes(TwoCubeConfig(points_per_cube=250, dims=100, seed=3))


class TestManipulateToTarget:

    def test_target_already_met_stops_at_zero(self, cubes):
        x = cubes.matrix
        cfg = ManipulationConfig(
            target_cka=1.0, step_size=1.0, max_iters=100, tolerance=0.01
        )
        y_star, trace = manipulate_to_target(x, x, cfg, ~cubes.subset_mask)
        assert len(trace) == 1 and trace[0].iteration == 0
        assert trace[0].translation_norm == 0.0
        np.testing.assert_array_equal(y_star.data, x.data)

    def test_reaches_low_target_with_margin_constraint(self, cubes):
        x = cubes.matrix
        move = np.zeros(x.n, dtype=bool)
        move[-25:] = True  # a tenth of cube 2
        # the far-field limit must sit below the target for it to be reachable
        assert predict_limit(x, ~move).predicted_cka_limit < 0.05
        cfg = ManipulationConfig(
            target_cka=0.05,
            step_size=100.0,
            max_iters=5000,
            tolerance=0.01,
            constraint=cubes.hyperplane,
            seed=0,
        )
        y_star, trace = manipulate_to_target(x, x, cfg, move)
        final = trace[-1]
        assert abs(final.cka - 0.05) < 0.01
        assert final.iteration < 5000
        # projections onto the constraint normal stay put
        w = cubes.hyperplane.normal
        drift = np.abs((y_star.data - x.data) @ w).max()
        assert drift <= 1e-9 * np.linalg.norm(w) * (1 + final.translation_norm)
        # verify against an independent CKA evaluation
        assert cka(x, y_star, LINEAR).value == pytest.approx(final.cka, abs=1e-12)

    def test_unreachable_target_stalls(self, cubes):
        x = cubes.matrix
        move = ~cubes.subset_mask
        # pre-translate far out: CKA sits at the plateau, far below 0.999
        pre = x.data.copy()
        rng = np.random.default_rng(6)
        v = rng.standard_normal(x.p)
        v /= np.linalg.norm(v)
        pre[move] += 1e6 * x.rms_row_norm() * v
        y0 = center_columns(RepresentationMatrix(pre))
        cfg = ManipulationConfig(
            target_cka=0.999, step_size=1.0, max_iters=5000, tolerance=1e-4
        )
        with pytest.raises(Stalled) as err:
            manipulate_to_target(x, y0, cfg, move)
        trace = err.value.trace
        assert len(trace) >= 50
        # plateau: the last 50 recorded values barely move
        tail = [row.cka for row in trace[-50:]]
        assert max(tail) - min(tail) < 1e-10

    def test_max_iters_returns_last_state(self, cubes):
        x = cubes.matrix
        cfg = ManipulationConfig(
            target_cka=0.0, step_size=1e-6, max_iters=60, tolerance=1e-6
        )
        move = ~cubes.subset_mask
        try:
            y_star, trace = manipulate_to_target(x, x, cfg, move)
        except Stalled:
            return  # tiny steps may legitimately trip the plateau detector
        assert trace[-1].iteration == 60

    def test_mask_length_validated(self, cubes):
        cfg = ManipulationConfig(
            target_cka=0.5, step_size=1.0, max_iters=10, tolerance=0.01
        )
        with pytest.raises(Exception):
            manipulate_to_target(
                cubes.matrix, cubes.matrix, cfg, np.ones(3, dtype=bool)
            )


class TestGradientFiniteDifferenceSweep:
    def test_ten_random_shapes(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n = int(rng.integers(6, 21))
            p1 = int(rng.integers(2, 9))
            p2 = int(rng.integers(2, 9))
            x = center_columns(RepresentationMatrix(rng.standard_normal((n, p1))))
            y_raw = rng.standard_normal((n, p2))
            y = center_columns(RepresentationMatrix(y_raw))
            grad = linear_cka_gradient(x, y)
            fd = central_difference_gradient(
                lambda m: naive_linear_cka(x.data, m), y_raw, step=1e-5
            )
            scale = np.abs(grad).max()
            np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5 * scale)
