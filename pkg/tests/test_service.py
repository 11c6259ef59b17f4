import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from ckalab.core import RepresentationMatrix, center_columns
from ckalab.matrixio import matrix_from_binary, matrix_to_binary, matrix_to_csv
from ckalab.service import create_app
from ckalab.similarity import KernelSpec, cka
from ckalab.synthetic import TwoCubeConfig, two_cubes


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(), raise_server_exceptions=False)


def rows_payload(matrix):
    return {"rows": [[float(v) for v in row] for row in matrix]}


def b64_payload(raw: bytes):
    return {"content_b64": base64.b64encode(raw).decode("ascii")}


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


class TestCkaEndpoint:
    def test_inline_rows_match_library(self, client):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((10, 3))
        y = rng.standard_normal((10, 4))
        response = client.post(
            "/cka", json={"x": rows_payload(x), "y": rows_payload(y)}
        )
        assert response.status_code == 200
        expected = cka(
            center_columns(RepresentationMatrix(x)),
            center_columns(RepresentationMatrix(y)),
            KernelSpec("linear"),
        ).value
        assert response.json()["value"] == pytest.approx(expected, abs=1e-15)

    def test_binary_payload(self, client):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((8, 2))
        blob = matrix_to_binary(x)
        response = client.post(
            "/cka", json={"x": b64_payload(blob), "y": b64_payload(blob)}
        )
        assert response.status_code == 200
        assert response.json()["value"] == pytest.approx(1.0, abs=1e-10)

    def test_csv_payload(self, client):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((6, 2))
        blob = matrix_to_csv(x).encode()
        response = client.post(
            "/cka", json={"x": b64_payload(blob), "y": b64_payload(blob)}
        )
        assert response.status_code == 200

    def test_parse_error_code(self, client):
        response = client.post(
            "/cka",
            json={"x": b64_payload(b"definitely,not\nnumbers,here\n"),
                  "y": rows_payload(np.eye(2))},
        )
        assert response.status_code == 422
        assert response.json()["detail"]["code"] == "parse"

    def test_shape_error_code(self, client):
        response = client.post(
            "/cka",
            json={"x": rows_payload(np.eye(3)), "y": rows_payload(np.eye(2))},
        )
        assert response.status_code == 422
        assert response.json()["detail"]["code"] == "shape"

    def test_rbf_kernel_param(self, client):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((9, 3))
        response = client.post(
            "/cka",
            json={
                "x": rows_payload(x),
                "y": rows_payload(x),
                "kernel": {"kind": "rbf", "median_fraction": 0.8},
            },
        )
        assert response.status_code == 200
        assert response.json()["value"] == pytest.approx(1.0, abs=1e-10)


class TestSweepEndpoint:
    def test_generated_two_cubes(self, client):
        response = client.post(
            "/sweep",
            json={
                "dataset": {"two_cubes": {"points_per_cube": 40, "dims": 10, "seed": 2}},
                "kernels": [{"kind": "linear"}],
                "direction_mode": "margin-preserving",
                "grid": {"points": 3, "lo": 0.1, "hi": 100.0},
                "seed": 5,
            },
        )
        assert response.status_code == 200
        body = response.json()
        assert len(body["rows"]) == 3
        assert body["kernel_labels"] == ["linear"]
        assert all(r["margin_ok"] for r in body["rows"])
        assert body["provenance"]["generated"]["two_cubes"]["seed"] == 2

    def test_uploaded_matrix_with_mask(self, client):
        ds = two_cubes(TwoCubeConfig(points_per_cube=30, dims=6, seed=3))
        blob = matrix_to_binary(ds.matrix.data)
        response = client.post(
            "/sweep",
            json={
                "dataset": {
                    "matrix": b64_payload(blob),
                    "mask": [bool(v) for v in ds.subset_mask],
                },
                "kernels": [{"kind": "linear"}],
                "distances": [1.0, 10.0],
                "seed": 1,
            },
        )
        assert response.status_code == 200
        assert "sha256" in response.json()["provenance"]["uploaded"]

    def test_gaussian_with_explicit_mask(self, client):
        mask = [True] * 15 + [False] * 15
        response = client.post(
            "/sweep",
            json={
                "dataset": {"gaussian": {"n": 30, "p": 5, "seed": 6}, "mask": mask},
                "kernels": [{"kind": "linear"}],
                "distances": [2.0],
                "seed": 2,
            },
        )
        assert response.status_code == 200
        assert response.json()["rows"][0]["margin_ok"] is None

    def test_sweep_without_mask_rejected(self, client):
        response = client.post(
            "/sweep",
            json={
                "dataset": {"gaussian": {"n": 20, "p": 4, "seed": 0}},
                "kernels": [{"kind": "linear"}],
                "distances": [1.0],
            },
        )
        assert response.status_code == 422
        assert response.json()["detail"]["code"] == "invalid_subset"

    def test_exactly_one_dataset_source(self, client):
        response = client.post(
            "/sweep",
            json={
                "dataset": {
                    "two_cubes": {"points_per_cube": 10, "dims": 2},
                    "gaussian": {"n": 10, "p": 2},
                },
                "distances": [1.0],
            },
        )
        assert response.status_code == 422  # pydantic validation


class TestOutlierEndpoint:
    def test_gaussian_outlier(self, client):
        response = client.post(
            "/outlier",
            json={
                "dataset": {"gaussian": {"n": 50, "p": 5, "seed": 4}},
                "index": 7,
                "kernels": [{"kind": "linear"}],
                "distances": [0.0, 5.0],
            },
        )
        assert response.status_code == 200
        rows = response.json()["rows"]
        assert rows[0]["cka_values"]["linear"] == pytest.approx(1.0, abs=1e-10)


class TestInvmapEndpoint:
    def test_small_grid(self, client):
        response = client.post(
            "/invmap",
            json={
                "dataset": {"two_cubes": {"points_per_cube": 25, "dims": 8, "seed": 5}},
                "mu_values": [0.0],
                "sigma_values": [1.0],
                "repeats": 2,
                "seed": 6,
            },
        )
        assert response.status_code == 200
        rows = response.json()["rows"]
        assert len(rows) == 1
        assert 0.0 <= rows[0]["mean_cka"] <= 1.0


class TestManipulateEndpoint:
    def test_converges_and_reports(self, client):
        response = client.post(
            "/manipulate",
            json={
                "dataset": {"two_cubes": {"points_per_cube": 50, "dims": 20, "seed": 7}},
                "target_cka": 0.6,
                "step_size": 20.0,
                "max_iters": 4000,
                "tolerance": 0.02,
                "constrain_to_hyperplane": True,
                "seed": 8,
            },
        )
        assert response.status_code == 200
        body = response.json()
        assert body["converged"]
        assert abs(body["final_cka"] - 0.6) < 0.02
        assert body["margins_preserved"] is True
        assert body["trace"][0]["iteration"] == 0

    def test_stalled_returns_code_and_trace(self, client):
        ds = two_cubes(TwoCubeConfig(points_per_cube=30, dims=10, seed=9))
        pre = ds.matrix.data.copy()
        rng = np.random.default_rng(10)
        v = rng.standard_normal(10)
        v /= np.linalg.norm(v)
        pre[~ds.subset_mask] += 1e6 * ds.matrix.rms_row_norm() * v
        pre -= pre.mean(axis=0)
        response = client.post(
            "/manipulate",
            json={
                "dataset": {"two_cubes": {"points_per_cube": 30, "dims": 10, "seed": 9}},
                "y0": rows_payload(pre),
                "target_cka": 0.999,
                "step_size": 1.0,
                "max_iters": 2000,
                "tolerance": 0.0001,
                "constrain_to_hyperplane": False,
            },
        )
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert detail["code"] == "stalled"
        assert len(detail["trace"]) >= 50


class TestGenerateEndpoint:
    def test_two_cubes_roundtrip(self, client):
        response = client.post(
            "/generate",
            json={"dataset": {"two_cubes": {"points_per_cube": 20, "dims": 5, "seed": 11}}},
        )
        assert response.status_code == 200
        body = response.json()
        matrix = matrix_from_binary(base64.b64decode(body["matrix_b64"]))
        expected = two_cubes(TwoCubeConfig(points_per_cube=20, dims=5, seed=11))
        np.testing.assert_array_equal(matrix, expected.matrix.data)
        assert body["mask"] == [bool(v) for v in expected.subset_mask]
        assert body["hyperplane"]["offset"] == pytest.approx(
            expected.hyperplane.offset
        )

    def test_gaussian_has_no_mask(self, client):
        response = client.post(
            "/generate", json={"dataset": {"gaussian": {"n": 12, "p": 3, "seed": 12}}}
        )
        assert response.status_code == 200
        assert response.json()["mask"] is None
