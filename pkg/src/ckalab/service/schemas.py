"""Pydantic request/response models for the HTTP API.

Matrices travel either as inline row lists (convenient for small payloads)
or as base64 of the shared on-disk encodings (CSV text or RSM1 binary), so
a client can upload a file's exact bytes and the service checksums what it
parsed.
"""

from __future__ import annotations

import base64
import binascii
import hashlib

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..errors import ParseError
from ..matrixio import parse_matrix_bytes


class MatrixPayload(BaseModel):
    """Exactly one of ``rows`` or ``content_b64`` must be set."""

    rows: list[list[float]] | None = None
    content_b64: str | None = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.rows is None) == (self.content_b64 is None):
            raise ValueError("provide exactly one of rows or content_b64")
        return self

    def to_array(self) -> np.ndarray:
        if self.rows is not None:
            try:
                arr = np.asarray(self.rows, dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"ragged or non-numeric rows: {exc}") from exc
            if arr.ndim != 2:
                raise ParseError("rows must form a 2-d matrix")
            return arr
        try:
            raw = base64.b64decode(self.content_b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise ParseError(f"invalid base64 matrix payload: {exc}") from exc
        return parse_matrix_bytes(raw)

    def checksum(self) -> str:
        if self.content_b64 is not None:
            raw = base64.b64decode(self.content_b64)
        else:
            raw = repr(self.rows).encode()
        return hashlib.sha256(raw).hexdigest()


class TwoCubesParams(BaseModel):
    points_per_cube: int = Field(ge=2)
    dims: int = Field(ge=1)
    offset: float = 1.1
    seed: int = 0


class GaussianParams(BaseModel):
    n: int = Field(ge=2)
    p: int = Field(ge=1)
    seed: int = 0


class HyperplaneModel(BaseModel):
    normal: list[float]
    offset: float


class DatasetSpec(BaseModel):
    """A generated dataset or an uploaded matrix (exactly one source).

    Uploaded matrices may carry an explicit subset mask (true = kept fixed)
    and an optional hyperplane; generated two-cube data provides both.
    """

    two_cubes: TwoCubesParams | None = None
    gaussian: GaussianParams | None = None
    matrix: MatrixPayload | None = None
    mask: list[bool] | None = None
    hyperplane: HyperplaneModel | None = None

    @model_validator(mode="after")
    def _exactly_one_source(self):
        sources = [self.two_cubes, self.gaussian, self.matrix]
        if sum(s is not None for s in sources) != 1:
            raise ValueError("provide exactly one of two_cubes, gaussian, matrix")
        return self


class KernelParam(BaseModel):
    kind: str = "linear"
    median_fraction: float | None = None


class CkaRequest(BaseModel):
    x: MatrixPayload
    y: MatrixPayload
    kernel: KernelParam = KernelParam()


class CkaResponse(BaseModel):
    value: float
    estimator: str
    kernel: KernelParam


class GridParams(BaseModel):
    """Geometric distance grid in units of the data RMS row norm."""

    points: int = Field(default=20, ge=1)
    lo: float = Field(default=0.1, gt=0)
    hi: float = Field(default=1e4, gt=0)


class SweepRequest(BaseModel):
    dataset: DatasetSpec
    kernels: list[KernelParam] = Field(default_factory=lambda: [KernelParam()])
    direction_mode: str = "random"
    distances: list[float] | None = None
    grid: GridParams | None = None
    seed: int = 0
    bandwidth_mode: str = "anchored"


class SweepRowModel(BaseModel):
    distance: float
    cka_values: dict[str, float]
    predicted_limit: float
    margin_ok: bool | None = None
    margin_s: float | None = None
    margin_complement: float | None = None
    max_projection_drift: float | None = None


class SweepResponse(BaseModel):
    rows: list[SweepRowModel]
    kernel_labels: list[str]
    predicted_limit: float
    rms_row_norm: float
    provenance: dict


class OutlierRequest(BaseModel):
    dataset: DatasetSpec
    index: int = Field(ge=0)
    kernels: list[KernelParam] = Field(default_factory=lambda: [KernelParam()])
    distances: list[float] | None = None
    grid: GridParams | None = None
    seed: int = 0
    bandwidth_mode: str = "anchored"


class InvmapRequest(BaseModel):
    dataset: DatasetSpec
    mu_values: list[float]
    sigma_values: list[float]
    repeats: int = Field(default=10, ge=1)
    seed: int = 0


class InvmapRowModel(BaseModel):
    mu: float
    sigma: float
    mean_cka: float
    std_cka: float


class InvmapResponse(BaseModel):
    rows: list[InvmapRowModel]
    provenance: dict


class ManipulateRequest(BaseModel):
    dataset: DatasetSpec
    target_cka: float = Field(ge=0.0, le=1.0)
    step_size: float = Field(gt=0)
    max_iters: int = Field(default=5000, ge=1)
    tolerance: float = Field(default=0.01, gt=0)
    constrain_to_hyperplane: bool = False
    translate_mask: list[bool] | None = None
    y0: MatrixPayload | None = None  # starting copy; defaults to the dataset itself
    seed: int = 0


class TraceRowModel(BaseModel):
    iteration: int
    cka: float
    translation_norm: float
    loss: float


class ManipulateResponse(BaseModel):
    final_cka: float
    translation_norm: float
    iterations: int
    converged: bool
    margins_preserved: bool | None
    trace: list[TraceRowModel]
    provenance: dict


class GenerateRequest(BaseModel):
    dataset: DatasetSpec


class GenerateResponse(BaseModel):
    matrix_b64: str  # RSM1 binary
    mask: list[bool] | None
    hyperplane: HyperplaneModel | None
    n: int
    p: int


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorBody(BaseModel):
    code: str
    message: str
