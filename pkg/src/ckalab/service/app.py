"""FastAPI application wrapping the library.

Every toolkit error is returned as HTTP 422 with a machine-readable code
(``parse``, ``shape``, ``stalled``, ...) that thin clients map onto their
own contracts. The stalled case still ships the optimizer trace so callers
can persist it.
"""

from __future__ import annotations

import base64

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..core import RepresentationMatrix, SeededRng, center_columns
from ..errors import CkalabError, InvalidSubset, Stalled
from ..experiments import run_invmap, run_manipulate, run_outlier, run_sweep
from ..manipulate import ManipulationConfig
from ..matrixio import matrix_to_binary
from ..similarity import KernelSpec, cka
from ..synthetic import TwoCubeConfig, gaussian_cloud, two_cubes
from ..transforms import Hyperplane
from . import schemas

ERROR_STATUS = 422


def _kernel_spec(param: schemas.KernelParam) -> KernelSpec:
    return KernelSpec(param.kind, param.median_fraction)


def _load_dataset(spec: schemas.DatasetSpec):
    """Returns (matrix, mask, hyperplane, provenance dict).

    An explicit request mask overrides the generated dataset's own (the
    two-cube membership mask); a request hyperplane likewise.
    """
    override_mask = (
        np.asarray(spec.mask, dtype=bool) if spec.mask is not None else None
    )
    override_plane = None
    if spec.hyperplane is not None:
        override_plane = Hyperplane(
            np.asarray(spec.hyperplane.normal, dtype=np.float64),
            spec.hyperplane.offset,
        )
    if spec.two_cubes is not None:
        cfg = TwoCubeConfig(
            points_per_cube=spec.two_cubes.points_per_cube,
            dims=spec.two_cubes.dims,
            offset=spec.two_cubes.offset,
            seed=spec.two_cubes.seed,
        )
        ds = two_cubes(cfg)
        provenance = {"generated": {"two_cubes": spec.two_cubes.model_dump()}}
        mask = override_mask if override_mask is not None else ds.subset_mask
        plane = override_plane if override_plane is not None else ds.hyperplane
        return ds.matrix, mask, plane, provenance
    if spec.gaussian is not None:
        g = spec.gaussian
        x = gaussian_cloud(g.n, g.p, g.seed)
        provenance = {"generated": {"gaussian": g.model_dump()}}
        return x, override_mask, override_plane, provenance
    x = center_columns(RepresentationMatrix(spec.matrix.to_array()))
    provenance = {"uploaded": {"sha256": spec.matrix.checksum()}}
    return x, override_mask, override_plane, provenance


def _resolve_distances(body, x) -> np.ndarray:
    if body.distances is not None:
        return np.asarray(body.distances, dtype=np.float64)
    grid = body.grid or schemas.GridParams()
    rms = x.rms_row_norm()
    return np.geomspace(grid.lo, grid.hi, grid.points) * rms


def _require_mask(mask, purpose: str) -> np.ndarray:
    if mask is None:
        raise InvalidSubset(f"{purpose} needs a subset mask")
    return mask


def create_app() -> FastAPI:
    app = FastAPI(title="ckalab", version=__version__)

    @app.exception_handler(CkalabError)
    async def _toolkit_error(request: Request, exc: CkalabError):
        body = {"code": exc.code, "message": str(exc)}
        if isinstance(exc, Stalled):
            body["trace"] = [
                schemas.TraceRowModel(
                    iteration=r.iteration,
                    cka=r.cka,
                    translation_norm=r.translation_norm,
                    loss=r.loss,
                ).model_dump()
                for r in exc.trace
            ]
        return JSONResponse(status_code=ERROR_STATUS, content={"detail": body})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/cka", response_model=schemas.CkaResponse)
    def compute_cka(body: schemas.CkaRequest):
        x = RepresentationMatrix(body.x.to_array())
        y = RepresentationMatrix(body.y.to_array())
        result = cka(center_columns(x), center_columns(y), _kernel_spec(body.kernel))
        return schemas.CkaResponse(
            value=result.value,
            estimator=result.estimator,
            kernel=schemas.KernelParam(
                kind=result.kernel.kind, median_fraction=result.kernel.median_fraction
            ),
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(body: schemas.SweepRequest):
        x, mask, plane, provenance = _load_dataset(body.dataset)
        mask = _require_mask(mask, "a translation sweep")
        run = run_sweep(
            x,
            mask,
            [_kernel_spec(k) for k in body.kernels],
            SeededRng(body.seed),
            distances=_resolve_distances(body, x),
            direction_mode=body.direction_mode,
            hyperplane=plane,
            bandwidth_mode=body.bandwidth_mode,
        )
        return schemas.SweepResponse(
            rows=[schemas.SweepRowModel(**vars(r)) for r in run.rows],
            kernel_labels=run.kernel_labels,
            predicted_limit=run.predicted_limit,
            rms_row_norm=x.rms_row_norm(),
            provenance=provenance,
        )

    @app.post("/outlier", response_model=schemas.SweepResponse)
    def outlier(body: schemas.OutlierRequest):
        x, _, _, provenance = _load_dataset(body.dataset)
        run = run_outlier(
            x,
            body.index,
            [_kernel_spec(k) for k in body.kernels],
            SeededRng(body.seed),
            distances=_resolve_distances(body, x),
            bandwidth_mode=body.bandwidth_mode,
        )
        return schemas.SweepResponse(
            rows=[schemas.SweepRowModel(**vars(r)) for r in run.rows],
            kernel_labels=run.kernel_labels,
            predicted_limit=run.predicted_limit,
            rms_row_norm=x.rms_row_norm(),
            provenance=provenance,
        )

    @app.post("/invmap", response_model=schemas.InvmapResponse)
    def invmap(body: schemas.InvmapRequest):
        x, _, _, provenance = _load_dataset(body.dataset)
        rows = run_invmap(
            x, body.mu_values, body.sigma_values, body.repeats, SeededRng(body.seed)
        )
        return schemas.InvmapResponse(
            rows=[schemas.InvmapRowModel(**vars(r)) for r in rows],
            provenance=provenance,
        )

    @app.post("/manipulate", response_model=schemas.ManipulateResponse)
    def manipulate(body: schemas.ManipulateRequest):
        x, dataset_mask, plane, provenance = _load_dataset(body.dataset)
        if body.translate_mask is not None:
            translate_mask = np.asarray(body.translate_mask, dtype=bool)
        else:
            # By default translate the complement of the dataset's fixed set.
            translate_mask = ~_require_mask(dataset_mask, "manipulation")
        constraint = None
        if body.constrain_to_hyperplane:
            if plane is None:
                raise InvalidSubset("no hyperplane available for the constraint")
            constraint = plane
        cfg = ManipulationConfig(
            target_cka=body.target_cka,
            step_size=body.step_size,
            max_iters=body.max_iters,
            tolerance=body.tolerance,
            constraint=constraint,
            seed=body.seed,
        )
        y0 = x
        if body.y0 is not None:
            y0 = center_columns(RepresentationMatrix(body.y0.to_array()))
        run = run_manipulate(x, y0, cfg, translate_mask)
        return schemas.ManipulateResponse(
            final_cka=run.final_cka,
            translation_norm=run.translation_norm,
            iterations=run.iterations,
            converged=run.converged,
            margins_preserved=run.margins_preserved,
            trace=[schemas.TraceRowModel(**vars(r)) for r in run.trace],
            provenance=provenance,
        )

    @app.post("/generate", response_model=schemas.GenerateResponse)
    def generate(body: schemas.GenerateRequest):
        x, mask, plane, _ = _load_dataset(body.dataset)
        return schemas.GenerateResponse(
            matrix_b64=base64.b64encode(matrix_to_binary(x.data)).decode("ascii"),
            mask=None if mask is None else [bool(v) for v in mask],
            hyperplane=None
            if plane is None
            else schemas.HyperplaneModel(
                normal=[float(v) for v in plane.normal], offset=plane.offset
            ),
            n=x.n,
            p=x.p,
        )

    return app


app = create_app()
