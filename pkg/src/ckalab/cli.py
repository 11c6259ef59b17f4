"""Experiment-harness CLI.

A thin client over the HTTP API: by default requests are served by the
FastAPI app mounted in-process, ``--server`` points them at a running
instance instead. File I/O (matrices, result CSVs, run manifests) happens
client-side; all numerics happen behind the service endpoints.

Exit codes: 0 success, 2 parse failure, 3 shape mismatch, 4 optimizer
stalled, 1 anything else.
"""

from __future__ import annotations

import base64
import hashlib
import json
import sys
import time
from pathlib import Path

import click

from . import __version__
from .client import ServiceClient, ServiceError, matrix_payload_from_bytes
from .matrixio import mask_to_csv, matrix_from_binary, matrix_to_csv
from .service import schemas

EXIT_CODES = {"parse": 2, "shape": 3, "stalled": 4}

# Reduced-scale two-cube default: dimension kept at the full-scale value
# (the translation limit scales like 1 / sqrt(dims), so shrinking dims
# would change the qualitative picture) while the point count is cut 20x.
REDUCED_POINTS, REDUCED_DIMS = 500, 1000
FULL_POINTS, FULL_DIMS = 10000, 1000


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _exit_for(error: ServiceError) -> int:
    return EXIT_CODES.get(error.code, 1)


def _read_payload(path: str) -> tuple[schemas.MatrixPayload, str]:
    """Read a matrix file into a wire payload plus its sha256 checksum."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        click.echo(f"error: cannot read {path}: {exc}", err=True)
        sys.exit(2)
    return matrix_payload_from_bytes(raw), hashlib.sha256(raw).hexdigest()


def _write_manifest(out: str, seed, provenance: dict, wall_time: float, extra=None):
    manifest = {
        "command_line": " ".join(sys.argv),
        "seed": seed,
        "dataset": provenance,
        "tool_version": __version__,
        "wall_time_s": wall_time,
    }
    if extra:
        manifest.update(extra)
    path = Path(str(out) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_sweep_csv(out: str, response: schemas.SweepResponse):
    lines = []
    header = ["distance"]
    header += [f"cka_{label}" for label in response.kernel_labels]
    header += ["predicted_limit", "margin_ok"]
    lines.append(",".join(header))
    for row in response.rows:
        cells = [_fmt(row.distance)]
        cells += [_fmt(row.cka_values[label]) for label in response.kernel_labels]
        cells += [_fmt(row.predicted_limit), _fmt(row.margin_ok)]
        lines.append(",".join(cells))
    Path(out).write_text("\n".join(lines) + "\n")


def _dataset_options(fn):
    fn = click.option("--input", "input_path", type=str, default=None,
                      help="Matrix file (CSV or RSM1 binary) instead of synthetic data.")(fn)
    fn = click.option("--mask-file", type=str, default=None,
                      help="Mask sidecar (single CSV row of 0/1, 1 = kept fixed).")(fn)
    fn = click.option("--dataset", type=click.Choice(["two-cubes", "gaussian"]),
                      default="two-cubes", show_default=True)(fn)
    fn = click.option("--points-per-cube", type=int, default=None,
                      help="Two-cube size (default: reduced scale, or --full).")(fn)
    fn = click.option("--dims", type=int, default=None,
                      help="Feature dimension for synthetic data.")(fn)
    fn = click.option("--offset", type=float, default=1.1, show_default=True,
                      help="Center displacement of the second cube.")(fn)
    fn = click.option("--n", "gaussian_n", type=int, default=1000, show_default=True,
                      help="Rows for the gaussian dataset.")(fn)
    fn = click.option("--full", is_flag=True,
                      help="Paper-scale two-cube dataset (10000/cube, p=1000).")(fn)
    return fn


def _grid_options(fn):
    fn = click.option("--grid-points", type=int, default=20, show_default=True)(fn)
    fn = click.option("--grid-lo", type=float, default=0.1, show_default=True,
                      help="Smallest distance in units of the data RMS row norm.")(fn)
    fn = click.option("--grid-hi", type=float, default=1e4, show_default=True,
                      help="Largest distance in units of the data RMS row norm.")(fn)
    fn = click.option("--distances", type=str, default=None,
                      help="Explicit comma-separated absolute distances (overrides the grid).")(fn)
    return fn


def _build_dataset(
    dataset, input_path, mask_file, points_per_cube, dims, offset, gaussian_n,
    full, seed,
) -> tuple[schemas.DatasetSpec, dict]:
    """Build the request-side dataset spec and the manifest provenance."""
    if input_path is not None:
        payload, checksum = _read_payload(input_path)
        mask = None
        if mask_file is not None:
            try:
                from .matrixio import read_mask

                mask = [bool(v) for v in read_mask(mask_file)]
            except Exception as exc:
                click.echo(f"error: cannot read mask {mask_file}: {exc}", err=True)
                sys.exit(2)
        spec = schemas.DatasetSpec(matrix=payload, mask=mask)
        return spec, {"input_file": input_path, "sha256": checksum}
    if dataset == "gaussian":
        p = dims if dims is not None else (FULL_DIMS if full else REDUCED_DIMS)
        params = schemas.GaussianParams(n=gaussian_n, p=p, seed=seed)
        return (
            schemas.DatasetSpec(gaussian=params),
            {"generated": {"gaussian": params.model_dump()}},
        )
    points = points_per_cube if points_per_cube is not None else (
        FULL_POINTS if full else REDUCED_POINTS
    )
    p = dims if dims is not None else (FULL_DIMS if full else REDUCED_DIMS)
    params = schemas.TwoCubesParams(
        points_per_cube=points, dims=p, offset=offset, seed=seed
    )
    return (
        schemas.DatasetSpec(two_cubes=params),
        {"generated": {"two_cubes": params.model_dump()}},
    )


def _kernel_params(kernel_flags) -> list[schemas.KernelParam]:
    from .similarity import KernelSpec

    specs = [KernelSpec.parse(flag) for flag in (kernel_flags or ["linear"])]
    return [
        schemas.KernelParam(kind=s.kind, median_fraction=s.median_fraction)
        for s in specs
    ]


def _parse_float_list(distances: str | None):
    if distances is None:
        return None
    try:
        return [float(tok) for tok in distances.split(",") if tok.strip()]
    except ValueError:
        click.echo(f"error: bad --distances value {distances!r}", err=True)
        sys.exit(2)


@click.group()
@click.version_option(version=__version__, prog_name="ckalab")
@click.option("--server", type=str, default=None, envvar=None,
              help="Base URL of a running service; defaults to in-process execution.")
@click.pass_context
def main(ctx, server):
    """Representation-similarity experiments over the ckalab service."""
    ctx.obj = {"server": server}


def _client(ctx) -> ServiceClient:
    return ServiceClient(base_url=ctx.obj.get("server"))


@main.command("cka")
@click.argument("file_x", type=str)
@click.argument("file_y", type=str)
@click.option("--kernel", "kernel_flags", multiple=True,
              help="linear or rbf:<fraction>; defaults to linear.")
@click.option("--out", type=str, default=None,
              help="Optional output base; writes <out> CSV and <out>.manifest.json.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def cmd_cka(ctx, file_x, file_y, kernel_flags, out, seed):
    """Print the CKA value between two matrix files (12 significant digits)."""
    payload_x, sha_x = _read_payload(file_x)
    payload_y, sha_y = _read_payload(file_y)
    kernels = _kernel_params(kernel_flags)
    start = time.monotonic()
    try:
        with _client(ctx) as client:
            response = client.cka(
                schemas.CkaRequest(x=payload_x, y=payload_y, kernel=kernels[0])
            )
    except ServiceError as exc:
        click.echo(f"error ({exc.code}): {exc}", err=True)
        sys.exit(_exit_for(exc))
    click.echo(f"{response.value:.12f}")
    if out:
        Path(out).write_text(f"cka\n{_fmt(response.value)}\n")
        _write_manifest(
            out, seed,
            {"inputs": [{"file": file_x, "sha256": sha_x},
                        {"file": file_y, "sha256": sha_y}]},
            time.monotonic() - start,
        )


@main.command("sweep")
@_dataset_options
@_grid_options
@click.option("--kernel", "kernel_flags", multiple=True,
              help="Repeatable: linear or rbf:<fraction>. Default linear.")
@click.option("--direction", type=click.Choice(["random", "margin-preserving"]),
              default="random", show_default=True)
@click.option("--bandwidth-mode", type=click.Choice(["anchored", "per-matrix"]),
              default="anchored", show_default=True,
              help="RBF bandwidths fixed from the reference matrix, or recomputed per matrix.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, required=True)
@click.pass_context
def cmd_sweep(ctx, input_path, mask_file, dataset, points_per_cube, dims, offset,
              gaussian_n, full, grid_points, grid_lo, grid_hi, distances,
              kernel_flags, direction, bandwidth_mode, seed, out):
    """Translation-distance sweep; writes CSV rows plus a run manifest."""
    spec, provenance = _build_dataset(
        dataset, input_path, mask_file, points_per_cube, dims, offset,
        gaussian_n, full, seed,
    )
    request = schemas.SweepRequest(
        dataset=spec,
        kernels=_kernel_params(kernel_flags),
        direction_mode=direction,
        distances=_parse_float_list(distances),
        grid=schemas.GridParams(points=grid_points, lo=grid_lo, hi=grid_hi),
        seed=seed,
        bandwidth_mode=bandwidth_mode,
    )
    start = time.monotonic()
    try:
        with _client(ctx) as client:
            response = client.sweep(request)
    except ServiceError as exc:
        click.echo(f"error ({exc.code}): {exc}", err=True)
        sys.exit(_exit_for(exc))
    _write_sweep_csv(out, response)
    _write_manifest(
        out, seed, provenance, time.monotonic() - start,
        extra={
            "distance_grid": [row.distance for row in response.rows],
            "kernels": response.kernel_labels,
            "direction_mode": direction,
            "bandwidth_mode": bandwidth_mode,
            "predicted_limit": response.predicted_limit,
            "rms_row_norm": response.rms_row_norm,
        },
    )
    click.echo(f"wrote {len(response.rows)} rows to {out}")


@main.command("outlier")
@_dataset_options
@_grid_options
@click.option("--index", type=int, default=0, show_default=True,
              help="Row that gets translated.")
@click.option("--kernel", "kernel_flags", multiple=True)
@click.option("--bandwidth-mode", type=click.Choice(["anchored", "per-matrix"]),
              default="anchored", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, required=True)
@click.pass_context
def cmd_outlier(ctx, input_path, mask_file, dataset, points_per_cube, dims, offset,
                gaussian_n, full, grid_points, grid_lo, grid_hi, distances, index,
                kernel_flags, bandwidth_mode, seed, out):
    """Single-point translation sweep (the outlier special case)."""
    spec, provenance = _build_dataset(
        dataset, input_path, mask_file, points_per_cube, dims, offset,
        gaussian_n, full, seed,
    )
    request = schemas.OutlierRequest(
        dataset=spec,
        index=index,
        kernels=_kernel_params(kernel_flags),
        distances=_parse_float_list(distances),
        grid=schemas.GridParams(points=grid_points, lo=grid_lo, hi=grid_hi),
        seed=seed,
        bandwidth_mode=bandwidth_mode,
    )
    start = time.monotonic()
    try:
        with _client(ctx) as client:
            response = client.outlier(request)
    except ServiceError as exc:
        click.echo(f"error ({exc.code}): {exc}", err=True)
        sys.exit(_exit_for(exc))
    _write_sweep_csv(out, response)
    _write_manifest(
        out, seed, provenance, time.monotonic() - start,
        extra={"index": index, "predicted_limit": response.predicted_limit},
    )
    click.echo(f"wrote {len(response.rows)} rows to {out}")


@main.command("invmap")
@_dataset_options
@click.option("--mu", "mu_values", type=str, default="0,0.5,1",
              show_default=True, help="Comma-separated means of the map entries.")
@click.option("--sigma", "sigma_values", type=str, default="0.5,1",
              show_default=True, help="Comma-separated stddevs of the map entries.")
@click.option("--repeats", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, required=True)
@click.pass_context
def cmd_invmap(ctx, input_path, mask_file, dataset, points_per_cube, dims, offset,
               gaussian_n, full, mu_values, sigma_values, repeats, seed, out):
    """CKA against random invertible linear maps over a (mu, sigma) grid."""
    spec, provenance = _build_dataset(
        dataset, input_path, mask_file, points_per_cube, dims, offset,
        gaussian_n, full, seed,
    )
    request = schemas.InvmapRequest(
        dataset=spec,
        mu_values=_parse_float_list(mu_values) or [],
        sigma_values=_parse_float_list(sigma_values) or [],
        repeats=repeats,
        seed=seed,
    )
    start = time.monotonic()
    try:
        with _client(ctx) as client:
            response = client.invmap(request)
    except ServiceError as exc:
        click.echo(f"error ({exc.code}): {exc}", err=True)
        sys.exit(_exit_for(exc))
    lines = ["mu,sigma,mean_cka,std_cka"]
    for row in response.rows:
        lines.append(",".join(_fmt(v) for v in (row.mu, row.sigma, row.mean_cka, row.std_cka)))
    Path(out).write_text("\n".join(lines) + "\n")
    _write_manifest(out, seed, provenance, time.monotonic() - start,
                    extra={"repeats": repeats})
    click.echo(f"wrote {len(response.rows)} rows to {out}")


@main.command("manipulate")
@_dataset_options
@click.option("--y0", "y0_path", type=str, default=None,
              help="Starting copy as a matrix file; defaults to the dataset itself.")
@click.option("--target", type=float, required=True, help="Target CKA value in [0, 1].")
@click.option("--step-size", type=float, default=100.0, show_default=True)
@click.option("--max-iters", type=int, default=5000, show_default=True)
@click.option("--tolerance", type=float, default=0.01, show_default=True)
@click.option("--constrain/--no-constrain", "constrain", default=True,
              show_default=True,
              help="Restrict the translation to the hyperplane normal's orthogonal complement.")
@click.option("--translate-count", type=int, default=0, show_default=True,
              help="Translate only the last K rows (0 = the dataset's whole movable set).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, required=True, help="Trace CSV base path.")
@click.pass_context
def cmd_manipulate(ctx, input_path, mask_file, dataset, points_per_cube, dims, offset,
                   gaussian_n, full, y0_path, target, step_size, max_iters, tolerance,
                   constrain, translate_count, seed, out):
    """Drive CKA toward a target via a masked translation; writes the trace."""
    spec, provenance = _build_dataset(
        dataset, input_path, mask_file, points_per_cube, dims, offset,
        gaussian_n, full, seed,
    )
    y0_payload = None
    if y0_path is not None:
        y0_payload, _ = _read_payload(y0_path)
    translate_mask = None
    if translate_count > 0:
        if input_path is not None:
            raise click.UsageError(
                "--translate-count only applies to synthetic datasets; "
                "use --mask-file for file inputs"
            )
        if dataset == "two-cubes":
            size = 2 * (points_per_cube or (FULL_POINTS if full else REDUCED_POINTS))
        else:
            size = gaussian_n
        if translate_count >= size:
            raise click.UsageError("--translate-count must leave some rows fixed")
        translate_mask = [False] * (size - translate_count) + [True] * translate_count
    request = schemas.ManipulateRequest(
        dataset=spec,
        target_cka=target,
        step_size=step_size,
        max_iters=max_iters,
        tolerance=tolerance,
        constrain_to_hyperplane=constrain,
        translate_mask=translate_mask,
        y0=y0_payload,
        seed=seed,
    )
    start = time.monotonic()

    def write_trace(trace_rows):
        lines = ["iter,cka,translation_norm,loss"]
        for row in trace_rows:
            lines.append(",".join(_fmt(v) for v in (
                row["iteration"], row["cka"], row["translation_norm"], row["loss"],
            )))
        Path(out).write_text("\n".join(lines) + "\n")

    try:
        with _client(ctx) as client:
            response = client.manipulate(request)
    except ServiceError as exc:
        if exc.code == "stalled":
            write_trace(exc.payload.get("trace", []))
            _write_manifest(out, seed, provenance, time.monotonic() - start,
                            extra={"stalled": True, "target": target})
        click.echo(f"error ({exc.code}): {exc}", err=True)
        sys.exit(_exit_for(exc))
    write_trace([row.model_dump() for row in response.trace])
    _write_manifest(
        out, seed, provenance, time.monotonic() - start,
        extra={"target": target, "converged": response.converged},
    )
    click.echo(f"final_cka={response.final_cka:.6f}")
    click.echo(f"translation_norm={response.translation_norm:.6f}")
    click.echo(f"iterations={response.iterations}")
    if response.margins_preserved is not None:
        click.echo(
            "margins_preserved="
            + ("true" if response.margins_preserved else "false")
        )


@main.command("gen")
@_dataset_options
@click.option("--format", "fmt", type=click.Choice(["csv", "binary"]),
              default="csv", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, required=True)
@click.pass_context
def cmd_gen(ctx, input_path, mask_file, dataset, points_per_cube, dims, offset,
            gaussian_n, full, fmt, seed, out):
    """Export a synthetic dataset (matrix plus 0/1 mask sidecar)."""
    spec, provenance = _build_dataset(
        dataset, input_path, mask_file, points_per_cube, dims, offset,
        gaussian_n, full, seed,
    )
    start = time.monotonic()
    try:
        with _client(ctx) as client:
            response = client.generate(schemas.GenerateRequest(dataset=spec))
    except ServiceError as exc:
        click.echo(f"error ({exc.code}): {exc}", err=True)
        sys.exit(_exit_for(exc))
    raw = base64.b64decode(response.matrix_b64)
    matrix = matrix_from_binary(raw)
    if fmt == "binary":
        Path(out).write_bytes(raw)
    else:
        Path(out).write_text(matrix_to_csv(matrix))
    mask_path = None
    if response.mask is not None:
        mask_path = str(Path(out).with_suffix("")) + ".mask.csv"
        Path(mask_path).write_text(mask_to_csv(response.mask))
    extra = {"n": response.n, "p": response.p, "format": fmt}
    if mask_path:
        extra["mask_file"] = mask_path
    if response.hyperplane is not None:
        extra["hyperplane"] = response.hyperplane.model_dump()
    _write_manifest(out, seed, provenance, time.monotonic() - start, extra=extra)
    click.echo(f"wrote {response.n}x{response.p} matrix to {out}")


@main.command("serve")
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def cmd_serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
