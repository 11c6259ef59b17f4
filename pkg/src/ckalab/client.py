"""Thin HTTP client used by the CLI.

Talks to a remote server when given a base URL, otherwise mounts the
FastAPI app in-process through an ASGI transport, so the CLI works without
a running server while exercising the exact same request path.
"""

from __future__ import annotations

import base64
import warnings

import httpx

from .service import schemas


class ServiceError(Exception):
    """Error body returned by the service."""

    def __init__(self, code: str, message: str, payload: dict | None = None):
        super().__init__(message)
        self.code = code
        self.payload = payload or {}


class ServiceClient:
    def __init__(self, base_url: str | None = None, timeout: float = 600.0):
        if base_url:
            self._client = httpx.Client(base_url=base_url, timeout=timeout)
        else:
            # Synchronous in-process bridge to the ASGI app.
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from starlette.testclient import TestClient

                from .service import app

                self._client = TestClient(app, raise_server_exceptions=False)

    def close(self):
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _post(self, path: str, body) -> dict:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            response = self._client.post(
                path, json=body.model_dump(exclude_none=True)
            )
        if response.status_code >= 400:
            detail = {}
            try:
                detail = response.json().get("detail", {})
            except ValueError:
                pass
            if isinstance(detail, dict) and "code" in detail:
                raise ServiceError(detail["code"], detail.get("message", ""), detail)
            raise ServiceError("error", response.text)
        return response.json()

    def health(self) -> schemas.HealthResponse:
        response = self._client.get("/health")
        response.raise_for_status()
        return schemas.HealthResponse(**response.json())

    def cka(self, body: schemas.CkaRequest) -> schemas.CkaResponse:
        return schemas.CkaResponse(**self._post("/cka", body))

    def sweep(self, body: schemas.SweepRequest) -> schemas.SweepResponse:
        return schemas.SweepResponse(**self._post("/sweep", body))

    def outlier(self, body: schemas.OutlierRequest) -> schemas.SweepResponse:
        return schemas.SweepResponse(**self._post("/outlier", body))

    def invmap(self, body: schemas.InvmapRequest) -> schemas.InvmapResponse:
        return schemas.InvmapResponse(**self._post("/invmap", body))

    def manipulate(self, body: schemas.ManipulateRequest) -> schemas.ManipulateResponse:
        return schemas.ManipulateResponse(**self._post("/manipulate", body))

    def generate(self, body: schemas.GenerateRequest) -> schemas.GenerateResponse:
        return schemas.GenerateResponse(**self._post("/generate", body))


def matrix_payload_from_bytes(raw: bytes) -> schemas.MatrixPayload:
    return schemas.MatrixPayload(content_b64=base64.b64encode(raw).decode("ascii"))
