"""HTTP client for the model gateway sidecar.

The gateway exposes POST /embed and POST /rank with JSON bodies; this client
owns transport errors only. Completion text comes back untouched: parsing is
the rankers' job.
"""

from __future__ import annotations

import requests

from .errors import BackendError, GatewayUnreachable

DEFAULT_TIMEOUT = 120.0


class GatewayClient:
    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT, session=None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()

    def _post(self, path: str, payload: dict, model: str) -> dict:
        url = f"{self.base_url}{path}"
        try:
            resp = self.session.post(url, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise GatewayUnreachable(f"POST {url}: {exc}") from exc
        if resp.status_code == 429:
            raise BackendError(model, "throttled by backend", retriable=True)
        if resp.status_code >= 400:
            detail = resp.text[:500]
            retriable = resp.status_code in (502, 503, 504)
            raise BackendError(model, f"HTTP {resp.status_code}: {detail}", retriable=retriable)
        return resp.json()

    def embed(self, model: str, texts: list[str]) -> list[list[float]]:
        data = self._post("/embed", {"model": model, "texts": list(texts)}, model)
        return [[float(x) for x in vec] for vec in data["embeddings"]]

    def rank(self, model: str, prompt: str, temperature: float | None = 0.0) -> str:
        payload: dict = {"model": model, "prompt": prompt}
        if temperature is not None:
            payload["temperature"] = temperature
        data = self._post("/rank", payload, model)
        return data["raw"]

    def health(self) -> dict:
        url = f"{self.base_url}/health"
        try:
            resp = self.session.get(url, timeout=self.timeout)
        except requests.RequestException as exc:
            raise GatewayUnreachable(f"GET {url}: {exc}") from exc
        return resp.json()


class GatewayEmbeddingProvider:
    """Adapter binding a GatewayClient to one embedding model."""

    def __init__(self, client: GatewayClient, model: str):
        self.client = client
        self.model = model

    def fetch(self, texts: list[str]) -> list[list[float]]:
        return self.client.embed(self.model, texts)
