"""Retrying client in front of every generation backend.

A transport moves one JSON body to a backend and returns the decoded reply.
:class:`Gateway` adds the policy: retry transient failures with exponential
backoff and full jitter, never retry permanent ones, and refuse any reply
that breaks its response contract.
"""

from __future__ import annotations

import json
import logging
import random
import socket
import threading
import time
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Protocol

from ..errors import (
    BadResponse,
    RemoteError,
    Timeout,
    TransientError,
    TransientExhausted,
    TransientRemoteError,
)
from .types import RESPONSE_TYPES, StageKind, StageRequest, StageResponse

logger = logging.getLogger(__name__)

BACKOFF_FACTOR = 2.0


@dataclass(frozen=True)
class BackendEndpoint:
    kind: StageKind
    base_url: str = "mock://"
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 250.0  # milliseconds

    def __post_init__(self):
        object.__setattr__(self, "kind", StageKind(self.kind))
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backoff_base < 0:
            raise ValueError("backoff_base must be >= 0")

    @property
    def url(self) -> str:
        return self.base_url.rstrip("/") + self.kind.path


class Transport(Protocol):
    def send(self, endpoint: BackendEndpoint, payload: dict, asset_dir: Path | None = None) -> dict:
        ...


def raise_for_code(code: int, message: str):
    if code >= 500:
        raise TransientRemoteError(code, message)
    raise RemoteError(code, message)


def _is_error_reply(reply) -> bool:
    return isinstance(reply, Mapping) and set(reply) == {"code", "message"}


class HttpTransport:
    """POSTs JSON bodies to ``<base_url>/v1/<stage>``.

    Binary assets travel by URL, so ``asset_dir`` is ignored. A fresh
    connection is opened per request, which keeps the transport shareable
    across worker threads without locking.
    """

    def __init__(self, token: str | None = None):
        self.token = token

    def send(self, endpoint, payload, asset_dir=None):
        body = json.dumps(payload).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        req = urllib.request.Request(endpoint.url, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=endpoint.timeout) as resp:
                raw = resp.read()
        except urllib.error.HTTPError as exc:
            raw = exc.read()
            try:
                err = json.loads(raw)
                code, message = int(err.get("code", exc.code)), str(err.get("message", ""))
            except (ValueError, AttributeError):
                code, message = exc.code, raw.decode("utf-8", "replace")
            raise_for_code(code, message)
        except (socket.timeout, TimeoutError) as exc:
            raise Timeout(f"{endpoint.url} timed out after {endpoint.timeout}s") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                raise Timeout(f"{endpoint.url} timed out after {endpoint.timeout}s") from exc
            raise TransientRemoteError(503, f"{endpoint.url} unreachable: {exc.reason}") from exc
        try:
            return json.loads(raw)
        except ValueError as exc:
            raise BadResponse(f"{endpoint.url} returned non-JSON body") from exc


class Gateway:
    """Routes stage requests to transports and enforces the retry policy.

    ``transports`` maps each stage kind to the object that actually talks
    to the backend. Counters in :attr:`attempts` and :attr:`calls` are
    per stage kind and safe to read from any thread.
    """

    def __init__(
        self,
        endpoints: Mapping[StageKind, BackendEndpoint],
        transports: Mapping[StageKind, Transport],
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.endpoints = {StageKind(k): v for k, v in endpoints.items()}
        self.transports = {StageKind(k): v for k, v in transports.items()}
        self.sleep = sleep
        self.rng = rng or random.Random()
        self.attempts: Counter = Counter()
        self.calls: Counter = Counter()
        self._lock = threading.Lock()

    def endpoint(self, kind: StageKind) -> BackendEndpoint:
        kind = StageKind(kind)
        if kind not in self.endpoints:
            self.endpoints[kind] = BackendEndpoint(kind)
        return self.endpoints[kind]

    def backoff_delay(self, endpoint: BackendEndpoint, retry: int) -> float:
        """Full-jitter delay in seconds before retry number ``retry`` (0-based)."""
        cap = endpoint.backoff_base / 1000.0 * BACKOFF_FACTOR ** retry
        with self._lock:
            return self.rng.uniform(0.0, cap)

    def call(self, request: StageRequest, asset_dir: Path | None = None) -> StageResponse:
        kind = request.kind
        return call(self.endpoint(kind), request, self.transports[kind], asset_dir=asset_dir, gateway=self)

    def total_calls(self) -> int:
        with self._lock:
            return sum(self.calls.values())

    def _record(self, kind: StageKind, attempts: int):
        with self._lock:
            self.calls[kind] += 1
            self.attempts[kind] += attempts


def call(
    endpoint: BackendEndpoint,
    request: StageRequest,
    transport: Transport,
    asset_dir: Path | None = None,
    gateway: Gateway | None = None,
) -> StageResponse:
    """Send ``request`` through ``transport`` with retries, returning a validated response."""
    request.validate()
    payload = request.to_json()
    response_type = RESPONSE_TYPES[request.kind]
    sleep = gateway.sleep if gateway else time.sleep
    attempt = 0
    try:
        while True:
            attempt += 1
            try:
                reply = transport.send(endpoint, payload, asset_dir)
                if _is_error_reply(reply):
                    raise_for_code(int(reply["code"]), str(reply["message"]))
                break
            except TransientError as exc:
                if attempt > endpoint.max_retries:
                    raise TransientExhausted(attempt, exc) from exc
                if gateway is not None:
                    delay = gateway.backoff_delay(endpoint, attempt - 1)
                else:
                    delay = random.uniform(0.0, endpoint.backoff_base / 1000.0 * BACKOFF_FACTOR ** (attempt - 1))
                logger.debug("%s attempt %d failed (%s); retrying in %.3fs", request.kind.value, attempt, exc, delay)
                sleep(delay)
    finally:
        if gateway is not None:
            gateway._record(request.kind, attempt)

    try:
        response = response_type.from_json(reply)
    except (KeyError, TypeError, ValueError) as exc:
        raise BadResponse(f"{request.kind.value} reply does not match its schema: {exc}") from exc
    response.validate(request)
    return response
