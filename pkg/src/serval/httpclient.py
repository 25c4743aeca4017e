"""Minimal JSON-over-HTTP client with retry and backoff.

Retries cover transport failures and HTTP 429/5xx only; other 4xx statuses
are contract violations and fail immediately. Backoff is exponential
(base 1 s, factor 2) with uniform jitter.
"""

from __future__ import annotations

import random
import time

import requests

from .errors import EndpointError, ProtocolError, TransportError

_sleep = time.sleep
_rng = random.Random()

BACKOFF_BASE_S = 1.0
BACKOFF_FACTOR = 2.0


def post_json(
    url: str,
    payload: dict,
    *,
    timeout_s: float,
    max_retries: int,
    api_key: str | None = None,
    backoff_base_s: float = BACKOFF_BASE_S,
) -> tuple[dict, float]:
    """POST ``payload`` as JSON; return (parsed response, wall time of the
    successful request in seconds).

    The returned latency covers only the attempt that succeeded, never the
    failed attempts or the backoff sleeps.
    """
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    attempt = 0
    while True:
        start = time.perf_counter()
        error: Exception
        retryable = True
        try:
            resp = requests.post(url, json=payload, timeout=timeout_s, headers=headers)
        except requests.RequestException as exc:
            error = TransportError(f"POST {url} failed: {exc}")
        else:
            elapsed = time.perf_counter() - start
            if 200 <= resp.status_code < 300:
                try:
                    return resp.json(), elapsed
                except ValueError as exc:
                    raise ProtocolError(f"{url} returned a non-JSON body: {exc}") from exc
            error = EndpointError(resp.status_code, resp.text, url)
            retryable = resp.status_code == 429 or resp.status_code >= 500
        if not retryable or attempt >= max_retries:
            raise error
        delay = backoff_base_s * BACKOFF_FACTOR**attempt
        _sleep(delay + _rng.uniform(0.0, delay / 2.0))
        attempt += 1
