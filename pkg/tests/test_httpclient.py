from __future__ import annotations

import pytest
import requests

import serval.httpclient as hc
from serval.errors import EndpointError, ProtocolError, TransportError


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text="", json_error=False):
        self.status_code = status_code
        self._payload = payload if payload is not None else {}
        self.text = text
        self._json_error = json_error

    def json(self):
        if self._json_error:
            raise ValueError("not json")
        return self._payload


def patch_post(monkeypatch, responses):
    """Each entry is a FakeResponse or an exception to raise."""
    calls = []

    def fake_post(url, json=None, timeout=None, headers=None):
        calls.append({"url": url, "json": json, "timeout": timeout, "headers": headers})
        item = responses[min(len(calls) - 1, len(responses) - 1)]
        if isinstance(item, Exception):
            raise item
        return item

    monkeypatch.setattr(hc.requests, "post", fake_post)
    return calls


def test_success_returns_payload_and_latency(monkeypatch):
    patch_post(monkeypatch, [FakeResponse(payload={"ok": 1})])
    payload, elapsed = hc.post_json("http://x", {}, timeout_s=1, max_retries=0)
    assert payload == {"ok": 1}
    assert elapsed >= 0.0


def test_transport_error_retried_with_exponential_backoff(monkeypatch):
    sleeps = []
    monkeypatch.setattr(hc, "_sleep", sleeps.append)
    calls = patch_post(
        monkeypatch,
        [requests.ConnectionError("down"), requests.ConnectionError("down"), FakeResponse()],
    )
    hc.post_json("http://x", {}, timeout_s=1, max_retries=2)
    assert len(calls) == 3
    assert len(sleeps) == 2
    # base 1s, factor 2, positive jitter up to half the delay
    assert 1.0 <= sleeps[0] <= 1.5
    assert 2.0 <= sleeps[1] <= 3.0


def test_transport_error_exhausts_retries(monkeypatch):
    monkeypatch.setattr(hc, "_sleep", lambda s: None)
    calls = patch_post(monkeypatch, [requests.ConnectionError("down")])
    with pytest.raises(TransportError):
        hc.post_json("http://x", {}, timeout_s=1, max_retries=3)
    assert len(calls) == 4  # initial + 3 retries


@pytest.mark.parametrize("status", [429, 500, 503])
def test_retryable_statuses(monkeypatch, status):
    monkeypatch.setattr(hc, "_sleep", lambda s: None)
    calls = patch_post(monkeypatch, [FakeResponse(status_code=status), FakeResponse()])
    hc.post_json("http://x", {}, timeout_s=1, max_retries=1)
    assert len(calls) == 2


@pytest.mark.parametrize("status", [400, 401, 404, 422])
def test_non_retryable_statuses_fail_fast(monkeypatch, status):
    calls = patch_post(monkeypatch, [FakeResponse(status_code=status, text="nope")])
    with pytest.raises(EndpointError) as exc:
        hc.post_json("http://x", {}, timeout_s=1, max_retries=5)
    assert exc.value.status == status
    assert len(calls) == 1


def test_non_json_2xx_body_is_protocol_error(monkeypatch):
    patch_post(monkeypatch, [FakeResponse(json_error=True, text="<html>")])
    with pytest.raises(ProtocolError):
        hc.post_json("http://x", {}, timeout_s=1, max_retries=0)


def test_api_key_header(monkeypatch):
    calls = patch_post(monkeypatch, [FakeResponse()])
    hc.post_json("http://x", {}, timeout_s=1, max_retries=0, api_key="k")
    assert calls[0]["headers"]["Authorization"] == "Bearer k"


def test_no_auth_header_without_key(monkeypatch):
    calls = patch_post(monkeypatch, [FakeResponse()])
    hc.post_json("http://x", {}, timeout_s=1, max_retries=0)
    assert "Authorization" not in calls[0]["headers"]