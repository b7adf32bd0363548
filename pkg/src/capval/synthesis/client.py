"""LLM endpoint client: chat-completions wire protocol plus retry policy.

Any object exposing complete(prompt) -> str works as an endpoint (mocks
included); HttpChatEndpoint implements the JSON POST wire contract.
Generation temperature is fixed at 0.
"""

import logging
import os
import time
from dataclasses import dataclass

import requests

from capval.errors import EmptyCompletionError, EndpointError, TransientEndpointError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EndpointConfig:
    """Connection settings for one chat-completions endpoint."""

    base_url: str
    model: str
    auth_env: str = ""
    max_attempts: int = 3
    timeout: float = 120.0


class HttpChatEndpoint:
    """Chat-completions-style JSON POST client (one attempt per call)."""

    def __init__(self, config: EndpointConfig):
        self.config = config
        self.model = config.model
        self.max_attempts = config.max_attempts

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_env, "") if self.config.auth_env else ""
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        try:
            resp = requests.post(self.config.base_url, json=payload, headers=headers,
                                 timeout=self.config.timeout)
        except requests.RequestException as exc:
            raise TransientEndpointError(f"request failed: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientEndpointError(f"endpoint returned {resp.status_code}")
        if resp.status_code != 200:
            raise EndpointError(f"endpoint returned {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as exc:
            raise EndpointError(f"malformed completion response: {exc}") from exc


def retry_transient(call, max_attempts: int = 3, backoff: float = 0.5, sleep=None):
    """Run call() with exponential backoff on transient failures."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    sleep = sleep or time.sleep
    last: Exception | None = None
    for attempt in range(1, max_attempts + 1):
        try:
            return call()
        except TransientEndpointError as exc:
            last = exc
            if attempt < max_attempts:
                delay = backoff * (2 ** (attempt - 1))
                logger.debug("transient endpoint failure (attempt %d/%d): %s; retrying in %.2fs",
                             attempt, max_attempts, exc, delay)
                sleep(delay)
    raise EndpointError(f"endpoint failed after {max_attempts} attempts: {last}") from last


def llm_complete(endpoint, prompt: str, max_attempts: int | None = None,
                 backoff: float = 0.5, sleep=None) -> str:
    """Complete a non-empty prompt, retrying transient endpoint failures.

    max_attempts defaults to the endpoint's own setting. Empty completions
    are an error: every pipeline stage needs parseable output.
    """
    if not prompt:
        raise ValueError("prompt must be non-empty")
    attempts = max_attempts if max_attempts is not None else getattr(endpoint, "max_attempts", 3)
    text = retry_transient(lambda: endpoint.complete(prompt),
                           max_attempts=attempts, backoff=backoff, sleep=sleep)
    if not text or not text.strip():
        raise EmptyCompletionError("endpoint returned an empty completion")
    return text
