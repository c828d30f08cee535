"""Embedding providers: a deterministic offline mock and an HTTP chat client."""

import hashlib
import math
import os

import httpx

from ..errors import ConfigurationError
from ..rng import Rng
from .tokens import TOKEN_DIM, format_token

API_KEY_ENV = "MM_LLM_API_KEY"


def prompt_hash64(prompt):
    """First 8 bytes of SHA-256(prompt, UTF-8) read as a big-endian integer."""
    return int.from_bytes(hashlib.sha256(prompt.encode("utf-8")).digest()[:8], "big")


def mock_provider(prompt):
    """Deterministic stand-in for an LLM.

    Seeds ``Rng`` with the prompt's 64-bit hash, draws 64 uniforms in
    [-1, 1], L2-normalises them and returns the bracketed list.
    """
    rng = Rng(prompt_hash64(prompt))
    vals = [rng.uniform(-1.0, 1.0) for _ in range(TOKEN_DIM)]
    norm = math.sqrt(sum(v * v for v in vals))
    return format_token([v / norm for v in vals])


class MockProvider:
    name = "mock"

    def __init__(self):
        self.calls = 0

    def __call__(self, prompt):
        self.calls += 1
        return mock_provider(prompt)


class HttpProvider:
    """OpenAI-style chat-completions endpoint.

    POSTs ``{"model", "messages": [{"role": "user", "content": prompt}]}``
    and returns ``choices[0].message.content``.
    """

    def __init__(self, url, model="gpt-4", api_key=None, timeout=30.0, client=None):
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not key:
            raise ConfigurationError(f"HTTP provider needs an API key in ${API_KEY_ENV}")
        self.url = url
        self.model = model
        self.timeout = timeout
        self.name = f"http:{model}"
        self._key = key
        self._client = client or httpx.Client(timeout=timeout)
        self.calls = 0

    def __call__(self, prompt):
        self.calls += 1
        resp = self._client.post(
            self.url,
            json={"model": self.model, "messages": [{"role": "user", "content": prompt}]},
            headers={"Authorization": f"Bearer {self._key}"},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def close(self):
        self._client.close()
