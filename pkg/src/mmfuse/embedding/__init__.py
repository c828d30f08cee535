"""LLM-based embedding of non-image subject data into 64-value tokens."""

import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor

from ..errors import MMFuseError, ProviderError
from .baseline import baseline_embed_sn
from .cache import TokenCache
from .prompt import PromptSpec, build_prompt, count_examples
from .providers import HttpProvider, MockProvider, mock_provider
from .records import SubjectRecord
from .tokens import TOKEN_DIM, FeatureToken, format_token, parse_token

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
BACKOFF = (0.5, 1.0, 2.0)

__all__ = [
    "FeatureToken",
    "HttpProvider",
    "MockProvider",
    "PromptSpec",
    "SubjectRecord",
    "TOKEN_DIM",
    "TokenCache",
    "baseline_embed_sn",
    "build_prompt",
    "cache_key",
    "count_examples",
    "embed",
    "embed_many",
    "format_token",
    "mock_provider",
    "parse_token",
]


def cache_key(prompt, provider_name):
    return hashlib.sha256(f"{provider_name}\x00{prompt}".encode("utf-8")).hexdigest()


def fetch_token(prompt, provider, sleep=time.sleep, attempts=MAX_ATTEMPTS):
    """Call ``provider`` until it yields a valid token, backing off between tries."""
    last = None
    for attempt in range(attempts):
        try:
            return parse_token(provider(prompt)).check_norm()
        except Exception as exc:  # provider transport errors and malformed replies alike
            last = exc
            log.warning("provider %s attempt %d failed: %s", provider.name, attempt + 1, exc)
            if attempt + 1 < attempts:
                sleep(BACKOFF[min(attempt, len(BACKOFF) - 1)])
    raise ProviderError(f"{provider.name}: {attempts} attempts failed, last error: {last}", cause=last)


def embed(record, image_summary, spec, provider, cache, shot_bank=(), sleep=time.sleep):
    """Token for ``record``, served from ``cache`` when the prompt was seen before."""
    prompt = build_prompt(record, image_summary, spec, shot_bank)
    key = cache_key(prompt, provider.name)
    with cache.key_lock(key):
        hit = cache.get(key)
        if hit is not None:
            return hit
        token = fetch_token(prompt, provider, sleep=sleep)
        cache.put(key, token)
        return token


def embed_many(items, spec, provider, cache, shot_bank=(), max_in_flight=4, sleep=time.sleep):
    """Embed ``(record, image_summary)`` pairs with bounded concurrency.

    Returns ``(tokens, failures)``: tokens keyed by record id, failures a
    dict of record id -> exception.  Successful tokens are already cached,
    so a re-run after partial failure only retries the failed subjects.
    """

    def one(item):
        record, summary = item
        try:
            return record.id, embed(record, summary, spec, provider, cache, shot_bank, sleep), None
        except MMFuseError as exc:
            return record.id, None, exc

    tokens, failures = {}, {}
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        for rid, token, err in pool.map(one, items):
            if err is None:
                tokens[rid] = token
            else:
                failures[rid] = err
    return tokens, failures
