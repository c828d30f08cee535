"""Append-only on-disk token cache.

File format, one record per line (UTF-8)::

    <64 hex chars of SHA-256 key>\t<v1>,<v2>,...,<v64>\n

Values are written with ``repr`` so they read back bit-exactly.  Later
lines win when a key repeats.
"""

import threading

from ..errors import StorageError
from .tokens import FeatureToken


class TokenCache:
    def __init__(self, path=None):
        self.path = path
        self._entries = {}
        self._lock = threading.Lock()
        self._key_locks = {}
        if path is not None:
            self._load()

    def _load(self):
        try:
            with open(self.path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    try:
                        key, body = line.split("\t")
                        self._entries[key] = FeatureToken(tuple(float(v) for v in body.split(",")))
                    except ValueError as exc:
                        raise StorageError(f"{self.path}:{lineno}: corrupt cache line ({exc})") from exc
        except FileNotFoundError:
            pass
        except OSError as exc:
            raise StorageError(f"cannot read cache {self.path}: {exc}") from exc

    def get(self, key):
        with self._lock:
            return self._entries.get(key)

    def put(self, key, token):
        line = f"{key}\t{','.join(repr(v) for v in token.values)}\n"
        with self._lock:
            if self.path is not None:
                try:
                    with open(self.path, "a", encoding="utf-8") as fh:
                        fh.write(line)
                except OSError as exc:
                    raise StorageError(f"cannot append to cache {self.path}: {exc}") from exc
            self._entries[key] = token

    def key_lock(self, key):
        """Per-key lock so concurrent misses on one key reach the provider once."""
        with self._lock:
            return self._key_locks.setdefault(key, threading.Lock())

    def __len__(self):
        with self._lock:
            return len(self._entries)

    def __contains__(self, key):
        return self.get(key) is not None
