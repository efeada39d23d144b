"""Credential verification and opaque session tokens.

Credentials live in a UTF-8 text file, one ``user:salt_hex:digest_hex``
line per user, where digest = sha256(salt_bytes + secret_utf8).  A lookup
for an unknown user still computes a digest against a dummy entry so the
timing of a rejection does not reveal which field was wrong.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
import threading
import time
from pathlib import Path

from ..errors import AuthError

_DUMMY_SALT = bytes(16)
_DUMMY_HASH = hashlib.sha256(_DUMMY_SALT + b"\x00nope").hexdigest()


def _digest(salt: bytes, secret: str) -> str:
    return hashlib.sha256(salt + secret.encode("utf-8")).hexdigest()


def make_credential_line(user: str, secret: str) -> str:
    if ":" in user:
        raise ValueError("user name must not contain ':'")
    salt = secrets.token_bytes(16)
    return f"{user}:{salt.hex()}:{_digest(salt, secret)}"


class CredentialStore:
    def __init__(self, entries: dict[str, tuple[bytes, str]]):
        self._entries = entries

    @classmethod
    def load(cls, path) -> "CredentialStore":
        entries: dict[str, tuple[bytes, str]] = {}
        for lineno, raw in enumerate(Path(path).read_text("utf-8").splitlines(),
                                     start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(":")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected user:salt:hash")
            entries[parts[0]] = (bytes.fromhex(parts[1]), parts[2])
        return cls(entries)

    def verify(self, user: str, secret: str) -> bool:
        salt, expect = self._entries.get(user, (_DUMMY_SALT, _DUMMY_HASH))
        ok = hmac.compare_digest(_digest(salt, secret), expect)
        return ok and user in self._entries


class TokenRegistry:
    """Opaque bearer tokens with a fixed time-to-live."""

    def __init__(self, ttl_seconds: float = 3600.0):
        self.ttl = ttl_seconds
        self._tokens: dict[str, tuple[str, float]] = {}
        self._lock = threading.Lock()

    def issue(self, user: str) -> str:
        token = secrets.token_urlsafe(24)
        with self._lock:
            self._tokens[token] = (user, time.time() + self.ttl)
        return token

    def validate(self, token: str | None) -> str:
        """Return the token's user or raise AuthError."""
        if not token:
            raise AuthError("missing token")
        with self._lock:
            entry = self._tokens.get(token)
            if entry is None:
                raise AuthError("unknown or revoked token")
            user, expiry = entry
            if time.time() >= expiry:
                del self._tokens[token]
                raise AuthError("expired token")
        return user

    def revoke(self, token: str) -> None:
        with self._lock:
            self._tokens.pop(token, None)
