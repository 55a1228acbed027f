"""Observation confidentiality and integrity.

A device seals each observation line into an envelope: the line is hashed,
then XOR-encrypted with the device's single-byte key. The XOR pass skips the
final byte, so the line's trailing newline stays in the clear; the digest
still covers the whole plaintext, which is what open() verifies.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

DIGEST_SIZE = 32


class InvalidDevice(ValueError):
    """Envelope construction was attempted without a device id."""


class AuthenticityFailure(Exception):
    """Envelope device id does not match the expected sender."""

    def __init__(self, expected: str, actual: str):
        super().__init__(f"expected device {expected!r}, envelope claims {actual!r}")
        self.expected = expected
        self.actual = actual


class IntegrityFailure(Exception):
    """Decrypted payload does not hash to the envelope digest."""

    def __init__(self):
        super().__init__("payload digest mismatch after decryption")


def xor_transform(data: bytes, key: int) -> bytes:
    """XOR every byte with key except the last, which is copied unchanged.

    Involutive: applying it twice with the same key restores the input.
    """
    if not data:
        return b""
    last = len(data) - 1
    return bytes(b ^ key if i != last else b for i, b in enumerate(data))


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class Envelope:
    """Sealed observation: cleartext sender id, plaintext digest, ciphertext."""

    device_id: str
    digest: bytes
    payload: bytes

    def __post_init__(self):
        if not self.device_id:
            raise InvalidDevice("device_id must be non-empty")
        if len(self.digest) != DIGEST_SIZE:
            raise ValueError(f"digest must have exactly {DIGEST_SIZE} bytes")

    def to_wire(self) -> str:
        """One-line JSON form used in encrypted feed files."""
        return json.dumps({
            "id": self.device_id,
            "digest": self.digest.hex(),
            "payload": self.payload.hex(),
        }, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_wire(cls, line: str) -> "Envelope":
        obj = json.loads(line)
        return cls(
            device_id=obj["id"],
            digest=bytes.fromhex(obj["digest"]),
            payload=bytes.fromhex(obj["payload"]),
        )


def seal(observation_line: bytes, device_id: str, key: int) -> Envelope:
    if not device_id:
        raise InvalidDevice("device_id must be non-empty")
    return Envelope(
        device_id=device_id,
        digest=digest(observation_line),
        payload=xor_transform(observation_line, key),
    )


def open_envelope(env: Envelope, key: int, expected_device_id: str) -> bytes:
    """Verify sender id, decrypt, verify digest; return the plaintext line.

    The id check runs before any decryption so the gateway can reject
    misrouted envelopes without touching key material.
    """
    if env.device_id != expected_device_id:
        raise AuthenticityFailure(expected_device_id, env.device_id)
    plaintext = xor_transform(env.payload, key)
    if digest(plaintext) != env.digest:
        raise IntegrityFailure()
    return plaintext
