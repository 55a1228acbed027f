"""Shared domain types, experiment parameters, and the canonical record encoding.

All types here are immutable values; updates go through dataclasses.replace.
The canonical encoding (sorted-key JSON, no insignificant whitespace) is what
gets hashed and persisted, so every record must round-trip through it exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from datetime import datetime
from enum import Enum
from typing import Any, Optional


def canonical_json(value: Any) -> str:
    """Render a JSON-able value in the canonical form used for hashing."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)


def canonical_json_bytes(value: Any) -> bytes:
    return canonical_json(value).encode("utf-8")


class Role(str, Enum):
    ADMIN = "admin"
    USER = "user"


class SelfNeighbor(ValueError):
    """A device listed itself in its own neighbor set."""


@dataclass(frozen=True)
class Identity:
    """A client identity: org membership plus role, gating every contract call."""

    name: str
    org: str
    role: Role

    def to_dict(self) -> dict:
        return {"name": self.name, "org": self.org, "role": self.role.value}

    @classmethod
    def from_dict(cls, d: dict) -> "Identity":
        return cls(name=d["name"], org=d["org"], role=Role(d["role"]))


@dataclass(frozen=True)
class DeviceRecord:
    """Ledger-resident anchor entity.

    Positions are in coordinate units (meters); ``dist`` is the last averaged
    observation in millimeters. ``decrypt_key`` is a single byte value because
    the device cipher XORs one key character.
    """

    id: str
    decrypt_key: int
    x: float
    y: float
    dist: float = 0.0
    conf: float = 0.0
    evi: float = 0.0
    rep: float = 0.0
    trust: float = 0.0
    neighbors: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0 <= self.decrypt_key <= 255:
            raise ValueError("decrypt_key must be a single byte value")
        if self.id in self.neighbors:
            raise SelfNeighbor(self.id)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "decrypt_key": self.decrypt_key,
            "x": self.x,
            "y": self.y,
            "dist": self.dist,
            "conf": self.conf,
            "evi": self.evi,
            "rep": self.rep,
            "trust": self.trust,
            "neighbors": list(self.neighbors),
        }

    def to_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceRecord":
        return cls(
            id=d["id"],
            decrypt_key=int(d["decrypt_key"]),
            x=d["x"],
            y=d["y"],
            dist=d["dist"],
            conf=d["conf"],
            evi=d["evi"],
            rep=d["rep"],
            trust=d["trust"],
            neighbors=tuple(d["neighbors"]),
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "DeviceRecord":
        return cls.from_dict(json.loads(raw.decode("utf-8")))


@dataclass(frozen=True)
class TargetRecord:
    """Ledger-resident target entity; ``updated`` flags a fresh position."""

    id: str
    x: float = 0.0
    y: float = 0.0
    timestamp: Optional[datetime] = None
    updated: bool = False

    def __post_init__(self):
        if self.updated and self.timestamp is None:
            raise ValueError("updated target requires a timestamp")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "x": self.x,
            "y": self.y,
            "timestamp": self.timestamp.isoformat() if self.timestamp else None,
            "updated": self.updated,
        }

    def to_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TargetRecord":
        ts = d.get("timestamp")
        return cls(
            id=d["id"],
            x=d["x"],
            y=d["y"],
            timestamp=datetime.fromisoformat(ts) if ts else None,
            updated=d["updated"],
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "TargetRecord":
        return cls.from_dict(json.loads(raw.decode("utf-8")))


@dataclass(frozen=True)
class Observation:
    """One parsed ranging result from a device."""

    device_id: str
    target_id: str
    distance_mm: int
    confidence: float

    def __post_init__(self):
        if self.distance_mm < 0:
            raise ValueError("distance_mm must be non-negative")


@dataclass(frozen=True)
class ExperimentParams:
    """All tunable application parameters for one experiment.

    Defaults reproduce the reference test configuration. The RSSI thresholds
    are the unique pair making the piecewise confidence curve continuous
    (9/4 + r/40 equals 1 at -50 dBm and 0.4 at -74 dBm).
    """

    max_conf: float = 1.0
    min_conf: float = 0.4
    prh: float = 2.0
    prl: float = 1.0
    thresh_conf: float = 0.7
    thresh_ev: float = 0.0
    max_error_pos: float = 0.01
    max_rep: float = 20.0
    batch_size: int = 6
    time_read_obs_ms: float = 100.0
    rssi_up: float = -50.0
    rssi_inf: float = -74.0
    collection_devices: str = "DeviceAdmin1PrivateCollection"
    collection_target: str = "TargetOrg1PrivateCollection"
    mm_per_unit: float = 1000.0

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentParams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def validate_params(p: ExperimentParams) -> list[str]:
    """Return every violated parameter invariant by name; empty list means ok."""
    errors = []
    if not p.min_conf < p.thresh_conf:
        errors.append("min_conf < thresh_conf violated")
    if not p.thresh_conf <= p.max_conf:
        errors.append("thresh_conf ≤ max_conf violated")
    if not p.prl < p.prh:
        errors.append("prl < prh violated")
    if not p.rssi_inf < p.rssi_up:
        errors.append("rssi_inf < rssi_up violated")
    if not p.max_rep > 0:
        errors.append("max_rep > 0 violated")
    if not p.batch_size >= 1:
        errors.append("batch_size ≥ 1 violated")
    if not p.mm_per_unit > 0:
        errors.append("mm_per_unit > 0 violated")
    return errors
