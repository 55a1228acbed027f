"""Synthetic anchor network: ranging, log rendering/parsing, sealed feeds.

Each anchor two-way-ranges the target: a fixed 1 ms turnaround plus the
round trip at light speed gives the reply timestamp, and the reported
distance is recovered from the timestamp pair exactly as the gateway side
would. RSSI follows a log-distance path loss model. The three stages of the
pipeline (ranging log, parsing, encryption) stay file-compatible: raw OBS
lines on one side, sealed envelope JSON lines on the other.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass

from . import crypto
from .domain import ExperimentParams, Observation
from .localization import SPEED_OF_LIGHT_M_S
from .trust import confidence

TURNAROUND_S = 1e-3
RSSI_DISTANCE_FLOOR_M = 0.1


class UnknownAnchor(ValueError):
    """Requested anchor id is not part of the simulation config."""


class ParseError(ValueError):
    """Log line does not match the OBS format; offset marks the bad token."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class AnchorSpec:
    id: str
    x: float
    y: float
    key: int


@dataclass(frozen=True)
class TargetSpec:
    id: str
    x: float
    y: float


@dataclass(frozen=True)
class SimConfig:
    anchors: tuple[AnchorSpec, ...]
    target: TargetSpec
    range_noise_sigma: float = 0.0
    rssi_ref_dbm: float = -40.0
    path_loss_exponent: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.range_noise_sigma < 0:
            raise ValueError("range_noise_sigma must be non-negative")
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be positive")

    def to_dict(self) -> dict:
        return {
            "anchors": [{"id": a.id, "x": a.x, "y": a.y, "key": a.key}
                        for a in self.anchors],
            "target": {"id": self.target.id, "x": self.target.x,
                       "y": self.target.y},
            "range_noise_sigma": self.range_noise_sigma,
            "rssi_ref_dbm": self.rssi_ref_dbm,
            "path_loss_exponent": self.path_loss_exponent,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        return cls(
            anchors=tuple(AnchorSpec(id=a["id"], x=a["x"], y=a["y"],
                                     key=key_byte(a["key"]))
                          for a in d["anchors"]),
            target=TargetSpec(id=d["target"]["id"], x=d["target"]["x"],
                              y=d["target"]["y"]),
            range_noise_sigma=d.get("range_noise_sigma", 0.0),
            rssi_ref_dbm=d.get("rssi_ref_dbm", -40.0),
            path_loss_exponent=d.get("path_loss_exponent", 2.0),
            seed=d.get("seed", 0),
        )


def key_byte(key) -> int:
    """Accept a key as an int byte value or a single character."""
    if isinstance(key, str):
        if len(key) != 1:
            raise ValueError("key string must be a single character")
        return ord(key)
    return int(key)


def _format_conf(conf: float) -> str:
    text = f"{conf:.6f}".rstrip("0")
    return text + "0" if text.endswith(".") else text


def render_log_line(obs: Observation) -> str:
    """ASCII log form, newline-terminated: OBS <dev> <tgt> <mm> <conf>."""
    return (f"OBS {obs.device_id} {obs.target_id} "
            f"{obs.distance_mm} {_format_conf(obs.confidence)}\n")


_TOKEN = re.compile(r"\S+")


def parse_log_line(line: str) -> Observation:
    stripped = line.rstrip("\r\n")
    tokens = list(_TOKEN.finditer(stripped))
    if not tokens or tokens[0].group() != "OBS":
        raise ParseError("expected OBS tag", 0)
    if len(tokens) != 5:
        raise ParseError("expected 5 fields", 0)
    try:
        distance_mm = int(tokens[3].group())
    except ValueError:
        raise ParseError("distance must be an integer", tokens[3].start()) from None
    if distance_mm < 0:
        raise ParseError("distance must be non-negative", tokens[3].start())
    try:
        conf = float(tokens[4].group())
    except ValueError:
        raise ParseError("confidence must be a number", tokens[4].start()) from None
    return Observation(device_id=tokens[1].group(), target_id=tokens[2].group(),
                       distance_mm=distance_mm, confidence=conf)


def _anchor(cfg: SimConfig, anchor_id: str) -> AnchorSpec:
    for anchor in cfg.anchors:
        if anchor.id == anchor_id:
            return anchor
    raise UnknownAnchor(anchor_id)


def simulate_ranging(cfg: SimConfig, anchor_id: str, rounds: int,
                     params: ExperimentParams | None = None) -> list[str]:
    """Render `rounds` OBS log lines for one anchor.

    Deterministic per (seed, anchor): each anchor owns an independent RNG
    stream, so interleaving order cannot change any reported value.
    """
    params = params or ExperimentParams()
    anchor = _anchor(cfg, anchor_id)
    rng = random.Random(f"{cfg.seed}:{anchor_id}")
    true_d = math.dist((anchor.x, anchor.y), (cfg.target.x, cfg.target.y))
    rssi = cfg.rssi_ref_dbm - 10 * cfg.path_loss_exponent * math.log10(
        max(true_d, RSSI_DISTANCE_FLOOR_M))
    conf = confidence(rssi, params)
    lines = []
    for _ in range(rounds):
        noise_m = rng.gauss(0.0, cfg.range_noise_sigma) / 1000
        t2 = TURNAROUND_S
        t1 = t2 + 2 * (true_d + noise_m) / SPEED_OF_LIGHT_M_S
        reported_m = (t1 - t2) / 2 * SPEED_OF_LIGHT_M_S
        distance_mm = max(int(math.floor(reported_m * 1000 + 0.5)), 0)
        obs = Observation(device_id=anchor.id, target_id=cfg.target.id,
                          distance_mm=distance_mm, confidence=conf)
        lines.append(render_log_line(obs))
    return lines


def emit_feed(cfg: SimConfig, rounds: int,
              params: ExperimentParams | None = None) -> list[str]:
    """Sealed envelope wire lines for all anchors, interleaved round-robin."""
    per_anchor = {a.id: simulate_ranging(cfg, a.id, rounds, params)
                  for a in cfg.anchors}
    wire = []
    for i in range(rounds):
        for anchor in cfg.anchors:
            line = per_anchor[anchor.id][i]
            env = crypto.seal(line.encode("utf-8"), anchor.id, anchor.key)
            wire.append(env.to_wire())
    return wire


def write_feed_files(cfg: SimConfig, rounds: int, log_path: str,
                     feed_path: str,
                     params: ExperimentParams | None = None) -> list[str]:
    """Write the raw OBS log and the sealed feed; return the wire lines."""
    with open(log_path, "w", encoding="utf-8") as fh:
        for anchor in cfg.anchors:
            fh.writelines(simulate_ranging(cfg, anchor.id, rounds, params))
    wire = emit_feed(cfg, rounds, params)
    with open(feed_path, "w", encoding="utf-8") as fh:
        for line in wire:
            fh.write(line + "\n")
    return wire
