"""Gateway application loop.

Polls the encrypted feed, authenticates and decrypts envelopes, buffers
per-device observations, and once every registered device has a full batch
drives the three-phase ledger cycle: observation averages, then trust
updates, then one position calculation. Phase barriers are strict; within a
phase the per-device submissions commute.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Protocol, Sequence, Union

from . import devicesim
from .crypto import AuthenticityFailure, Envelope, IntegrityFailure, open_envelope
from .domain import ExperimentParams, Identity, Observation, canonical_json
from .ledger import Ledger, NotFound
from .contract import observation_transient


class UnknownDevice(Exception):
    """Envelope claims a device id the ledger does not know."""


@dataclass
class DeviceBuffer:
    """Per-device batch staging; pending never exceeds the batch size.

    Overflow beyond a full batch waits in holdback and refills pending after
    a flush, so nothing is dropped when a device outpaces the cycle.
    """

    device_id: str
    batch_size: int
    pending: list[Observation] = field(default_factory=list)
    holdback: deque = field(default_factory=deque)

    def append(self, obs: Observation) -> None:
        if len(self.pending) < self.batch_size:
            self.pending.append(obs)
        else:
            self.holdback.append(obs)

    @property
    def ready(self) -> bool:
        return len(self.pending) == self.batch_size


def flush_batch(buf: DeviceBuffer,
                p: ExperimentParams) -> Optional[tuple[float, float]]:
    """Drain a full batch into (mean distance_mm, mean confidence).

    Returns None while the buffer holds fewer than batch_size observations.
    """
    if len(buf.pending) < p.batch_size:
        return None
    avg_dist = sum(o.distance_mm for o in buf.pending) / p.batch_size
    avg_conf = sum(o.confidence for o in buf.pending) / p.batch_size
    buf.pending.clear()
    while buf.holdback and len(buf.pending) < buf.batch_size:
        buf.pending.append(buf.holdback.popleft())
    return avg_dist, avg_conf


@dataclass
class CycleReport:
    """Outcome of one three-phase cycle."""

    cycle: int
    phase_ms: dict[str, float] = field(default_factory=dict)
    position: Optional[tuple[float, float]] = None
    failure: Optional[str] = None
    aborted_device: Optional[str] = None
    rejections: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "cycle": self.cycle,
            "phase_ms": {k: round(v, 3) for k, v in self.phase_ms.items()},
            "position": list(self.position) if self.position else None,
            "failure": self.failure,
            "aborted_device": self.aborted_device,
            "rejections": dict(sorted(self.rejections.items())),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


class PollableFeed(Protocol):
    """Source of envelope wire lines.

    read_available returns the lines that arrived since the last poll (an
    empty list when nothing is pending yet) and None once the source is
    closed and drained.
    """

    def read_available(self) -> Optional[list[str]]: ...


class ListFeed:
    """Feed over a fixed line list, optionally delivered in chunks."""

    def __init__(self, lines: Sequence[str], chunk_size: Optional[int] = None):
        self._lines = list(lines)
        self._pos = 0
        self._chunk = chunk_size or max(len(self._lines), 1)

    def read_available(self) -> Optional[list[str]]:
        if self._pos >= len(self._lines):
            return None
        chunk = self._lines[self._pos:self._pos + self._chunk]
        self._pos += len(chunk)
        return chunk


class FileFeed:
    """Feed over a sealed-envelope JSON-lines file, delivered in one poll."""

    def __init__(self, path: str):
        self._path = path
        self._done = False

    def read_available(self) -> Optional[list[str]]:
        if self._done:
            return None
        self._done = True
        with open(self._path, encoding="utf-8") as fh:
            return [line.rstrip("\n") for line in fh if line.strip()]


FeedLike = Union[PollableFeed, Iterable[str], str]


class Gateway:
    """Admin-privileged consumer of the device feed for one experiment."""

    def __init__(self, ledger: Ledger, identity: Identity,
                 params: ExperimentParams, devices_collection: str,
                 target_collection: str, device_ids: Sequence[str],
                 key_lookup: Optional[Callable[[str], int]] = None,
                 sleeper: Callable[[float], None] = time.sleep):
        self.ledger = ledger
        self.identity = identity
        self.params = params
        self.devices_collection = devices_collection
        self.target_collection = target_collection
        self.buffers = {device_id: DeviceBuffer(device_id, params.batch_size)
                        for device_id in device_ids}
        self.key_lookup = key_lookup or self._ledger_key_lookup
        self.rejections: dict[str, int] = {}
        self._sleeper = sleeper
        self._cycles = 0

    def _ledger_key_lookup(self, device_id: str) -> int:
        try:
            record = self.ledger.query(self.identity, "ReadDevice",
                                       [self.devices_collection, device_id])
        except NotFound:
            raise UnknownDevice(device_id) from None
        return record["decrypt_key"]

    def _reject(self, device_id: str) -> None:
        self.rejections[device_id] = self.rejections.get(device_id, 0) + 1

    def ingest(self, env: Envelope) -> Observation:
        """Authenticate, decrypt, parse, and buffer one envelope.

        Every failure increments the claimed sender's rejection counter and
        leaves all buffers and ledger state unchanged.
        """
        try:
            if env.device_id not in self.buffers:
                raise UnknownDevice(env.device_id)
            key = self.key_lookup(env.device_id)
            line = open_envelope(env, key, env.device_id)
            obs = devicesim.parse_log_line(line.decode("utf-8", errors="replace"))
            if obs.device_id != env.device_id:
                raise AuthenticityFailure(env.device_id, obs.device_id)
        except (UnknownDevice, AuthenticityFailure, IntegrityFailure,
                devicesim.ParseError):
            self._reject(env.device_id)
            raise
        self.buffers[env.device_id].append(obs)
        return obs

    @property
    def all_ready(self) -> bool:
        return all(buf.ready for buf in self.buffers.values())

    def run_cycle(self, device_order: Optional[Sequence[str]] = None) -> CycleReport:
        """Run one observation/trust/position cycle over full batches.

        A failing submit in phase 1 or 2 aborts the cycle and the report
        names the device; a phase-3 geometry failure is reported, not raised.
        """
        order = list(device_order) if device_order else sorted(self.buffers)
        self._cycles += 1
        report = CycleReport(cycle=self._cycles,
                             rejections=dict(self.rejections))

        start = time.perf_counter()
        for device_id in order:
            batch = flush_batch(self.buffers[device_id], self.params)
            if batch is None:
                report.failure = "batch not ready"
                report.aborted_device = device_id
                return report
            avg_dist, avg_conf = batch
            try:
                self.ledger.submit(self.identity, "UpdateObservation",
                                   [self.devices_collection, device_id],
                                   observation_transient(avg_dist, avg_conf))
            except Exception as exc:
                report.phase_ms["observation"] = (time.perf_counter() - start) * 1000
                report.failure = f"{type(exc).__name__}: {exc}"
                report.aborted_device = device_id
                return report
        report.phase_ms["observation"] = (time.perf_counter() - start) * 1000

        start = time.perf_counter()
        for device_id in order:
            try:
                self.ledger.submit(self.identity, "UpdateTrustState",
                                   [self.devices_collection, device_id])
            except Exception as exc:
                report.phase_ms["trust"] = (time.perf_counter() - start) * 1000
                report.failure = f"{type(exc).__name__}: {exc}"
                report.aborted_device = device_id
                return report
        report.phase_ms["trust"] = (time.perf_counter() - start) * 1000

        start = time.perf_counter()
        try:
            result = self.ledger.submit(
                self.identity, "CalculatePosition",
                [self.devices_collection, self.target_collection])
        except Exception as exc:
            report.failure = f"{type(exc).__name__}: {exc}"
        else:
            if "not_computable" in result:
                report.failure = result["not_computable"]
            else:
                report.position = (result["x"], result["y"])
        report.phase_ms["position"] = (time.perf_counter() - start) * 1000
        report.rejections = dict(self.rejections)
        return report

    def poll_loop(self, feed: FeedLike) -> list[CycleReport]:
        """Drain the feed, cycling whenever every device has a full batch.

        Returns the reports once the feed closes. A device that never fills
        its batch stalls all cycles; that availability caveat is inherent to
        the all-devices-ready rule.
        """
        source = _as_feed(feed)
        reports: list[CycleReport] = []
        while True:
            chunk = source.read_available()
            if chunk is None:
                break
            if not chunk:
                self._sleeper(self.params.time_read_obs_ms / 1000)
                continue
            for line in chunk:
                try:
                    self.ingest(Envelope.from_wire(line))
                except (UnknownDevice, AuthenticityFailure, IntegrityFailure,
                        devicesim.ParseError):
                    continue
                except ValueError:
                    self._reject("?")
                    continue
                while self.all_ready:
                    reports.append(self.run_cycle())
        while self.all_ready:
            reports.append(self.run_cycle())
        return reports


def _as_feed(feed: FeedLike) -> PollableFeed:
    if isinstance(feed, str):
        return FileFeed(feed)
    if hasattr(feed, "read_available"):
        return feed
    return ListFeed(list(feed))
