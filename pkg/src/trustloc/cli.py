"""Operator entry point.

Subcommands: init (build collections, identities, devices, target from an
experiment file), run (simulate the feed and drive the gateway), read (query
as any configured identity), bench (latency/throughput rows per contract
operation), verify (chain integrity and replay check). State persists under
TRUSTLOC_STATE_DIR (default ./state) as the experiment file copy, the block
log, and a world-state snapshot.

Exit codes: 0 success, 2 authorization, 3 not-found or not-updated,
4 computation failures, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import devicesim, localization
from .contract import (NotUpdated, PositionContract, device_transient,
                       observation_transient)
from .domain import (DeviceRecord, ExperimentParams, Identity, Role,
                     canonical_json, canonical_json_bytes, validate_params)
from .gateway import FileFeed, Gateway, UnknownDevice
from .ledger import (ChainBroken, CollectionDef, Ledger, NotFound,
                     Unauthorized, UnknownOperation, load_block_log,
                     replay_world_state)

BENCH_LABELS = {
    "ReadTarget": "read target",
    "ReadDevice": "read device",
    "UpdateDeviceConfig": "update device",
    "UpdateObservation": "add observation",
    "UpdateTrustState": "update evidence/reputation/trust",
    "CalculatePosition": "compute position",
}

READ_ONLY_BENCH = {"ReadTarget", "ReadDevice"}


class ExperimentFileError(ValueError):
    """Experiment file failed validation; message names the offender."""


@dataclass
class Experiment:
    """A built (not necessarily initialized) experiment: ledger plus wiring."""

    doc: dict
    params: ExperimentParams
    ledger: Ledger
    contract: PositionContract
    identities: dict[str, Identity]
    org: str
    admin: Identity
    devices_collection: str
    target_collection: str
    device_seeds: list[tuple[DeviceRecord, int]]
    target_id: str
    sim: Optional[devicesim.SimConfig] = None
    reports: list = field(default_factory=list)


def build_experiment(doc: dict, clock: Optional[Callable] = None) -> Experiment:
    """Wire a fresh ledger, contract, collections, and identities from a file."""
    params = ExperimentParams.from_dict(doc.get("params", {}))
    violations = validate_params(params)
    if violations:
        raise ExperimentFileError("; ".join(violations))
    if not doc.get("orgs"):
        raise ExperimentFileError("experiment file defines no orgs")

    ledger = Ledger()
    contract = PositionContract(params, clock)
    contract.register(ledger)

    identities: dict[str, Identity] = {}
    for org in doc["orgs"]:
        for coll in org.get("collections", []):
            ledger.define_collection(CollectionDef(
                name=coll["name"], org=org["name"],
                readers=frozenset(Role(r) for r in coll["readers"]),
                writers=frozenset(Role(w) for w in coll["writers"])))
        for ident in org.get("identities", []):
            if ident["name"] in identities:
                raise ExperimentFileError(
                    f"duplicate identity name {ident['name']}")
            identities[ident["name"]] = Identity(
                name=ident["name"], org=org["name"], role=Role(ident["role"]))

    org = doc["orgs"][0]["name"]
    for coll_name in (params.collection_devices, params.collection_target):
        if ledger.collection(coll_name).org != org:
            raise ExperimentFileError(
                f"collection {coll_name} does not belong to {org}")
    admins = [i for i in identities.values()
              if i.org == org and i.role is Role.ADMIN]
    if not admins:
        raise ExperimentFileError(f"no admin identity for {org}")

    seen: set[str] = set()
    device_seeds: list[tuple[DeviceRecord, int]] = []
    for dev in doc.get("devices", []):
        if dev["id"] in seen:
            raise ExperimentFileError(f"duplicate device id {dev['id']}")
        seen.add(dev["id"])
        record = DeviceRecord(
            id=dev["id"], decrypt_key=0, x=dev["x"], y=dev["y"],
            dist=dev.get("dist", 0.0), conf=dev.get("conf", 0.0),
            evi=dev.get("evi", 0.0), rep=dev.get("rep", 0.0),
            trust=dev.get("trust", 0.0),
            neighbors=tuple(dev.get("neighbors", [])))
        device_seeds.append((record, devicesim.key_byte(dev["key"])))

    sim = devicesim.SimConfig.from_dict(doc["sim"]) if "sim" in doc else None
    return Experiment(
        doc=doc, params=params, ledger=ledger, contract=contract,
        identities=identities, org=org, admin=admins[0],
        devices_collection=params.collection_devices,
        target_collection=params.collection_target,
        device_seeds=device_seeds, target_id=str(doc["target"]), sim=sim)


def init_experiment(exp: Experiment) -> None:
    """Create every seeded device and the target; abort naming the offender."""
    for record, key in exp.device_seeds:
        try:
            exp.ledger.submit(exp.admin, "CreateDevice",
                              [exp.devices_collection],
                              device_transient(record, key))
        except Exception as exc:
            raise ExperimentFileError(f"device {record.id}: {exc}") from exc
    try:
        exp.ledger.submit(exp.admin, "CreateTarget",
                          [exp.target_collection, exp.target_id])
    except Exception as exc:
        raise ExperimentFileError(f"target {exp.target_id}: {exc}") from exc


def load_experiment_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def state_dir() -> Path:
    return Path(os.environ.get("TRUSTLOC_STATE_DIR", "./state"))


def _persist(exp: Experiment, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "experiment.json").write_text(
        canonical_json(exp.doc) + "\n", encoding="utf-8")
    exp.ledger.save_block_log(str(directory / "blocks.jsonl"))
    exp.ledger.save_state(str(directory / "state.json"))


def load_persisted_experiment(directory: Optional[Path] = None) -> Experiment:
    """Rebuild an experiment around the persisted ledger state."""
    directory = directory or state_dir()
    doc = json.loads((directory / "experiment.json").read_text(encoding="utf-8"))
    exp = build_experiment(doc)
    exp.ledger = Ledger.load(str(directory / "state.json"),
                             str(directory / "blocks.jsonl"))
    exp.contract.register(exp.ledger)
    return exp


def cmd_init(file_path: str) -> dict:
    exp = build_experiment(load_experiment_file(file_path))
    init_experiment(exp)
    _persist(exp, state_dir())
    return {"devices": len(exp.device_seeds), "target": exp.target_id,
            "height": exp.ledger.height}


def cmd_run(file_path: str, rounds: Optional[int] = None) -> list:
    exp = build_experiment(load_experiment_file(file_path))
    init_experiment(exp)
    if exp.sim is None:
        raise ExperimentFileError("experiment file has no sim section")
    rounds = rounds if rounds is not None else exp.params.batch_size
    directory = state_dir()
    directory.mkdir(parents=True, exist_ok=True)
    devicesim.write_feed_files(exp.sim, rounds,
                               str(directory / "obs.log"),
                               str(directory / "feed.jsonl"),
                               exp.params)
    # cycle on the anchors that feed, not every registered device
    registered = exp.ledger.query(exp.admin, "ReadAllDeviceIds",
                                  [exp.devices_collection])
    device_ids = [a.id for a in exp.sim.anchors]
    for device_id in device_ids:
        if device_id not in registered:
            raise ExperimentFileError(
                f"sim anchor {device_id} is not a registered device")
    gw = Gateway(exp.ledger, exp.admin, exp.params, exp.devices_collection,
                 exp.target_collection, device_ids)
    reports = gw.poll_loop(FileFeed(str(directory / "feed.jsonl")))
    with open(directory / "reports.jsonl", "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(report.to_json() + "\n")
    _persist(exp, directory)
    exp.reports = reports
    return reports


def cmd_read(identity_name: str, what: str, entity_id: Optional[str] = None):
    exp = load_persisted_experiment()
    if identity_name not in exp.identities:
        raise ExperimentFileError(f"unknown identity {identity_name}")
    caller = exp.identities[identity_name]
    if what == "target":
        return exp.ledger.query(caller, "ReadTarget", [exp.target_collection])
    if what == "device":
        if entity_id is None:
            raise ExperimentFileError("device read requires an id")
        return exp.ledger.query(caller, "ReadDevice",
                                [exp.devices_collection, entity_id])
    raise ExperimentFileError(f"unknown read kind {what}")


def cmd_verify(directory: Optional[Path] = None) -> dict:
    directory = directory or state_dir()
    blocks = load_block_log(str(directory / "blocks.jsonl"))
    replayed = replay_world_state(blocks)
    snapshot = json.loads((directory / "state.json").read_text(encoding="utf-8"))
    stored = {k: bytes.fromhex(v) for k, v in snapshot["world_state"].items()}
    if replayed != stored:
        raise ChainBroken(blocks[-1].height)
    return {"ok": True, "height": blocks[-1].height,
            "world_state_keys": len(stored)}


def _bench_call(exp: Experiment, op: str) -> Callable[[int], object]:
    ids = [record.id for record, _ in exp.device_seeds]
    seeds = {record.id: record for record, _ in exp.device_seeds}
    admin, ledger, params = exp.admin, exp.ledger, exp.params

    if op == "ReadTarget":
        return lambda i: ledger.query(admin, "ReadTarget",
                                      [exp.target_collection])
    if op == "ReadDevice":
        return lambda i: ledger.query(admin, "ReadDevice",
                                      [exp.devices_collection,
                                       ids[i % len(ids)]])
    if op == "UpdateDeviceConfig":
        def update_config(i):
            dev = ids[i % len(ids)]
            neighbors = [d for d in ids if d != dev][:2]
            return ledger.submit(admin, "UpdateDeviceConfig",
                                 [exp.devices_collection, dev],
                                 {"neighbors": canonical_json_bytes(neighbors)})
        return update_config
    if op == "UpdateObservation":
        def add_observation(i):
            dev = ids[i % len(ids)]
            seed = seeds[dev]
            conf = min(max(seed.conf, params.min_conf), params.max_conf)
            dist = seed.dist + (i // len(ids)) % 3
            return ledger.submit(admin, "UpdateObservation",
                                 [exp.devices_collection, dev],
                                 observation_transient(dist, conf))
        return add_observation
    if op == "UpdateTrustState":
        return lambda i: ledger.submit(admin, "UpdateTrustState",
                                       [exp.devices_collection,
                                        ids[i % len(ids)]])
    if op == "CalculatePosition":
        return lambda i: ledger.submit(admin, "CalculatePosition",
                                       [exp.devices_collection,
                                        exp.target_collection])
    raise UnknownOperation(op)


def bench_rows(exp: Experiment, op_name: str, iterations: int) -> list[dict]:
    """Measure one contract op (or 'all' six) with fresh per-iteration inputs."""
    if iterations <= 0:
        raise ValueError("iterations must be positive")
    ops = list(BENCH_LABELS) if op_name == "all" else [op_name]
    for op in ops:
        if op not in BENCH_LABELS:
            raise UnknownOperation(op)
    rows = []
    for op in ops:
        call = _bench_call(exp, op)
        height_before = exp.ledger.height
        times = []
        for i in range(iterations):
            start = time.perf_counter()
            call(i)
            times.append(time.perf_counter() - start)
        appended = exp.ledger.height - height_before
        if op in READ_ONLY_BENCH and appended:
            raise RuntimeError(f"read-only bench {op} appended {appended} blocks")
        mean_ms = statistics.fmean(times) * 1000
        sd_ms = statistics.stdev(times) * 1000 if len(times) > 1 else 0.0
        rows.append({
            "op": BENCH_LABELS[op],
            "iterations": iterations,
            "mean_ms": mean_ms,
            "sd_ms": sd_ms,
            "tps": iterations / sum(times),
            "blocks_appended": appended,
        })
    return rows


def cmd_bench(file_path: str, op_name: str, iterations: int) -> list[dict]:
    exp = build_experiment(load_experiment_file(file_path))
    init_experiment(exp)
    return bench_rows(exp, op_name, iterations)


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, Unauthorized):
        return 2
    if isinstance(exc, (NotFound, NotUpdated, UnknownDevice, FileNotFoundError)):
        return 3
    if isinstance(exc, (localization.NotComputable,
                        localization.InsufficientAnchors,
                        localization.NegativeRange)):
        return 4
    return 1


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="trustloc",
        description="Trust-managed localization on a simulated private ledger")
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="build collections, devices, target")
    p_init.add_argument("file")

    p_run = sub.add_parser("run", help="simulate the feed and drive the gateway")
    p_run.add_argument("file")
    p_run.add_argument("--rounds", type=int, default=None)

    p_read = sub.add_parser("read", help="query as a configured identity")
    p_read.add_argument("identity")
    p_read.add_argument("what", choices=["target", "device"])
    p_read.add_argument("id", nargs="?")

    p_bench = sub.add_parser("bench", help="latency/throughput per contract op")
    p_bench.add_argument("file")
    p_bench.add_argument("op")
    p_bench.add_argument("--iters", type=int, default=100)

    sub.add_parser("verify", help="check chain integrity and replay digests")

    args = parser.parse_args(argv)
    try:
        if args.command == "init":
            print(canonical_json(cmd_init(args.file)))
        elif args.command == "run":
            for report in cmd_run(args.file, args.rounds):
                print(report.to_json())
        elif args.command == "read":
            print(canonical_json(cmd_read(args.identity, args.what, args.id)))
        elif args.command == "bench":
            for row in cmd_bench(args.file, args.op, args.iters):
                print(f"{row['op']}: {row['mean_ms']:.3f}±{row['sd_ms']:.3f} ms"
                      f" / {row['tps']:.1f} tps")
        elif args.command == "verify":
            print(canonical_json(cmd_verify()))
    except Exception as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
