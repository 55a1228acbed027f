"""The position contract: every ledger operation of the localization system.

Each operation authorizes the caller against a static role table plus the
collection's org, reads and writes records through the transaction context,
and delegates the math to the trust and localization modules. Record
plaintext and decryption keys arrive as transient arguments only; public
arguments carry nothing but routing (collection names and entity ids).
"""

from __future__ import annotations

import json
from dataclasses import replace
from datetime import datetime, timezone
from typing import Callable, Optional

from . import localization, trust
from .domain import DeviceRecord, ExperimentParams, Role, TargetRecord, canonical_json_bytes
from .ledger import Ledger, NotFound, TxContext, Unauthorized


class DuplicateDevice(ValueError):
    """A device with this id already exists in the collection."""


class TargetExists(ValueError):
    """The single-target collection is already occupied."""


class InvalidConfidence(ValueError):
    """Observation confidence outside [min_conf, max_conf]."""


class EmptyUpdate(ValueError):
    """Device config update supplied neither a key nor neighbors."""


class NotUpdated(Exception):
    """A user asked for the target before any successful position update."""


ADMIN_ONLY = frozenset({Role.ADMIN})
ADMIN_OR_USER = frozenset({Role.ADMIN, Role.USER})

ACCESS_POLICY: dict[str, frozenset[Role]] = {
    "CreateDevice": ADMIN_ONLY,
    "UpdateDeviceConfig": ADMIN_ONLY,
    "CreateTarget": ADMIN_ONLY,
    "UpdateObservation": ADMIN_ONLY,
    "UpdateTrustState": ADMIN_ONLY,
    "DeleteDevice": ADMIN_ONLY,
    "DeleteTarget": ADMIN_ONLY,
    "CalculatePosition": ADMIN_ONLY,
    "ReadTarget": ADMIN_OR_USER,
    "ReadDevice": ADMIN_ONLY,
    "ReadAllDeviceIds": ADMIN_ONLY,
}

READ_ONLY_OPS = frozenset({"ReadTarget", "ReadDevice", "ReadAllDeviceIds"})


class PositionContract:
    """Stateless executor; all state lives in the ledger it registers with."""

    def __init__(self, params: ExperimentParams,
                 clock: Optional[Callable[[], datetime]] = None):
        self.params = params
        self.clock = clock or (lambda: datetime.now(timezone.utc))

    def register(self, ledger: Ledger) -> None:
        handlers = {
            "CreateDevice": self._create_device,
            "UpdateDeviceConfig": self._update_device_config,
            "CreateTarget": self._create_target,
            "UpdateObservation": self._update_observation,
            "UpdateTrustState": self._update_trust_state,
            "DeleteDevice": self._delete_device,
            "DeleteTarget": self._delete_target,
            "CalculatePosition": self._calculate_position,
            "ReadTarget": self._read_target,
            "ReadDevice": self._read_device,
            "ReadAllDeviceIds": self._read_all_device_ids,
        }
        for name, fn in handlers.items():
            ledger.register_op(name, fn, read_only=name in READ_ONLY_OPS)

    # -- access control ----------------------------------------------------

    @staticmethod
    def _authorize(ctx: TxContext, op_name: str, *collections: str) -> None:
        allowed = ACCESS_POLICY[op_name]
        for name in collections:
            cdef = ctx.collection_def(name)
            if ctx.submitter.org != cdef.org or ctx.submitter.role not in allowed:
                raise Unauthorized(
                    f"{ctx.submitter.org}/{ctx.submitter.role.value} "
                    f"cannot call {op_name} on {name}")

    @staticmethod
    def _load_device(ctx: TxContext, collection: str, device_id: str) -> DeviceRecord:
        try:
            raw = ctx.get_private(collection, device_id)
        except NotFound:
            raise NotFound(device_id) from None
        return DeviceRecord.from_bytes(raw)

    @staticmethod
    def _load_target(ctx: TxContext, collection: str) -> TargetRecord:
        keys = ctx.list_private_keys(collection)
        if not keys:
            raise NotFound("target")
        return TargetRecord.from_bytes(ctx.get_private(collection, keys[0]))

    # -- device lifecycle ----------------------------------------------------

    def _create_device(self, ctx: TxContext):
        collection, = ctx.public_args
        self._authorize(ctx, "CreateDevice", collection)
        record = DeviceRecord.from_bytes(ctx.transient["device"])
        record = replace(record, decrypt_key=ctx.transient["key"][0])
        if record.id in ctx.list_private_keys(collection):
            raise DuplicateDevice(record.id)
        ctx.put_private(collection, record.id, record.to_bytes())

    def _update_device_config(self, ctx: TxContext):
        collection, device_id = ctx.public_args
        self._authorize(ctx, "UpdateDeviceConfig", collection)
        record = self._load_device(ctx, collection, device_id)
        changes = {}
        if "key" in ctx.transient:
            changes["decrypt_key"] = ctx.transient["key"][0]
        if "neighbors" in ctx.transient:
            changes["neighbors"] = tuple(json.loads(ctx.transient["neighbors"]))
        if not changes:
            raise EmptyUpdate(device_id)
        ctx.put_private(collection, device_id, replace(record, **changes).to_bytes())

    def _delete_device(self, ctx: TxContext):
        collection, device_id = ctx.public_args
        self._authorize(ctx, "DeleteDevice", collection)
        self._load_device(ctx, collection, device_id)
        ctx.delete_private(collection, device_id)

    # -- target lifecycle ----------------------------------------------------

    def _create_target(self, ctx: TxContext):
        collection, target_id = ctx.public_args
        self._authorize(ctx, "CreateTarget", collection)
        existing = ctx.list_private_keys(collection)
        if existing:
            raise TargetExists(existing[0])
        record = TargetRecord(id=target_id)
        ctx.put_private(collection, target_id, record.to_bytes())

    def _delete_target(self, ctx: TxContext):
        collection, = ctx.public_args
        self._authorize(ctx, "DeleteTarget", collection)
        record = self._load_target(ctx, collection)
        ctx.delete_private(collection, record.id)

    # -- observation and trust -------------------------------------------

    def _update_observation(self, ctx: TxContext):
        collection, device_id = ctx.public_args
        self._authorize(ctx, "UpdateObservation", collection)
        record = self._load_device(ctx, collection, device_id)
        obs = json.loads(ctx.transient["observation"])
        conf = float(obs["conf"])
        dist = float(obs["dist_mm"])
        if not self.params.min_conf <= conf <= self.params.max_conf:
            raise InvalidConfidence(conf)
        if dist < 0:
            raise ValueError(f"negative distance {dist}")
        ctx.put_private(collection, device_id,
                        replace(record, dist=dist, conf=conf).to_bytes())

    def _update_trust_state(self, ctx: TxContext):
        collection, device_id = ctx.public_args
        self._authorize(ctx, "UpdateTrustState", collection)
        record = self._load_device(ctx, collection, device_id)
        mm = self.params.mm_per_unit
        own = trust.NeighborView(id=record.id, x=record.x, y=record.y,
                                 dist=record.dist / mm, conf=record.conf)
        views = []
        for nb_id in record.neighbors:
            nb = self._load_device(ctx, collection, nb_id)
            views.append(trust.NeighborView(id=nb.id, x=nb.x, y=nb.y,
                                            dist=nb.dist / mm, conf=nb.conf))
        evi = trust.evidence(own, views)
        rep = trust.update_reputation(record.rep, record.conf, evi, self.params)
        score = trust.trust(record.conf, rep, evi)
        ctx.put_private(collection, device_id,
                        replace(record, evi=evi, rep=rep, trust=score).to_bytes())

    # -- position ------------------------------------------------------------

    def _calculate_position(self, ctx: TxContext):
        devices_collection, target_collection = ctx.public_args
        self._authorize(ctx, "CalculatePosition", devices_collection,
                        target_collection)
        records = [self._load_device(ctx, devices_collection, device_id)
                   for device_id in ctx.list_private_keys(devices_collection)]
        target = self._load_target(ctx, target_collection)
        anchors = localization.select_anchors(records, 3, self.params.mm_per_unit)
        try:
            x, y = localization.multilaterate(anchors, self.params.max_error_pos)
        except localization.NotComputable as exc:
            stale = replace(target, updated=False)
            ctx.put_private(target_collection, target.id, stale.to_bytes())
            return {"not_computable": exc.reason.value}
        updated = replace(target, x=x, y=y, timestamp=self.clock(), updated=True)
        ctx.put_private(target_collection, target.id, updated.to_bytes())
        return {"x": x, "y": y}

    # -- reads ---------------------------------------------------------------

    def _read_target(self, ctx: TxContext):
        collection, = ctx.public_args
        self._authorize(ctx, "ReadTarget", collection)
        record = self._load_target(ctx, collection)
        if ctx.submitter.role is Role.USER and not record.updated:
            raise NotUpdated(record.id)
        return record.to_dict()

    def _read_device(self, ctx: TxContext):
        collection, device_id = ctx.public_args
        self._authorize(ctx, "ReadDevice", collection)
        return self._load_device(ctx, collection, device_id).to_dict()

    def _read_all_device_ids(self, ctx: TxContext):
        collection, = ctx.public_args
        self._authorize(ctx, "ReadAllDeviceIds", collection)
        return ctx.list_private_keys(collection)


def observation_transient(dist_mm: float, conf: float) -> dict[str, bytes]:
    """Build the transient map for an UpdateObservation submit."""
    return {"observation": canonical_json_bytes({"conf": conf, "dist_mm": dist_mm})}


def device_transient(record: DeviceRecord, key: int) -> dict[str, bytes]:
    """Build the transient map for a CreateDevice submit."""
    return {"device": record.to_bytes(), "key": bytes([key])}
