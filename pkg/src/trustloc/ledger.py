"""In-process simulation of a permissioned ledger with private data collections.

One shared world state holds only digests of private values; the plaintext
lives in per-collection private stores guarded by org/role policies. Writes
execute speculatively inside a transaction context, then an ordering service
turns each committed transaction into a hash-chained block. Transient
arguments (keys, observations) reach the executing operation but are never
recorded in a block, so the serialized chain leaks no private plaintext.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

from .crypto import digest
from .domain import Identity, Role, canonical_json, canonical_json_bytes

GENESIS_PREV = b"\x00" * 32
TOMBSTONE_DIGEST = digest(b"")


class DuplicateCollection(ValueError):
    """A collection with this name is already defined."""


class UnknownOperation(ValueError):
    """The operation name is not in the contract registry."""


class Unauthorized(Exception):
    """Caller's org or role does not satisfy the collection policy."""


class NotFound(Exception):
    """No value under the requested collection/key."""

    def __init__(self, what: str):
        super().__init__(what)
        self.what = what


class ChainBroken(Exception):
    """Chain verification failed at a specific block height."""

    def __init__(self, height: int):
        super().__init__(f"chain broken at height {height}")
        self.height = height


@dataclass(frozen=True)
class CollectionDef:
    """A private data partition bound to one org with role policies."""

    name: str
    org: str
    readers: frozenset[Role]
    writers: frozenset[Role]

    def __post_init__(self):
        if not self.writers <= self.readers:
            raise ValueError("writers must be a subset of readers")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "org": self.org,
            "readers": sorted(r.value for r in self.readers),
            "writers": sorted(w.value for w in self.writers),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CollectionDef":
        return cls(
            name=d["name"],
            org=d["org"],
            readers=frozenset(Role(r) for r in d["readers"]),
            writers=frozenset(Role(w) for w in d["writers"]),
        )


@dataclass(frozen=True)
class Transaction:
    """What reaches the chain: routing data and private-write digests only."""

    tx_id: str
    submitter: Identity
    op_name: str
    public_args: tuple[str, ...]
    private_write_hashes: dict[str, bytes]
    status: str = "committed"
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "tx_id": self.tx_id,
            "submitter": self.submitter.to_dict(),
            "op_name": self.op_name,
            "public_args": list(self.public_args),
            "private_writes": {k: v.hex() for k, v in
                               sorted(self.private_write_hashes.items())},
            "status": self.status,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Transaction":
        return cls(
            tx_id=d["tx_id"],
            submitter=Identity.from_dict(d["submitter"]),
            op_name=d["op_name"],
            public_args=tuple(d["public_args"]),
            private_write_hashes={k: bytes.fromhex(v)
                                  for k, v in d["private_writes"].items()},
            status=d["status"],
            reason=d["reason"],
        )


def _block_hash(height: int, prev_hash: bytes, txs: tuple[Transaction, ...]) -> bytes:
    body = {
        "height": height,
        "prev_hash": prev_hash.hex(),
        "txs": [tx.to_dict() for tx in txs],
    }
    return digest(canonical_json_bytes(body))


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    txs: tuple[Transaction, ...]
    block_hash: bytes

    @classmethod
    def build(cls, height: int, prev_hash: bytes,
              txs: tuple[Transaction, ...]) -> "Block":
        return cls(height, prev_hash, txs, _block_hash(height, prev_hash, txs))

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "txs": [tx.to_dict() for tx in self.txs],
            "block_hash": self.block_hash.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Block":
        return cls(
            height=d["height"],
            prev_hash=bytes.fromhex(d["prev_hash"]),
            txs=tuple(Transaction.from_dict(t) for t in d["txs"]),
            block_hash=bytes.fromhex(d["block_hash"]),
        )


class OrderingService(Protocol):
    """Groups committed transactions into block batches, in commit order.

    The seam where a Byzantine/consensus simulation could be plugged in.
    """

    def order(self, pending: list[Transaction]) -> list[list[Transaction]]: ...


class FifoOrderer:
    """Deterministic default: first-in-first-out, one transaction per block."""

    def order(self, pending: list[Transaction]) -> list[list[Transaction]]:
        return [[tx] for tx in pending]


class TxContext:
    """Speculative view handed to an executing contract operation.

    Reads see committed state overlaid with this transaction's own staged
    writes; nothing touches the ledger until commit.
    """

    def __init__(self, ledger: "Ledger", submitter: Identity,
                 public_args: list[str], transient: dict[str, bytes],
                 read_only: bool):
        self.ledger = ledger
        self.submitter = submitter
        self.public_args = list(public_args)
        self.transient = dict(transient)
        self._read_only = read_only
        # (collection, key) -> bytes for writes, None for deletes
        self.staged: dict[tuple[str, str], Optional[bytes]] = {}

    def collection_def(self, name: str) -> CollectionDef:
        return self.ledger.collection(name)

    def get_private(self, collection: str, key: str) -> bytes:
        self.ledger._require_read(collection, self.submitter)
        if (collection, key) in self.staged:
            value = self.staged[(collection, key)]
            if value is None:
                raise NotFound(key)
            return value
        return self.ledger._committed_get(collection, key)

    def put_private(self, collection: str, key: str, value: bytes) -> None:
        if self._read_only:
            raise UnknownOperation("read-only operation attempted a write")
        self.ledger._require_write(collection, self.submitter)
        self.staged[(collection, key)] = bytes(value)

    def delete_private(self, collection: str, key: str) -> None:
        if self._read_only:
            raise UnknownOperation("read-only operation attempted a delete")
        self.ledger._require_write(collection, self.submitter)
        self.get_private(collection, key)
        self.staged[(collection, key)] = None

    def list_private_keys(self, collection: str) -> list[str]:
        self.ledger._require_read(collection, self.submitter)
        keys = set(self.ledger._private.get(collection, {}))
        for (coll, key), value in self.staged.items():
            if coll != collection:
                continue
            if value is None:
                keys.discard(key)
            else:
                keys.add(key)
        return sorted(keys)


class Ledger:
    """World state, private stores, and the block chain for one experiment."""

    def __init__(self, orderer: Optional[OrderingService] = None):
        self.orderer = orderer or FifoOrderer()
        self.collections: dict[str, CollectionDef] = {}
        self.world_state: dict[str, bytes] = {}
        self._private: dict[str, dict[str, bytes]] = {}
        self.blocks: list[Block] = [Block.build(0, GENESIS_PREV, ())]
        self.rejected: list[Transaction] = []
        self._ops: dict[str, tuple[Callable[[TxContext], object], bool]] = {}
        self._next_tx = 1

    # -- collections and policy ------------------------------------------

    def define_collection(self, cdef: CollectionDef) -> None:
        if cdef.name in self.collections:
            raise DuplicateCollection(cdef.name)
        self.collections[cdef.name] = cdef
        self._private[cdef.name] = {}

    def collection(self, name: str) -> CollectionDef:
        try:
            return self.collections[name]
        except KeyError:
            raise NotFound(f"collection {name}") from None

    def _require_read(self, collection: str, caller: Identity) -> None:
        cdef = self.collection(collection)
        if caller.org != cdef.org or caller.role not in cdef.readers:
            raise Unauthorized(
                f"{caller.org}/{caller.role.value} cannot read {collection}")

    def _require_write(self, collection: str, caller: Identity) -> None:
        cdef = self.collection(collection)
        if caller.org != cdef.org or caller.role not in cdef.writers:
            raise Unauthorized(
                f"{caller.org}/{caller.role.value} cannot write {collection}")

    def _committed_get(self, collection: str, key: str) -> bytes:
        store = self._private.get(collection, {})
        if key not in store:
            raise NotFound(key)
        return store[key]

    def get_private(self, collection: str, key: str, caller: Identity) -> bytes:
        self._require_read(collection, caller)
        return self._committed_get(collection, key)

    # -- contract registry and execution ---------------------------------

    def register_op(self, name: str, fn: Callable[[TxContext], object],
                    read_only: bool = False) -> None:
        self._ops[name] = (fn, read_only)

    def submit(self, submitter: Identity, op_name: str,
               public_args: Optional[list[str]] = None,
               transient: Optional[dict[str, bytes]] = None) -> object:
        if op_name not in self._ops:
            raise UnknownOperation(op_name)
        fn, _ = self._ops[op_name]
        ctx = TxContext(self, submitter, public_args or [], transient or {},
                        read_only=False)
        tx_id = str(self._next_tx)
        self._next_tx += 1
        try:
            result = fn(ctx)
        except Exception as exc:
            self.rejected.append(Transaction(
                tx_id=tx_id, submitter=submitter, op_name=op_name,
                public_args=tuple(ctx.public_args), private_write_hashes={},
                status="rejected", reason=f"{type(exc).__name__}: {exc}"))
            raise
        hashes = {f"{coll}/{key}": digest(value) if value is not None
                  else TOMBSTONE_DIGEST
                  for (coll, key), value in ctx.staged.items()}
        tx = Transaction(tx_id=tx_id, submitter=submitter, op_name=op_name,
                         public_args=tuple(ctx.public_args),
                         private_write_hashes=hashes)
        for batch in self.orderer.order([tx]):
            prev = self.blocks[-1]
            self.blocks.append(Block.build(prev.height + 1, prev.block_hash,
                                           tuple(batch)))
        for (coll, key), value in ctx.staged.items():
            self.world_state[f"{coll}/{key}"] = (
                digest(value) if value is not None else TOMBSTONE_DIGEST)
            if value is None:
                self._private[coll].pop(key, None)
            else:
                self._private[coll][key] = value
        return result

    def query(self, submitter: Identity, op_name: str,
              public_args: Optional[list[str]] = None) -> object:
        if op_name not in self._ops:
            raise UnknownOperation(op_name)
        fn, read_only = self._ops[op_name]
        if not read_only:
            raise UnknownOperation(f"{op_name} is not a read-only operation")
        ctx = TxContext(self, submitter, public_args or [], {}, read_only=True)
        return fn(ctx)

    # -- integrity and persistence ----------------------------------------

    @property
    def height(self) -> int:
        return self.blocks[-1].height

    def verify_chain(self) -> bool:
        return verify_blocks(self.blocks)

    def state_digest(self) -> str:
        view = {key: value.hex() for key, value in self.world_state.items()}
        return digest(canonical_json_bytes(view)).hex()

    def save_block_log(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for block in self.blocks:
                fh.write(canonical_json(block.to_dict()) + "\n")

    def save_state(self, path: str) -> None:
        snapshot = {
            "collections": [c.to_dict() for c in self.collections.values()],
            "world_state": {k: v.hex() for k, v in self.world_state.items()},
            "private": {coll: {k: v.hex() for k, v in store.items()}
                        for coll, store in self._private.items()},
            "next_tx": self._next_tx,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(snapshot) + "\n")

    @classmethod
    def load(cls, state_path: str, block_log_path: str,
             orderer: Optional[OrderingService] = None) -> "Ledger":
        ledger = cls(orderer=orderer)
        with open(state_path, encoding="utf-8") as fh:
            snapshot = json.load(fh)
        for cd in snapshot["collections"]:
            ledger.define_collection(CollectionDef.from_dict(cd))
        ledger.world_state = {k: bytes.fromhex(v)
                              for k, v in snapshot["world_state"].items()}
        for coll, store in snapshot["private"].items():
            ledger._private.setdefault(coll, {}).update(
                {k: bytes.fromhex(v) for k, v in store.items()})
        ledger._next_tx = snapshot["next_tx"]
        ledger.blocks = load_block_log(block_log_path)
        ledger.verify_chain()
        return ledger


def verify_blocks(blocks: list[Block]) -> bool:
    """Recompute every hash and link; raise ChainBroken at the first bad height."""
    for i, block in enumerate(blocks):
        if block.height != i:
            raise ChainBroken(block.height)
        prev = GENESIS_PREV if i == 0 else blocks[i - 1].block_hash
        if block.prev_hash != prev:
            raise ChainBroken(block.height)
        if _block_hash(block.height, block.prev_hash, block.txs) != block.block_hash:
            raise ChainBroken(block.height)
    return True


def load_block_log(path: str) -> list[Block]:
    """Parse and verify a persisted block log; ChainBroken names the bad height."""
    blocks: list[Block] = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                blocks.append(Block.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError):
                raise ChainBroken(i) from None
    verify_blocks(blocks)
    return blocks


def replay_world_state(blocks: list[Block]) -> dict[str, bytes]:
    """Rebuild the world state digests by applying committed writes in order."""
    world: dict[str, bytes] = {}
    for block in blocks:
        for tx in block.txs:
            if tx.status != "committed":
                continue
            world.update(tx.private_write_hashes)
    return world
