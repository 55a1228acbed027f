"""What the shared chain sees, and what it never sees.

Device records and decryption keys travel as transient arguments into
per-org private collections; blocks carry only routing arguments and
write digests. Reads are gated by org and role, every rejected call is
audited, and the whole chain replays to the same world state.
"""

import json

from trustloc.cli import build_experiment, init_experiment
from trustloc.ledger import Unauthorized, replay_world_state

EXPERIMENT = {
    "params": {},
    "orgs": [
        {
            "name": "org1",
            "collections": [
                {"name": "DeviceAdmin1PrivateCollection",
                 "readers": ["admin"], "writers": ["admin"]},
                {"name": "TargetOrg1PrivateCollection",
                 "readers": ["admin", "user"], "writers": ["admin"]},
            ],
            "identities": [
                {"name": "admin1", "role": "admin"},
                {"name": "user1", "role": "user"},
            ],
        },
        {
            "name": "org2",
            "collections": [],
            "identities": [{"name": "admin2", "role": "admin"}],
        },
    ],
    "devices": [
        {"id": "1", "x": 3, "y": 2, "neighbors": ["2"], "key": "P"},
        {"id": "2", "x": 10, "y": 4, "neighbors": ["1"], "key": "Q"},
    ],
    "target": "7",
}


def main() -> None:
    exp = build_experiment(EXPERIMENT)
    init_experiment(exp)
    devices = exp.devices_collection

    block = exp.ledger.blocks[1]
    tx = block.txs[0]
    print("block 1 records the device creation:")
    print("  op          ", tx.op_name)
    print("  public args ", list(tx.public_args))
    print("  write digest", next(iter(tx.private_write_hashes.values())).hex())

    serialized = json.dumps([b.to_dict() for b in exp.ledger.blocks])
    print("\nrecord plaintext on the chain?",
          '"neighbors"' in serialized or '"decrypt_key"' in serialized)

    record = exp.ledger.query(exp.admin, "ReadDevice", [devices, "1"])
    print("org1 admin reads device 1:", {k: record[k] for k in ("id", "x", "y")})

    for name in ("user1", "admin2"):
        try:
            exp.ledger.query(exp.identities[name], "ReadDevice", [devices, "1"])
        except Unauthorized:
            print(f"{name} denied on the devices collection")

    try:
        exp.ledger.submit(exp.identities["user1"], "DeleteDevice",
                          [devices, "1"])
    except Unauthorized:
        pass
    print("audited rejection:", exp.ledger.rejected[-1].reason)

    print("\nchain verifies:", exp.ledger.verify_chain())
    print("replay matches: ",
          replay_world_state(exp.ledger.blocks) == exp.ledger.world_state)


if __name__ == "__main__":
    main()
