"""The whole pipeline in one sitting.

Load the experiment file, seed devices and target on the ledger, let the
simulated anchors range the target through sealed envelopes, and watch the
gateway run its three phases: batch-averaged observations, trust updates,
position calculation. Finish with role-gated reads and a chain audit.
"""

import json
from pathlib import Path

from trustloc import devicesim
from trustloc.cli import build_experiment, init_experiment
from trustloc.contract import NotUpdated
from trustloc.gateway import Gateway

EXPERIMENT_FILE = Path(__file__).with_name("experiment.json")


def main() -> None:
    doc = json.loads(EXPERIMENT_FILE.read_text(encoding="utf-8"))
    exp = build_experiment(doc)
    init_experiment(exp)
    print(f"initialized {len(exp.device_seeds)} devices and target"
          f" {exp.target_id} at height {exp.ledger.height}")

    user = exp.identities["user1"]
    try:
        exp.ledger.query(user, "ReadTarget", [exp.target_collection])
    except NotUpdated:
        print("user read before any position: NotUpdated")

    feed = devicesim.emit_feed(exp.sim, rounds=exp.params.batch_size,
                               params=exp.params)
    print(f"\nsimulated feed: {len(feed)} sealed envelopes, e.g.")
    print(" ", feed[0][:88], "...")

    gw = Gateway(exp.ledger, exp.admin, exp.params, exp.devices_collection,
                 exp.target_collection, [a.id for a in exp.sim.anchors])
    for report in gw.poll_loop(feed):
        print(f"\ncycle {report.cycle}:")
        for phase, ms in report.phase_ms.items():
            print(f"  {phase:<12} {ms:7.3f} ms")
        print(f"  position     ({report.position[0]:.4f},"
              f" {report.position[1]:.4f})")

    record = exp.ledger.query(user, "ReadTarget", [exp.target_collection])
    print(f"\nuser read after the cycle: ({record['x']:.4f},"
          f" {record['y']:.4f}) at {record['timestamp']}")

    for device_id in ("1", "2", "3"):
        dev = exp.ledger.query(exp.admin, "ReadDevice",
                               [exp.devices_collection, device_id])
        print(f"device {device_id}: conf {dev['conf']:.3f}"
              f" rep {dev['rep']:.0f} trust {dev['trust']:.2f}")

    print(f"\nchain height {exp.ledger.height}, verifies:"
          f" {exp.ledger.verify_chain()}")


if __name__ == "__main__":
    main()
