"""Confidence, evidence, reputation, trust: one faulty device unmasked.

Three anchors at known positions range a target honestly; a fourth reports
a two-millimetre distance from across the room. Each anchor's evidence is
the average vote of its neighbors, where a neighbor supports the observation
exactly when the two ranging circles could belong to one target (triangle
inequality on the center distance). Reputation then steps up or down, and
trust is the product of all three signals.
"""

from trustloc.domain import ExperimentParams
from trustloc.trust import (NeighborView, confidence, evidence, trust,
                            triangle_supports, update_reputation)


def main() -> None:
    p = ExperimentParams()

    print("confidence from signal strength:")
    for rssi in (-45.0, -50.0, -60.0, -74.0, -80.0):
        print(f"  {rssi:6.1f} dBm -> {confidence(rssi, p):.3f}")

    honest = [
        NeighborView(id="1", x=3, y=2, dist=4.242, conf=1.0),
        NeighborView(id="2", x=10, y=4, dist=4.123, conf=1.0),
        NeighborView(id="3", x=5, y=8, dist=3.162, conf=1.0),
    ]
    liar = NeighborView(id="5", x=3, y=2, dist=0.002, conf=1.0)

    print("\npairwise triangle checks against the liar:")
    for nb in honest[1:]:
        ok = triangle_supports((liar.x, liar.y), liar.dist,
                               (nb.x, nb.y), nb.dist)
        print(f"  device {nb.id} supports device 5: {ok}")

    print("\none trust update per device (reputation starts at 5):")
    for own, neighbors in [
        (honest[0], [honest[1], honest[2]]),
        (honest[1], [honest[0], honest[2]]),
        (honest[2], [honest[1], honest[0]]),
        (liar, [honest[2], honest[1]]),
    ]:
        evi = evidence(own, neighbors)
        rep = update_reputation(5.0, own.conf, evi, p)
        score = trust(own.conf, rep, evi)
        print(f"  device {own.id}: evidence {evi:+.0f}, reputation {rep:.0f},"
              f" trust {score:+.0f}")

    print("\nthe liar's trust went negative; position selection will skip it.")


if __name__ == "__main__":
    main()
