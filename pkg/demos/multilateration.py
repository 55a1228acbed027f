"""From round-trip timestamps to a target position.

Two-way ranging turns a timestamp pair into a distance; each anchor's
distance defines a circle. The two most trusted anchors intersect in up to
two candidate points and the third circle arbitrates: the candidate with the
smaller absolute residual wins, provided it clears the residual gate.
"""

from trustloc.domain import DeviceRecord
from trustloc.localization import (NotComputable, intersect_circles,
                                   multilaterate, residual, select_anchors,
                                   tof_distance)


def main() -> None:
    print("two-way ranging, 1 ms turnaround:")
    t2 = 1e-3
    for extra_ns in (2, 20, 28.3):
        t1 = t2 + extra_ns * 1e-9
        print(f"  t1 - t2 = {extra_ns:5.1f} ns -> "
              f"{tof_distance(t1, t2):.4f} m")

    print("\ncircle intersection, the 3-4-5 classic:")
    result = intersect_circles((0, 0), 5.0, (8, 0), 5.0)
    print(f"  kind {result.kind.value}, points {result.points}")

    anchors = [
        DeviceRecord(id="1", decrypt_key=0, x=3, y=2, dist=4242, trust=7.0),
        DeviceRecord(id="2", decrypt_key=0, x=10, y=4, dist=4123, trust=7.0),
        DeviceRecord(id="3", decrypt_key=0, x=5, y=8, dist=3162, trust=7.0),
        DeviceRecord(id="5", decrypt_key=0, x=3, y=2, dist=2, trust=-2.0),
    ]
    top3 = select_anchors(anchors, 3)
    print("\ntop three by trust:", [a.id for a in top3])

    point = multilaterate(top3, max_error=0.01)
    print(f"  position ({point[0]:.4f}, {point[1]:.4f})")
    third = top3[2]
    print(f"  third-circle residual {residual(point, third.center, third.radius):+.6f}")

    # forcing the lying anchor into the top three breaks the residual gate
    bad = select_anchors([anchors[0], anchors[1], anchors[3]], 3)
    try:
        multilaterate(bad, max_error=0.01)
    except NotComputable as exc:
        print(f"\nwith the liar ranked in: NotComputable ({exc.reason.value})")


if __name__ == "__main__":
    main()
