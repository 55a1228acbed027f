"""How a ranging device protects its report on the way to the gateway.

The device renders one observation line, hashes it, XOR-encrypts everything
but the trailing newline, and ships the triple (device id, digest, payload).
The gateway decrypts with the key stored for that device id and recomputes
the digest. Any tampering, key mismatch, or misrouted envelope fails loudly.
"""

from trustloc.crypto import (AuthenticityFailure, Envelope, IntegrityFailure,
                             open_envelope, seal)


def main() -> None:
    line = b"OBS 1 7 4242 1.0\n"
    key = 0x50

    env = seal(line, "1", key)
    print("plaintext:  ", line)
    print("wire form:  ", env.to_wire())
    print("payload keeps the newline visible:", env.payload[-1:])

    opened = open_envelope(env, key, expected_device_id="1")
    print("round trip: ", opened)
    assert opened == line

    # one flipped payload bit -> digest mismatch
    tampered = bytearray(env.payload)
    tampered[5] ^= 0x04
    try:
        open_envelope(Envelope("1", env.digest, bytes(tampered)), key, "1")
    except IntegrityFailure as exc:
        print("tampered payload rejected:", type(exc).__name__)

    # decrypting with another device's key garbles the line
    try:
        open_envelope(env, 0x51, "1")
    except IntegrityFailure as exc:
        print("wrong key rejected:       ", type(exc).__name__)

    # an envelope claiming to come from device 2 is refused before decryption
    try:
        open_envelope(env, key, expected_device_id="2")
    except AuthenticityFailure as exc:
        print(f"misrouted envelope:        expected {exc.expected},"
              f" got {exc.actual}")


if __name__ == "__main__":
    main()
