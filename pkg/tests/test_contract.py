"""Contract operations: lifecycle, validation, trust updates, position."""

import json
from datetime import datetime, timezone

import pytest

from conftest import DEVICES_COLL, TARGET_COLL, built_experiment
from trustloc.contract import (DuplicateDevice, EmptyUpdate, InvalidConfidence,
                               NotUpdated, TargetExists, observation_transient)
from trustloc.domain import DeviceRecord, SelfNeighbor, canonical_json_bytes
from trustloc.ledger import NotFound, Unauthorized


def read_device(exp, device_id):
    return exp.ledger.query(exp.admin, "ReadDevice",
                            [DEVICES_COLL, device_id])


def read_target(exp, caller=None):
    return exp.ledger.query(caller or exp.admin, "ReadTarget", [TARGET_COLL])


def update_all_observations(exp, ids=("1", "2", "3")):
    for device_id in ids:
        seed = read_device(exp, device_id)
        exp.ledger.submit(exp.admin, "UpdateObservation",
                          [DEVICES_COLL, device_id],
                          observation_transient(seed["dist"], seed["conf"]))


# -- device lifecycle ---------------------------------------------------------

def test_create_device_stores_key_from_transient(exp123):
    record = read_device(exp123, "1")
    assert record["decrypt_key"] == ord("P")
    assert record["x"] == 3 and record["y"] == 2
    assert record["neighbors"] == ["2", "3"]


def test_duplicate_device_rejected(exp123):
    rec = DeviceRecord(id="1", decrypt_key=0, x=0, y=0)
    with pytest.raises(DuplicateDevice):
        exp123.ledger.submit(exp123.admin, "CreateDevice", [DEVICES_COLL],
                             {"device": rec.to_bytes(), "key": b"\x50"})


def test_update_device_neighbors_only_changes_neighbors(exp123):
    before = read_device(exp123, "1")
    exp123.ledger.submit(exp123.admin, "UpdateDeviceConfig",
                         [DEVICES_COLL, "1"],
                         {"neighbors": canonical_json_bytes(["3"])})
    after = read_device(exp123, "1")
    assert after["neighbors"] == ["3"]
    changed = {k for k in before if before[k] != after[k]}
    assert changed == {"neighbors"}


def test_update_device_key_only_changes_key(exp123):
    exp123.ledger.submit(exp123.admin, "UpdateDeviceConfig",
                         [DEVICES_COLL, "1"], {"key": b"\x41"})
    assert read_device(exp123, "1")["decrypt_key"] == 0x41


def test_update_device_with_nothing_is_rejected(exp123):
    with pytest.raises(EmptyUpdate):
        exp123.ledger.submit(exp123.admin, "UpdateDeviceConfig",
                             [DEVICES_COLL, "1"], {})


def test_update_device_self_neighbor_rejected(exp123):
    with pytest.raises(SelfNeighbor):
        exp123.ledger.submit(exp123.admin, "UpdateDeviceConfig",
                             [DEVICES_COLL, "1"],
                             {"neighbors": canonical_json_bytes(["1", "2"])})


def test_update_missing_device_not_found(exp123):
    with pytest.raises(NotFound):
        exp123.ledger.submit(exp123.admin, "UpdateDeviceConfig",
                             [DEVICES_COLL, "9"],
                             {"neighbors": canonical_json_bytes(["1"])})


def test_delete_device_then_read_not_found(exp):
    exp.ledger.submit(exp.admin, "DeleteDevice", [DEVICES_COLL, "4"])
    with pytest.raises(NotFound):
        read_device(exp, "4")


def test_delete_device_twice_not_found(exp):
    exp.ledger.submit(exp.admin, "DeleteDevice", [DEVICES_COLL, "4"])
    with pytest.raises(NotFound):
        exp.ledger.submit(exp.admin, "DeleteDevice", [DEVICES_COLL, "4"])


# -- target lifecycle -----------------------------------------------------------

def test_second_target_rejected(exp123):
    with pytest.raises(TargetExists):
        exp123.ledger.submit(exp123.admin, "CreateTarget", [TARGET_COLL, "8"])


def test_delete_target_allows_recreation(exp123):
    exp123.ledger.submit(exp123.admin, "DeleteTarget", [TARGET_COLL])
    with pytest.raises(NotFound):
        exp123.ledger.submit(exp123.admin, "DeleteTarget", [TARGET_COLL])
    exp123.ledger.submit(exp123.admin, "CreateTarget", [TARGET_COLL, "8"])
    assert read_target(exp123)["id"] == "8"


def test_fresh_target_is_not_updated(exp123):
    record = read_target(exp123)
    assert record["updated"] is False and record["timestamp"] is None


# -- observations --------------------------------------------------------------

def test_update_observation_replaces_dist_and_conf(exp123):
    exp123.ledger.submit(exp123.admin, "UpdateObservation",
                         [DEVICES_COLL, "1"], observation_transient(4242, 1.0))
    record = read_device(exp123, "1")
    assert record["dist"] == 4242 and record["conf"] == 1.0


def test_observation_conf_8_rejected(exp):
    state_before = exp.ledger.state_digest()
    with pytest.raises(InvalidConfidence):
        exp.ledger.submit(exp.admin, "UpdateObservation",
                          [DEVICES_COLL, "4"], observation_transient(4242, 8.0))
    assert exp.ledger.state_digest() == state_before


def test_observation_conf_below_min_rejected(exp123):
    with pytest.raises(InvalidConfidence):
        exp123.ledger.submit(exp123.admin, "UpdateObservation",
                             [DEVICES_COLL, "1"],
                             observation_transient(4242, 0.39))


def test_observation_for_missing_device(exp123):
    with pytest.raises(NotFound):
        exp123.ledger.submit(exp123.admin, "UpdateObservation",
                             [DEVICES_COLL, "9"],
                             observation_transient(100, 1.0))


# -- trust updates ----------------------------------------------------------------

def test_good_device_trust_state(exp123):
    update_all_observations(exp123)
    exp123.ledger.submit(exp123.admin, "UpdateTrustState", [DEVICES_COLL, "1"])
    record = read_device(exp123, "1")
    assert record["evi"] == 1.0
    assert record["rep"] == 7.0
    assert record["trust"] == 7.0


def test_faulty_device_trust_state(exp):
    exp.ledger.submit(exp.admin, "UpdateTrustState", [DEVICES_COLL, "5"])
    record = read_device(exp, "5")
    assert record["evi"] == -1.0
    assert record["rep"] == 2.0
    assert record["trust"] == -2.0


def test_missing_neighbor_aborts_with_its_id(exp123):
    exp123.ledger.submit(exp123.admin, "UpdateDeviceConfig",
                         [DEVICES_COLL, "1"],
                         {"neighbors": canonical_json_bytes(["2", "9"])})
    with pytest.raises(NotFound) as exc:
        exp123.ledger.submit(exp123.admin, "UpdateTrustState",
                             [DEVICES_COLL, "1"])
    assert exc.value.what == "9"


def test_reputation_steps_once_per_call(exp123):
    for expected in (7.0, 9.0):
        exp123.ledger.submit(exp123.admin, "UpdateTrustState",
                             [DEVICES_COLL, "1"])
        assert read_device(exp123, "1")["rep"] == expected


# -- position ---------------------------------------------------------------------

def test_calculate_position_reference_trio(exp123):
    result = exp123.ledger.submit(exp123.admin, "CalculatePosition",
                                  [DEVICES_COLL, TARGET_COLL])
    assert result["x"] == pytest.approx(6.0, abs=1e-2)
    assert result["y"] == pytest.approx(5.0, abs=1e-2)
    record = read_target(exp123)
    assert record["updated"] is True
    assert record["timestamp"] is not None


def test_position_timestamp_comes_from_injected_clock():
    fixed = datetime(2024, 6, 1, 12, 0, tzinfo=timezone.utc)
    exp = built_experiment(device_ids={"1", "2", "3"})
    exp.contract.clock = lambda: fixed
    exp.ledger.submit(exp.admin, "CalculatePosition",
                      [DEVICES_COLL, TARGET_COLL])
    assert read_target(exp)["timestamp"] == fixed.isoformat()


def test_not_computable_commits_updated_false():
    exp = built_experiment(device_ids={"1", "2", "5"})
    result = exp.ledger.submit(exp.admin, "CalculatePosition",
                               [DEVICES_COLL, TARGET_COLL])
    assert result == {"not_computable": "ResidualTooLarge"}
    record = read_target(exp)
    assert record["updated"] is False


def test_four_device_scenario_recovers_position(exp):
    exp.ledger.submit(exp.admin, "DeleteDevice", [DEVICES_COLL, "4"])
    for device_id in ("1", "2", "3", "5"):
        exp.ledger.submit(exp.admin, "UpdateTrustState",
                          [DEVICES_COLL, device_id])
    assert read_device(exp, "5")["trust"] == -2.0
    result = exp.ledger.submit(exp.admin, "CalculatePosition",
                               [DEVICES_COLL, TARGET_COLL])
    assert result["x"] == pytest.approx(6.0, abs=1e-2)
    assert result["y"] == pytest.approx(5.0, abs=1e-2)


def test_too_few_devices_for_position():
    exp = built_experiment(device_ids={"1", "2"})
    with pytest.raises(Exception) as exc:
        exp.ledger.submit(exp.admin, "CalculatePosition",
                          [DEVICES_COLL, TARGET_COLL])
    assert type(exc.value).__name__ == "InsufficientAnchors"


def test_failed_position_never_sets_updated_true():
    exp = built_experiment(device_ids={"1", "2", "5"})
    exp.ledger.submit(exp.admin, "CalculatePosition",
                      [DEVICES_COLL, TARGET_COLL])
    assert read_target(exp)["updated"] is False


# -- reads -----------------------------------------------------------------------

def test_user_read_before_update_not_updated(exp123):
    user1 = exp123.identities["user1"]
    with pytest.raises(NotUpdated):
        read_target(exp123, user1)


def test_user_read_after_update_succeeds(exp123):
    exp123.ledger.submit(exp123.admin, "CalculatePosition",
                         [DEVICES_COLL, TARGET_COLL])
    record = read_target(exp123, exp123.identities["user1"])
    assert record["x"] == pytest.approx(6.0, abs=1e-2)


def test_admin_reads_stale_target(exp123):
    assert read_target(exp123)["updated"] is False


def test_read_all_device_ids_sorted(exp):
    ids = exp.ledger.query(exp.admin, "ReadAllDeviceIds", [DEVICES_COLL])
    assert ids == ["1", "2", "3", "4", "5"]


def test_read_all_device_ids_empty():
    exp = built_experiment(device_ids=set())
    assert exp.ledger.query(exp.admin, "ReadAllDeviceIds", [DEVICES_COLL]) == []


def test_read_missing_device(exp123):
    with pytest.raises(NotFound):
        read_device(exp123, "42")


# -- cross-cutting ------------------------------------------------------------------

def test_decrypt_keys_never_appear_in_blocks(exp):
    serialized = "".join(json.dumps(b.to_dict()) for b in exp.ledger.blocks)
    for key_char in "PQRST":
        token = f'"decrypt_key":{ord(key_char)}'
        assert token not in serialized


def test_trust_update_idempotent_evidence(exp123):
    exp123.ledger.submit(exp123.admin, "UpdateTrustState", [DEVICES_COLL, "1"])
    first = read_device(exp123, "1")["evi"]
    exp123.ledger.submit(exp123.admin, "UpdateTrustState", [DEVICES_COLL, "1"])
    assert read_device(exp123, "1")["evi"] == first
