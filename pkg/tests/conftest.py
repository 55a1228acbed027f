"""Shared fixtures: the reference five-device experiment and its identities."""

from __future__ import annotations

import copy

import pytest

from trustloc.cli import Experiment, build_experiment, init_experiment
from trustloc.domain import DeviceRecord, ExperimentParams, Identity, Role

DEVICES_COLL = "DeviceAdmin1PrivateCollection"
TARGET_COLL = "TargetOrg1PrivateCollection"

# One line per acceptance criterion, echoed into the terminal summary.
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)

REFERENCE_DOC = {
    "params": {},
    "orgs": [
        {
            "name": "org1",
            "collections": [
                {"name": DEVICES_COLL, "readers": ["admin"],
                 "writers": ["admin"]},
                {"name": TARGET_COLL, "readers": ["admin", "user"],
                 "writers": ["admin"]},
            ],
            "identities": [
                {"name": "admin1", "role": "admin"},
                {"name": "user1", "role": "user"},
            ],
        },
        {
            "name": "org2",
            "collections": [
                {"name": "DeviceAdmin2PrivateCollection",
                 "readers": ["admin"], "writers": ["admin"]},
                {"name": "TargetOrg2PrivateCollection",
                 "readers": ["admin", "user"], "writers": ["admin"]},
            ],
            "identities": [
                {"name": "admin2", "role": "admin"},
                {"name": "user2", "role": "user"},
            ],
        },
    ],
    "devices": [
        {"id": "1", "x": 3, "y": 2, "neighbors": ["2", "3"], "key": "P",
         "conf": 1, "dist": 4242, "rep": 5},
        {"id": "2", "x": 10, "y": 4, "neighbors": ["1", "3"], "key": "Q",
         "conf": 1, "dist": 4123, "rep": 5},
        {"id": "3", "x": 5, "y": 8, "neighbors": ["2", "1"], "key": "R",
         "conf": 1, "dist": 3162, "rep": 5},
        {"id": "4", "x": 1, "y": 1, "neighbors": ["1"], "key": "S",
         "conf": 8, "dist": 0, "rep": 5},
        {"id": "5", "x": 3, "y": 2, "neighbors": ["3", "2"], "key": "T",
         "conf": 1, "dist": 2, "rep": 5},
    ],
    "target": "7",
    "sim": {
        "anchors": [
            {"id": "1", "x": 3, "y": 2, "key": "P"},
            {"id": "2", "x": 10, "y": 4, "key": "Q"},
            {"id": "3", "x": 5, "y": 8, "key": "R"},
        ],
        "target": {"id": "7", "x": 6, "y": 5},
        "range_noise_sigma": 0.0,
        "seed": 42,
    },
}


def reference_doc(device_ids=None, with_sim=True) -> dict:
    """Deep copy of the reference experiment, optionally restricted."""
    doc = copy.deepcopy(REFERENCE_DOC)
    if device_ids is not None:
        doc["devices"] = [d for d in doc["devices"] if d["id"] in device_ids]
    if not with_sim:
        doc.pop("sim")
    return doc


def built_experiment(device_ids=None, params=None, with_sim=True,
                     clock=None) -> Experiment:
    doc = reference_doc(device_ids, with_sim)
    if params:
        doc["params"] = {**doc["params"], **params}
    exp = build_experiment(doc, clock)
    init_experiment(exp)
    return exp


@pytest.fixture
def params() -> ExperimentParams:
    return ExperimentParams()


@pytest.fixture
def exp() -> Experiment:
    """Five devices, target 7, both orgs, initialized."""
    return built_experiment()


@pytest.fixture
def exp123() -> Experiment:
    """Only the three consistent devices, initialized."""
    return built_experiment(device_ids={"1", "2", "3"})


@pytest.fixture
def identities() -> dict[str, Identity]:
    return {
        "admin1": Identity("admin1", "org1", Role.ADMIN),
        "user1": Identity("user1", "org1", Role.USER),
        "admin2": Identity("admin2", "org2", Role.ADMIN),
        "user2": Identity("user2", "org2", Role.USER),
    }


def seeded_record(device_id: str) -> DeviceRecord:
    """The seeded DeviceRecord for one reference device (key byte applied)."""
    for dev in REFERENCE_DOC["devices"]:
        if dev["id"] == device_id:
            return DeviceRecord(
                id=dev["id"], decrypt_key=ord(dev["key"]), x=dev["x"],
                y=dev["y"], dist=dev["dist"], conf=dev["conf"],
                rep=dev["rep"], neighbors=tuple(dev["neighbors"]))
    raise KeyError(device_id)
