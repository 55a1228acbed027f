"""Trust-managed indoor localization on a simulated permissioned ledger.

Anchors range a target over simulated two-way ranging, seal their
observations into encrypted envelopes, and a gateway batches them into a
private-data ledger where a contract scores confidence, evidence,
reputation, and trust before multilaterating the target position from the
three most trusted anchors.
"""

from .domain import (DeviceRecord, ExperimentParams, Identity, Observation,
                     Role, TargetRecord, validate_params)

__all__ = [
    "DeviceRecord",
    "ExperimentParams",
    "Identity",
    "Observation",
    "Role",
    "TargetRecord",
    "validate_params",
]

__version__ = "0.1.0"
