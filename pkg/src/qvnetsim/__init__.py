"""Deterministic simulator and policy engine for virtual QKD networks.

Physical trunks between trusted nodes are split by quota into virtual
links; same-id virtual links form virtual networks with their own
forwarding behavior, routing, access rules, and schedules.  The engine
serves key requests tick by tick with exact rational accounting and can
rebalance quotas from observed demand.
"""

from .behavior import (
    Allocation,
    LpInstance,
    build_lp,
    qvnet_capacities,
    solve_behavior,
    verify_allocation,
)
from .engine import CSV_COLUMNS, MetricsReport, TickRow, emit_metrics, run
from .errors import DenialReason, QvnetError, ValidationError
from .keymat import (
    BLOCK_BYTES,
    KeyBlock,
    KeyVault,
    RelayMode,
    RelayTranscript,
    reconstruct_end_key,
    xor_bytes,
)
from .kms import KeyGrant, KeyRequest, KeyService, LedgerEntry
from .qvnet import (
    AccessRule,
    Behavior,
    BehaviorKind,
    QVNet,
    RoutingKind,
    RoutingPolicy,
    assemble_qvnet,
    authorize,
)
from .scenario import Scenario, load_scenario, load_scenario_text
from .topology import (
    NetworkGraph,
    Path,
    PhysicalLink,
    build_graph,
    enumerate_paths,
    link_pair,
    validate_connectivity,
)
from .updater import DemandStats, UpdateRule, rebalance
from .virtlink import (
    QVLink,
    SplitResult,
    TrunkKind,
    TrunkLink,
    resolve_contention,
    split_trunk,
)

__all__ = [
    "Allocation",
    "AccessRule",
    "BLOCK_BYTES",
    "Behavior",
    "BehaviorKind",
    "CSV_COLUMNS",
    "DemandStats",
    "DenialReason",
    "KeyBlock",
    "KeyGrant",
    "KeyRequest",
    "KeyService",
    "KeyVault",
    "LedgerEntry",
    "LpInstance",
    "MetricsReport",
    "NetworkGraph",
    "Path",
    "PhysicalLink",
    "QVLink",
    "QVNet",
    "QvnetError",
    "RelayMode",
    "RelayTranscript",
    "RoutingKind",
    "RoutingPolicy",
    "Scenario",
    "SplitResult",
    "TickRow",
    "TrunkKind",
    "TrunkLink",
    "UpdateRule",
    "ValidationError",
    "assemble_qvnet",
    "authorize",
    "build_graph",
    "build_lp",
    "emit_metrics",
    "enumerate_paths",
    "link_pair",
    "load_scenario",
    "load_scenario_text",
    "qvnet_capacities",
    "rebalance",
    "reconstruct_end_key",
    "resolve_contention",
    "run",
    "solve_behavior",
    "split_trunk",
    "validate_connectivity",
    "verify_allocation",
    "xor_bytes",
]
