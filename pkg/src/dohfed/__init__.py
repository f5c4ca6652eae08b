"""Continuous decentralized federated learning for DoH tunnel detection.

Incremental classifiers (SGD linear models, Hoeffding trees, online random
forests) are trained by a set of entities on their own flow batches and
combined round by round under four sharing regimes: no federation, a central
aggregator, a full peer mesh, and random gossip.
"""
from .data import (
    BENIGN,
    MALICIOUS,
    DatasetSplit,
    EntityShard,
    FlowRecord,
    FlowSchema,
    FlowSet,
    PartitionSpec,
    disjoint_attack_spec,
    generate_synthetic,
    load_flow_csv,
    make_batches,
    partition_by_entity,
    split_validation,
)
from .features import Preprocessor, fit_pca, fit_preprocessor, fit_standardizer, sweep_components, transform
from .federation import (
    SCENARIOS,
    CommLedger,
    ScenarioConfig,
    Simulation,
    build_topology,
    comm_cost_model,
    gossip_pairing,
    run_scenario,
)
from .metrics import ConfusionCounts, compute_metrics, confusion

__version__ = "0.1.0"
