"""
Four ways to federate
=====================

No sharing, a central server, a full mesh, and gossip. The ledger records
every model that crosses the wire.
"""

import numpy as np

from dohfed.data import disjoint_attack_spec, generate_synthetic, split_validation
from dohfed.federation import SCENARIOS, SERVER, ScenarioConfig, comm_cost_model, run_scenario
from dohfed.features import fit_preprocessor
from dohfed.models import loads_model

split = split_validation(generate_synthetic(disjoint_attack_spec(), seed=0), 0.1, 0.1, seed=0)
pre = fit_preprocessor(np.concatenate([s.train.X for s in split.shards]))

###############################################################################
# Accuracy on the global validation set after 20 rounds, and bytes moved.

for kind in ("svm", "dt", "rf"):
    for scenario in SCENARIOS:
        cfg = ScenarioConfig(scenario=scenario, model_kind=kind, rounds=20, batch_size=50, pca_k=4)
        res = run_scenario(cfg, split, pre)
        print(f"{kind:3s} {scenario:10s} accuracy {res.mean_final_accuracy():.3f}  bytes {res.ledger.total_bytes:>9,}")

###############################################################################
# For linear models every serialized model has the same size B, so the
# ledger matches the closed-form cost exactly.

cfg = ScenarioConfig(model_kind="svm", rounds=1, batch_size=50, pca_k=4)
for scenario in SCENARIOS:
    res = run_scenario(ScenarioConfig(**{**cfg.to_dict(), "scenario": scenario}), split, pre)
    B = len(res.models[0].encode())
    print(f"{scenario:10s} ledger {res.ledger.total_bytes:6d}  closed form {comm_cost_model(scenario, 4, B):6d}")

###############################################################################
# Averaging is order-independent, so the server's broadcast and each
# full-mesh node's average are the same model.

runs = {s: run_scenario(ScenarioConfig(scenario=s, model_kind="lr", rounds=5, batch_size=50, pca_k=4), split, pre,
                        keep_history=True) for s in ("CFL", "DFL")}
for r, (c, d) in enumerate(zip(runs["CFL"].history, runs["DFL"].history), start=1):
    server, node = loads_model(c[SERVER]), loads_model(d[2])
    print(f"round {r}: max |difference| = {np.max(np.abs(server.weights - node.weights))}")
