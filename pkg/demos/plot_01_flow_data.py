"""
Partitioning flows by resolver and carving validation sets
===========================================================

A synthetic four-entity dataset stands in for a DoH capture. Each entity
sees the same benign traffic but only one kind of attack.
"""

import numpy as np

from dohfed.data import (
    disjoint_attack_spec,
    generate_synthetic,
    make_batches,
    split_validation,
)

spec = disjoint_attack_spec(n_entities=4, dimension=4, benign_per_entity=700, attack_per_entity=700)
entities = generate_synthetic(spec, seed=0)
for e, flows in entities.items():
    print(f"entity {e}: {len(flows)} flows, {flows.n_malicious} malicious, "
          f"attack centre {np.round(flows.X[flows.y == 1].mean(axis=0), 1)}")

###############################################################################
# 10% of all flows become the global validation set, then 10% of what each
# entity has left becomes its local validation set. Nothing overlaps.

split = split_validation(entities, global_fraction=0.10, local_fraction=0.10, seed=0)
print("global validation:", len(split.global_validation),
      "covering entities", sorted(set(split.global_validation.entity_id.tolist())))
for shard in split.shards:
    print(f"entity {shard.entity_id}: train {len(shard.train)}, local validation {len(shard.local_validation)}")

###############################################################################
# Training data arrives in stratified batches, one per federation round.

shard = split.shard(0)
schedule = make_batches(shard, batch_size=50, rounds=20, seed=0)
per_batch = [int(shard.train.y[b].sum()) for b in schedule.batches]
print("malicious flows per batch:", per_batch)
print("train proportion x 50 =", round(shard.train.y.mean() * 50, 2))
