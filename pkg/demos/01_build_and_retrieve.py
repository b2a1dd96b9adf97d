"""Generate a synthetic world, build a descriptor map, and retrieve.

Walks the minimal pipeline: seeded world generation, a briefly trained
embedding model, map construction over the reference images, and
nearest-neighbor place lookup for each query, scored as Recall@N.
"""

import numpy as np

import vprkit as vk
from vprkit.presets import domain_gap_pair

# A pair of synthetic worlds with a deliberate appearance gap between
# them; here we only need the first one.
world, _ = domain_gap_pair()
print(f"world: {len(world.references)} references, {len(world.queries)} queries")

# Train the descriptor head for a few epochs on the world's own labeled
# queries. Validation selects the best epoch.
train_split, val_split = vk.split_validation(world, 0.3, seed=5)
model, log = vk.train(
    vk.init_model(seed=7),
    train_split,
    vk.TrainConfig(epochs=4, learning_rate=1e-3, batch_size=16, seed=100),
    validation=val_split,
)
print(f"trained {len(log.epoch_mean_loss)} epochs, selected epoch {log.selected_epoch}")

# The map is just the encoded reference set plus poses and ids.
dmap = vk.build_map(world, model)
print(f"map: {dmap.size} descriptors of dim {dmap.descriptor_dim}")

# Retrieve the top-3 references for the first few queries.
for query in world.queries[:5]:
    desc = vk.forward(model, vk.extract_raw(query))
    result = vk.knn(dmap, desc, k=3, query_id=query.id)
    names = ", ".join(f"{dmap.ids[i]} ({d:.3f})" for i, d in result.ranked)
    print(f"  {query.id} -> {names}")

# Score the whole query set: a retrieval counts as correct when the
# top-ranked reference lies within 25 m of the query's true pose.
report = vk.evaluate_model(model, world, ns=(1, 5))
for n, r in zip(report.ns, report.recalls):
    print(f"Recall@{n} = {r:.3f}")
