"""Close a domain gap by finetuning on the test-time reference set.

A model trained in world A performs poorly in world B, whose queries
have a strong appearance shift. Reference-set finetuning adapts the
model using only world B's reference images — the map we would have
anyway — by synthesizing training queries through seeded augmentations.
World B's real queries are never touched during finetuning.
"""

import dataclasses

import vprkit as vk
from vprkit.presets import domain_gap_pair

world_a, world_b = domain_gap_pair()
train_a, val_a = vk.split_validation(world_a, 0.3, seed=5)

print("pretraining in world A ...")
baseline, _ = vk.train(
    vk.init_model(seed=7),
    train_a,
    vk.TrainConfig(epochs=8, learning_rate=1e-3, batch_size=16, seed=100),
    validation=val_a,
)


def recall1(model, world):
    return vk.evaluate_model(model, world, ns=(1,)).recalls[0]


print(f"baseline  A={recall1(baseline, world_a):.3f}  B={recall1(baseline, world_b):.3f}")

config = vk.TrainConfig(
    epochs=15, learning_rate=1e-2, margin=0.4, batch_size=16,
    aug_multiplicity=3, seed=200,
)

# Finetune on world B's references under different augmentation menus.
for label in ("none", "appearance", "viewpoint", "appearance,viewpoint"):
    spec = vk.AugmentationSpec.from_string(label)
    tuned, _ = vk.rsf_finetune(baseline, world_b, config, spec, validation=val_a)
    print(
        f"rsf[{label:<21}]  A={recall1(tuned, world_a):.3f}"
        f"  B={recall1(tuned, world_b):.3f}"
    )

# Poseless mode: when reference poses are unavailable for mining,
# negatives are drawn at random instead of by pose distance.
poseless = dataclasses.replace(config, poseless=True)
tuned, _ = vk.rsf_finetune(
    baseline, world_b, poseless,
    vk.AugmentationSpec.from_string("appearance,viewpoint"), validation=val_a,
)
print(f"rsf[poseless             ]  A={recall1(tuned, world_a):.3f}  B={recall1(tuned, world_b):.3f}")
