"""Reference-set finetuning: triplet loss, pose-aware mining, training.

The finetuning dataset is built purely from the test-time reference
side: each reference spawns M augmented copies per epoch that act as
queries and inherit the reference's pose. Hard negatives are the
feature-space-closest references beyond a physical distance threshold;
without poses, negatives fall back to seeded random sampling. The same
engine also pretrains on a labeled dataset with real queries.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .augmentation import AugmentationSpec, apply, sample_op
from .dataset import Dataset, ImageRecord, Pose, pose_array
from .embedding import (
    EmbeddingModel,
    ParamGradients,
    apply_gradients,
    backward,
    extract_raw,
    forward,
    forward_batch,
)
from .errors import InvalidMultiplicity, NumericalDivergence, ShapeError, VprError
from .evaluation import evaluate_model

_EPS = 1e-12


def triplet_loss(
    f_q: np.ndarray, f_p: np.ndarray, f_n: np.ndarray, margin: float
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Hinge loss max(d(q,p) - d(q,n) + margin, 0) and its gradients.

    Returns (loss, dL/df_q, dL/df_p, dL/df_n); all gradients are zero on
    the flat side of the hinge.
    """
    f_q, f_p, f_n = (np.asarray(v, dtype=np.float64) for v in (f_q, f_p, f_n))
    if not f_q.shape == f_p.shape == f_n.shape:
        raise ShapeError(
            f"descriptor shapes differ: {f_q.shape}, {f_p.shape}, {f_n.shape}"
        )
    if margin <= 0:
        raise VprError(f"margin must be positive, got {margin}")
    dqp_vec = f_q - f_p
    dqn_vec = f_q - f_n
    d_qp = float(np.linalg.norm(dqp_vec))
    d_qn = float(np.linalg.norm(dqn_vec))
    loss = d_qp - d_qn + margin
    zero = np.zeros_like(f_q)
    if loss <= 0:
        return 0.0, zero, zero.copy(), zero.copy()
    u_qp = dqp_vec / (d_qp + _EPS)
    u_qn = dqn_vec / (d_qn + _EPS)
    return loss, u_qp - u_qn, -u_qp, u_qn


@dataclass
class FinetuneDataset:
    """Per-epoch realizable stream of augmented queries over a reference set.

    Invariants: the references are exactly the test-time reference set,
    every realized query carries its source reference's pose, and each
    epoch yields multiplicity x len(references) queries.
    """

    references: list[ImageRecord]
    reference_poses: list[Pose]
    multiplicity: int
    augmentation_spec: AugmentationSpec
    seed: int

    def realize_epoch(self, epoch: int) -> list[tuple[int, ImageRecord]]:
        """Deterministic given (seed, epoch); fresh ops per epoch."""
        realized = []
        for i, ref in enumerate(self.references):
            for m in range(self.multiplicity):
                rng = np.random.default_rng(
                    np.random.SeedSequence([self.seed, epoch, i, m])
                )
                op = sample_op(self.augmentation_spec, rng)
                realized.append((i, apply(ref, op, rng)))
        return realized


def build_finetune_stream(
    map_dataset: Dataset,
    multiplicity: int,
    spec: AugmentationSpec,
    seed: int,
) -> FinetuneDataset:
    """Wrap the reference side of a dataset as a finetuning stream."""
    if multiplicity < 1:
        raise InvalidMultiplicity(f"multiplicity must be >= 1, got {multiplicity}")
    if not map_dataset.references:
        raise VprError("cannot finetune on an empty reference set")
    return FinetuneDataset(
        references=map_dataset.references,
        reference_poses=map_dataset.reference_poses,
        multiplicity=multiplicity,
        augmentation_spec=spec,
        seed=seed,
    )


@dataclass
class TrainConfig:
    """Everything the training loop needs, all seedable and explicit.

    The default learning rate suits the small trainable head used here;
    full-backbone finetuning regimes use rates orders of magnitude lower.
    """

    margin: float = 0.1
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 16
    positive_radius: float = 10.0
    negative_radius: float = 25.0
    negatives_per_query: int = 1
    early_stop_patience: int = 5
    aug_multiplicity: int = 2
    poseless: bool = False
    validation_radius: float = 25.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise VprError("margin must be positive")
        if self.learning_rate <= 0:
            raise VprError("learning_rate must be positive")
        if self.negative_radius < self.positive_radius:
            raise VprError("negative_radius must be >= positive_radius")


@dataclass
class Triplet:
    """One mined training example; indices refer to the reference list."""

    source: int
    query: ImageRecord
    query_raw: np.ndarray
    positive: int
    negative: int


@dataclass
class TrainLog:
    """Step and epoch records from one training run."""

    step_losses: list[float] = field(default_factory=list)
    epoch_mean_loss: list[float] = field(default_factory=list)
    epoch_val_recall1: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    epoch_skipped_queries: list[int] = field(default_factory=list)
    selected_epoch: int = -1
    mode: str = ""


def _hard_negatives(
    q_desc: np.ndarray,
    ref_descs: np.ndarray,
    candidates: np.ndarray,
    count: int,
) -> list[int]:
    diffs = ref_descs[candidates] - q_desc
    dists = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))
    order = np.lexsort((candidates, dists))
    return [int(candidates[i]) for i in order[:count]]


def mine_triplets(
    model: EmbeddingModel,
    finetune_ds: FinetuneDataset,
    config: TrainConfig,
    epoch: int,
    ref_raws: np.ndarray | None = None,
) -> tuple[list[Triplet], int]:
    """Realize the epoch's queries and mine one triplet per (query, negative).

    Pose-mode: the positive is the source reference and negatives are the
    feature-closest references beyond negative_radius. Poseless mode draws
    the negative uniformly among the other references. Returns the triplet
    list and the number of queries skipped for lack of candidates.
    """
    if ref_raws is None:
        ref_raws = np.stack([extract_raw(r) for r in finetune_ds.references])
    ref_descs = forward_batch(model, ref_raws)
    rp = pose_array(finetune_ds.reference_poses)
    realized = finetune_ds.realize_epoch(epoch)
    triplets: list[Triplet] = []
    skipped = 0
    for qi, (src, query) in enumerate(realized):
        q_raw = extract_raw(query)
        if config.poseless:
            rng = np.random.default_rng(
                np.random.SeedSequence([finetune_ds.seed, epoch, qi, 0x4E9])
            )
            neg = int(rng.integers(0, len(finetune_ds.references) - 1))
            if neg >= src:
                neg += 1
            triplets.append(Triplet(src, query, q_raw, src, neg))
            continue
        qp = np.array([query.pose.x, query.pose.y])
        pose_dists = np.sqrt(np.sum((rp - qp) ** 2, axis=1))
        candidates = np.flatnonzero(pose_dists > config.negative_radius)
        if candidates.size == 0:
            skipped += 1
            continue
        q_desc = forward(model, q_raw)
        for neg in _hard_negatives(
            q_desc, ref_descs, candidates, config.negatives_per_query
        ):
            triplets.append(Triplet(src, query, q_raw, src, neg))
    return triplets, skipped


def _mine_labeled(
    model: EmbeddingModel,
    dataset: Dataset,
    config: TrainConfig,
    ref_raws: np.ndarray,
) -> tuple[list[Triplet], int]:
    """Mining for pretraining on a labeled dataset with real queries."""
    ref_descs = forward_batch(model, ref_raws)
    rp = pose_array(dataset.reference_poses)
    qp = pose_array(dataset.query_poses)
    triplets: list[Triplet] = []
    skipped = 0
    for qi, query in enumerate(dataset.queries):
        pose_dists = np.sqrt(np.sum((rp - qp[qi]) ** 2, axis=1))
        positive = int(np.argmin(pose_dists))
        candidates = np.flatnonzero(pose_dists > config.negative_radius)
        if pose_dists[positive] > config.positive_radius or candidates.size == 0:
            skipped += 1
            continue
        q_raw = extract_raw(query)
        q_desc = forward(model, q_raw)
        for neg in _hard_negatives(
            q_desc, ref_descs, candidates, config.negatives_per_query
        ):
            triplets.append(Triplet(positive, query, q_raw, positive, neg))
    return triplets, skipped


def train(
    model: EmbeddingModel,
    data: FinetuneDataset | Dataset,
    config: TrainConfig,
    validation: Dataset | None = None,
) -> tuple[EmbeddingModel, TrainLog]:
    """Triplet-loss gradient descent over the head, with per-epoch
    re-mining and best-validation model selection.

    With a validation dataset, the returned model is the one from the
    epoch with the best validation Recall@1 and training stops early
    after `early_stop_patience` epochs without improvement. Without one,
    the final epoch's parameters are returned.
    """
    log = TrainLog(mode="poseless" if config.poseless else "pose")
    model = model.copy()
    if config.epochs == 0:
        log.selected_epoch = -1
        return model, log

    references = data.references
    ref_raws = np.stack([extract_raw(r) for r in references])
    best_model = model.copy()
    best_val = -np.inf
    stale = 0

    for epoch in range(config.epochs):
        tic = time.perf_counter()
        if isinstance(data, FinetuneDataset):
            triplets, skipped = mine_triplets(model, data, config, epoch, ref_raws)
        else:
            triplets, skipped = _mine_labeled(model, data, config, ref_raws)
        log.epoch_skipped_queries.append(skipped)
        order = np.random.default_rng(
            np.random.SeedSequence([config.seed, epoch, 0x5F0F])
        ).permutation(len(triplets))

        epoch_losses: list[float] = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grads = ParamGradients.zeros_like(model)
            batch_loss = 0.0
            for ti in batch:
                t = triplets[ti]
                f_q = forward(model, t.query_raw)
                f_p = forward(model, ref_raws[t.positive])
                f_n = forward(model, ref_raws[t.negative])
                loss, g_q, g_p, g_n = triplet_loss(f_q, f_p, f_n, config.margin)
                if not np.isfinite(loss):
                    raise NumericalDivergence(
                        f"non-finite loss at epoch {epoch}, step {len(log.step_losses)}"
                    )
                batch_loss += loss
                if loss > 0:
                    grads += backward(model, t.query_raw, g_q)
                    grads += backward(model, ref_raws[t.positive], g_p)
                    grads += backward(model, ref_raws[t.negative], g_n)
            grads.scale(1.0 / len(batch))
            apply_gradients(model, grads, config.learning_rate)
            step_loss = batch_loss / len(batch)
            log.step_losses.append(step_loss)
            epoch_losses.append(step_loss)

        mean_loss = float(np.mean(epoch_losses)) if epoch_losses else 0.0
        log.epoch_mean_loss.append(mean_loss)
        if validation is not None:
            report = evaluate_model(
                model, validation, radius=config.validation_radius, ns=(1,)
            )
            val_score = report.recalls[0]
        else:
            val_score = -mean_loss
        log.epoch_val_recall1.append(val_score if validation is not None else np.nan)
        log.epoch_seconds.append(time.perf_counter() - tic)

        # >= keeps the latest epoch among ties: a saturated validation set
        # must not freeze training at epoch 0.
        if val_score >= best_val:
            best_val = val_score
            best_model = model.copy()
            log.selected_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break

    return best_model, log


def rsf_finetune(
    model: EmbeddingModel,
    test_dataset: Dataset,
    config: TrainConfig,
    spec: AugmentationSpec,
    validation: Dataset | None = None,
) -> tuple[EmbeddingModel, TrainLog]:
    """Adapt a model to a test environment using only its reference side.

    The test dataset's queries are never read: finetuning sees a
    reference-only view, so test-query hygiene holds by construction.
    """
    refs_only = test_dataset.reference_only()
    stream = build_finetune_stream(
        refs_only, config.aug_multiplicity, spec, config.seed
    )
    return train(model, stream, config, validation=validation)
