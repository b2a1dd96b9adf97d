"""Recall@N evaluation, generalization matrices, 2-D projections."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, Pose, pose_array
from .errors import DegenerateSpectrum, MissingGroundTruth, ShapeError, VprError
from .retrieval import DescriptorMap, RetrievalResult, build_map, retrieve_all
from .embedding import EmbeddingModel

DEFAULT_RADIUS_M = 25.0
DEFAULT_NS = (1, 5, 10)


@dataclass
class GroundTruth:
    """Per-query sets of correct reference indices, keyed by query id.

    Queries with no reference inside the radius are listed separately
    and excluded from recall denominators.
    """

    matches: dict[str, frozenset[int]]
    unmatched: list[str] = field(default_factory=list)


def ground_truth(
    query_poses: list[Pose],
    reference_poses: list[Pose],
    radius: float = DEFAULT_RADIUS_M,
    query_ids: list[str] | None = None,
) -> GroundTruth:
    """A query matches reference i iff their pose distance is <= radius."""
    if radius <= 0:
        raise VprError(f"radius must be positive, got {radius}")
    qp = pose_array(query_poses)
    rp = pose_array(reference_poses)
    if query_ids is None:
        query_ids = [str(i) for i in range(len(query_poses))]
    diffs = qp[:, None, :] - rp[None, :, :]
    dists = np.sqrt(np.einsum("qrc,qrc->qr", diffs, diffs))
    matches: dict[str, frozenset[int]] = {}
    unmatched: list[str] = []
    for qi, qid in enumerate(query_ids):
        hit = frozenset(np.flatnonzero(dists[qi] <= radius).tolist())
        matches[qid] = hit
        if not hit:
            unmatched.append(qid)
    return GroundTruth(matches=matches, unmatched=unmatched)


@dataclass
class RecallReport:
    """Recall@N values for one (model, dataset) pair."""

    dataset: str
    model_fingerprint: str
    ns: list[int]
    recalls: list[float]
    total_queries: int
    evaluated_queries: int

    def rows(self) -> list[str]:
        """Machine-readable CSV rows, one per cutoff."""
        return [
            f"{self.model_fingerprint},{self.dataset},{n},{r:.6f},"
            f"{self.evaluated_queries},{self.total_queries}"
            for n, r in zip(self.ns, self.recalls)
        ]


def format_recall(value: float) -> str:
    """Render a recall fraction the way result tables do: 0.942 -> '94.2'."""
    return f"{value * 100:.1f}"


def recall_at_n(
    results: list[RetrievalResult],
    gt: GroundTruth,
    ns: list[int] | tuple[int, ...] = DEFAULT_NS,
    dataset: str = "",
    model_fingerprint: str = "",
) -> RecallReport:
    """Fraction of evaluated queries whose top-N holds a correct index."""
    ns = sorted(ns)
    excluded = set(gt.unmatched)
    hits = np.zeros(len(ns), dtype=np.int64)
    evaluated = 0
    for res in results:
        if res.query_id not in gt.matches:
            raise MissingGroundTruth(f"no ground truth for query {res.query_id!r}")
        correct = gt.matches[res.query_id]
        if res.query_id in excluded:
            continue
        evaluated += 1
        first_hit = next(
            (rank for rank, (idx, _) in enumerate(res.ranked) if idx in correct),
            None,
        )
        if first_hit is not None:
            for j, n in enumerate(ns):
                if first_hit < n:
                    hits[j] += 1
    recalls = (hits / evaluated).tolist() if evaluated else [0.0] * len(ns)
    return RecallReport(
        dataset=dataset,
        model_fingerprint=model_fingerprint,
        ns=list(ns),
        recalls=recalls,
        total_queries=len(results),
        evaluated_queries=evaluated,
    )


def evaluate_model(
    model: EmbeddingModel,
    dataset: Dataset,
    radius: float = DEFAULT_RADIUS_M,
    ns: tuple[int, ...] = DEFAULT_NS,
    name: str = "",
) -> RecallReport:
    """Build map, retrieve every query, score Recall@N in one call."""
    dmap = build_map(dataset, model)
    k = min(max(ns), dmap.size)
    results = retrieve_all(dmap, dataset, model, k)
    gt = ground_truth(
        dataset.query_poses,
        dataset.reference_poses,
        radius,
        query_ids=[q.id for q in dataset.queries],
    )
    return recall_at_n(
        results, gt, ns, dataset=name, model_fingerprint=model.fingerprint_hex()
    )


def generalization_matrix(
    models: list[tuple[str, EmbeddingModel]],
    datasets: list[tuple[str, Dataset]],
    radius: float = DEFAULT_RADIUS_M,
    ns: tuple[int, ...] = DEFAULT_NS,
) -> list[list[RecallReport | Exception]]:
    """Cross-product evaluation; a failing cell records its error and the
    run continues."""
    matrix: list[list[RecallReport | Exception]] = []
    for _, model in models:
        row: list[RecallReport | Exception] = []
        for dname, dataset in datasets:
            try:
                row.append(evaluate_model(model, dataset, radius, ns, name=dname))
            except VprError as exc:
                row.append(exc)
        matrix.append(row)
    return matrix


def format_matrix(
    models: list[str],
    datasets: list[str],
    matrix: list[list[RecallReport | Exception]],
    n: int = 1,
) -> str:
    """Aligned plain-text table of Recall@n, models as rows."""
    header = ["model \\ dataset", *datasets]
    lines = [header]
    for name, row in zip(models, matrix):
        cells = [name]
        for cell in row:
            if isinstance(cell, Exception):
                cells.append(type(cell).__name__)
            else:
                cells.append(format_recall(cell.recalls[cell.ns.index(n)]))
        lines.append(cells)
    widths = [max(len(r[c]) for r in lines) for c in range(len(header))]
    return "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        for row in lines
    )


def _power_iteration(
    cov: np.ndarray, rng: np.random.Generator, tol: float, max_iter: int
) -> tuple[np.ndarray, float]:
    v = rng.standard_normal(cov.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        av = cov @ v
        norm = np.linalg.norm(av)
        if norm < 1e-30:
            return v, 0.0
        v_new = av / norm
        if np.linalg.norm(v_new - v) < tol or np.linalg.norm(v_new + v) < tol:
            v = v_new
            break
        v = v_new
    return v, float(v @ cov @ v)


def project_2d(
    descriptors: np.ndarray | DescriptorMap,
    tol: float = 1e-9,
    max_iter: int = 1000,
) -> np.ndarray:
    """Project rows onto the top-2 principal directions.

    Power iteration with deflation; sign convention is that each
    component's largest-magnitude loading is positive.
    """
    if isinstance(descriptors, DescriptorMap):
        descriptors = descriptors.descriptors
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ShapeError(f"need an (N>=3, D) matrix, got shape {x.shape}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    total = float(np.trace(cov))
    rng = np.random.default_rng(np.random.SeedSequence([0x9CA0]))
    components = []
    deflated = cov.copy()
    for _ in range(2):
        v, lam = _power_iteration(deflated, rng, tol, max_iter)
        if lam <= max(total, 1.0) * 1e-12:
            raise DegenerateSpectrum(
                "fewer than 2 principal directions with nonzero variance"
            )
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        components.append(v)
        deflated = deflated - lam * np.outer(v, v)
    return centered @ np.stack(components, axis=1)
