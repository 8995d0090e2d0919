"""Gamma estimation, initialization and the alternating fit loop.

The optimizer is batch (Lloyd-style): assign every record to its nearest
prototype, then recompute numeric means and categorical modes, repeating
until the assignment is a fixed point.  Both half-steps are individually
non-increasing in total cost.  All randomness flows from (seed,
restart_index), so a fit is fully determined by (dataset, config).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    UNKNOWN,
    ClusterCostBreakdown,
    ClusterModel,
    FitMeta,
    MixedDataset,
    MixedRecord,
    Prototype,
)
from .errors import (
    DegenerateCategoricalsError,
    InfeasibleKError,
    ParameterError,
    SchemaError,
    UnknownCategoryError,
)

INIT_RANDOM_RECORDS = "RandomRecords"
INIT_PLUS_PLUS = "PlusPlus"

GAMMA_FLOOR = 1e-6


@dataclass(frozen=True)
class FitConfig:
    k: int
    gamma: Optional[float] = None  # estimated from the data when None
    seed: int = 0
    restarts: int = 10
    max_iter: int = 100
    tol: float = 1e-8
    init: str = INIT_PLUS_PLUS
    # applied when an update step leaves a cluster empty
    empty_cluster_policy: str = "ReseedFarthest"

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError("k must be >= 1")
        if self.gamma is not None and self.gamma < 0:
            raise ParameterError("gamma must be >= 0")
        if self.restarts < 1 or self.max_iter < 1:
            raise ParameterError("restarts and max_iter must be >= 1")
        if self.init not in (INIT_RANDOM_RECORDS, INIT_PLUS_PLUS):
            raise ParameterError(f"unknown init method: {self.init!r}")


# ---------------------------------------------------------------------------
# Gamma
# ---------------------------------------------------------------------------


def estimate_gamma(d: MixedDataset) -> float:
    """Heuristic tradeoff weight: mean numeric sample variance divided by
    mean categorical variation (1 - sum of squared category frequencies).

    Deterministic; requires at least one attribute of each kind and two
    records.  Constant numerics return a small floor instead of zero.
    """
    if d.schema.m_r < 1 or d.schema.m_c < 1:
        raise SchemaError("gamma estimation needs numeric and categorical attributes")
    if d.n < 2:
        raise SchemaError("gamma estimation needs at least 2 records")
    num_var = float(np.mean(np.var(d.numeric, axis=0, ddof=1)))
    variations = []
    for j in range(d.schema.m_c):
        _, counts = np.unique(d.categorical[:, j], return_counts=True)
        p = counts / d.n
        variations.append(1.0 - float(p @ p))
    cat_var = float(np.mean(variations))
    if cat_var == 0.0:
        raise DegenerateCategoricalsError("all categorical attributes are constant")
    if num_var == 0.0:
        return GAMMA_FLOOR
    return num_var / cat_var


def _resolve_gamma(d: MixedDataset, cfg: FitConfig) -> tuple[float, bool]:
    if cfg.gamma is not None:
        return cfg.gamma, False
    if d.schema.m_c == 0:
        return 0.0, False
    return estimate_gamma(d), True


# ---------------------------------------------------------------------------
# Distances on column arrays
# ---------------------------------------------------------------------------


def _distance_matrix(
    numeric: np.ndarray, categorical: np.ndarray, qn: np.ndarray, qc: np.ndarray, gamma: float
) -> np.ndarray:
    """(n, k) matrix of mixed distances to each center."""
    n = numeric.shape[0]
    k = qn.shape[0]
    dist = np.zeros((n, k))
    for l in range(k):
        if numeric.shape[1]:
            diff = numeric - qn[l]
            dist[:, l] = np.einsum("ij,ij->i", diff, diff)
        if categorical.shape[1]:
            mism = (categorical != qc[l]) | (categorical == UNKNOWN) | (qc[l] == UNKNOWN)
            dist[:, l] += gamma * np.count_nonzero(mism, axis=1)
    return dist


def _point_costs(
    numeric: np.ndarray,
    categorical: np.ndarray,
    qn: np.ndarray,
    qc: np.ndarray,
    assignment: np.ndarray,
    gamma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-record (numeric_cost, categorical_cost) against assigned centers."""
    num_cost = np.zeros(numeric.shape[0])
    cat_cost = np.zeros(numeric.shape[0])
    if numeric.shape[1]:
        diff = numeric - qn[assignment]
        num_cost = np.einsum("ij,ij->i", diff, diff)
    if categorical.shape[1]:
        qrow = qc[assignment]
        mism = (categorical != qrow) | (categorical == UNKNOWN) | (qrow == UNKNOWN)
        cat_cost = gamma * np.count_nonzero(mism, axis=1).astype(float)
    return num_cost, cat_cost


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def _distinct_rows(d: MixedDataset) -> np.ndarray:
    combined = np.concatenate([d.numeric, d.categorical.astype(float)], axis=1)
    if combined.shape[1] == 0:
        return np.array([0])
    _, idx = np.unique(combined, axis=0, return_index=True)
    return np.sort(idx)


def init_prototypes(d: MixedDataset, cfg: FitConfig, restart_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Initial centers as (numeric, categorical) arrays of shape (k, m).

    Fully determined by (cfg.seed, restart_index).  RandomRecords samples k
    distinct records without replacement; PlusPlus picks the first center
    uniformly and subsequent centers proportional to the mixed distance to
    the nearest already-chosen center.
    """
    distinct = _distinct_rows(d)
    if cfg.k > len(distinct):
        raise InfeasibleKError(
            f"k={cfg.k} exceeds the {len(distinct)} distinct records available"
        )
    rng = np.random.default_rng([cfg.seed, restart_index])
    gamma, _ = _resolve_gamma(d, cfg)

    if cfg.init == INIT_RANDOM_RECORDS:
        chosen = rng.choice(distinct, size=cfg.k, replace=False)
    else:
        chosen = [int(rng.integers(d.n))]
        for _ in range(1, cfg.k):
            qn = d.numeric[chosen]
            qc = d.categorical[chosen]
            dist = _distance_matrix(d.numeric, d.categorical, qn, qc, gamma).min(axis=1)
            total = dist.sum()
            if total > 0:
                probs = dist / total
                chosen.append(int(rng.choice(d.n, p=probs)))
            else:
                # all remaining mass is on duplicates of chosen centers
                pool = [i for i in distinct if not any(np.array_equal(d.numeric[i], d.numeric[c]) and np.array_equal(d.categorical[i], d.categorical[c]) for c in chosen)]
                chosen.append(int(rng.choice(pool)))
        chosen = np.asarray(chosen)
    return d.numeric[chosen].copy(), d.categorical[chosen].copy()


# ---------------------------------------------------------------------------
# Half-steps
# ---------------------------------------------------------------------------


def assign(d: MixedDataset, qn: np.ndarray, qc: np.ndarray, gamma: float) -> np.ndarray:
    """Nearest-center index per record; ties go to the lowest center index."""
    dist = _distance_matrix(d.numeric, d.categorical, qn, qc, gamma)
    return np.argmin(dist, axis=1)


def update_centers(
    d: MixedDataset, assignment: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Means / modes per cluster.  Empty clusters are reported, not raised;
    their centers are left at the previous position placeholder (zeros)."""
    qn = np.zeros((k, d.schema.m_r))
    qc = np.zeros((k, d.schema.m_c), dtype=np.int64)
    empties = []
    sizes = d.schema.category_sizes()
    for l in range(k):
        members = np.flatnonzero(assignment == l)
        if len(members) == 0:
            empties.append(l)
            continue
        if d.schema.m_r:
            qn[l] = d.numeric[members].mean(axis=0)
        for j in range(d.schema.m_c):
            col = d.categorical[members, j]
            counts = np.bincount(col[col != UNKNOWN], minlength=sizes[j])
            # argmax takes the first maximum, i.e. the smallest code on ties
            qc[l, j] = int(np.argmax(counts))
    return qn, qc, empties


def update_prototypes(d: MixedDataset, assignment, k: int) -> tuple[list[Optional[Prototype]], list[int]]:
    """Prototype objects per cluster (None for empty clusters)."""
    assignment = np.asarray(assignment)
    qn, qc, empties = update_centers(d, assignment, k)
    sizes = d.schema.category_sizes()
    protos: list[Optional[Prototype]] = []
    for l in range(k):
        if l in empties:
            protos.append(None)
            continue
        members = np.flatnonzero(assignment == l)
        freqs = []
        unknowns = []
        for j in range(d.schema.m_c):
            col = d.categorical[members, j]
            counts = np.bincount(col[col != UNKNOWN], minlength=sizes[j])
            freqs.append(tuple(int(c) for c in counts))
            unknowns.append(int(np.count_nonzero(col == UNKNOWN)))
        protos.append(
            Prototype(
                numeric_center=tuple(float(v) for v in qn[l]),
                categorical_mode=tuple(int(v) for v in qc[l]),
                category_freq=tuple(freqs),
                member_count=len(members),
                unknown_counts=tuple(unknowns),
            )
        )
    return protos, empties


def total_cost(
    d: MixedDataset, qn: np.ndarray, qc: np.ndarray, assignment: np.ndarray, gamma: float
) -> tuple[float, list[ClusterCostBreakdown]]:
    """Total cost plus per-cluster numeric/categorical breakdowns.

    Accumulation order is fixed (cluster by cluster, members in record
    order) for bit-reproducibility.
    """
    assignment = np.asarray(assignment)
    num_cost, cat_cost = _point_costs(d.numeric, d.categorical, qn, qc, assignment, gamma)
    k = qn.shape[0]
    breakdowns = []
    total = 0.0
    for l in range(k):
        members = np.flatnonzero(assignment == l)
        e_r = float(np.sum(num_cost[members]))
        e_c = float(np.sum(cat_cost[members]))
        breakdowns.append(ClusterCostBreakdown(e_r, e_c))
        total += e_r + e_c
    return total, breakdowns


def _reseed_empties(
    d: MixedDataset,
    assignment: np.ndarray,
    qn: np.ndarray,
    qc: np.ndarray,
    empties: list[int],
    gamma: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Move the record farthest from its assigned center into each empty
    cluster (only records from clusters with >1 member are eligible)."""
    assignment = assignment.copy()
    for l in empties:
        num_cost, cat_cost = _point_costs(d.numeric, d.categorical, qn, qc, assignment, gamma)
        point_cost = num_cost + cat_cost
        counts = np.bincount(assignment, minlength=qn.shape[0])
        eligible = counts[assignment] > 1
        point_cost = np.where(eligible, point_cost, -np.inf)
        far = int(np.argmax(point_cost))
        assignment[far] = l
        qn, qc, _ = update_centers(d, assignment, qn.shape[0])
    return assignment, qn, qc


@dataclass
class SingleFitResult:
    assignment: np.ndarray
    qn: np.ndarray
    qc: np.ndarray
    cost: float
    breakdowns: list[ClusterCostBreakdown]
    iterations: int
    converged: bool
    # (phase, cost) after every half-step; phases are "assign" / "update"
    cost_trace: list[tuple[str, float]] = field(default_factory=list)
    assignment_trace: list[np.ndarray] = field(default_factory=list)


def fit_single(
    d: MixedDataset,
    qn: np.ndarray,
    qc: np.ndarray,
    gamma: float,
    max_iter: int = 100,
    tol: float = 1e-8,
    trace: bool = False,
) -> SingleFitResult:
    """One Lloyd run from given initial centers."""
    qn = qn.copy()
    qc = qc.copy()
    k = qn.shape[0]
    prev_assignment = None
    prev_cost = np.inf
    converged = False
    cost_trace: list[tuple[str, float]] = []
    assignment_trace: list[np.ndarray] = []
    iterations = 0
    assignment = None
    for _ in range(max_iter):
        iterations += 1
        assignment = assign(d, qn, qc, gamma)
        cost_after_assign, _ = total_cost(d, qn, qc, assignment, gamma)
        if trace:
            cost_trace.append(("assign", cost_after_assign))
            assignment_trace.append(assignment.copy())
        if prev_assignment is not None and np.array_equal(assignment, prev_assignment):
            converged = True
            break
        prev_assignment = assignment
        qn, qc, empties = update_centers(d, assignment, k)
        if empties:
            assignment, qn, qc = _reseed_empties(d, assignment, qn, qc, empties, gamma)
            prev_assignment = assignment
        cost_after_update, _ = total_cost(d, qn, qc, assignment, gamma)
        if trace:
            cost_trace.append(("update", cost_after_update))
        improvement = prev_cost - cost_after_update
        threshold = tol * max(abs(prev_cost), 1.0) if np.isfinite(prev_cost) else np.inf
        prev_cost = cost_after_update
        if np.isfinite(threshold) and improvement < max(threshold, 1e-12):
            # near-stationary; one final assignment pass settles membership
            assignment = assign(d, qn, qc, gamma)
            converged = bool(np.array_equal(assignment, prev_assignment))
            break
    cost, breakdowns = total_cost(d, qn, qc, assignment, gamma)
    return SingleFitResult(
        assignment=assignment,
        qn=qn,
        qc=qc,
        cost=cost,
        breakdowns=breakdowns,
        iterations=iterations,
        converged=converged,
        cost_trace=cost_trace,
        assignment_trace=assignment_trace,
    )


def _build_model(
    d: MixedDataset,
    result: SingleFitResult,
    gamma: float,
    meta: FitMeta,
) -> ClusterModel:
    protos, empties = update_prototypes(d, result.assignment, result.qn.shape[0])
    if empties:
        raise InfeasibleKError("fit ended with an empty cluster")
    # prototype centers are the converged centers (equal to the member
    # means/modes at a fixed point)
    final = []
    for l, p in enumerate(protos):
        final.append(
            Prototype(
                numeric_center=tuple(float(v) for v in result.qn[l]),
                categorical_mode=tuple(int(v) for v in result.qc[l]),
                category_freq=p.category_freq,
                member_count=p.member_count,
                unknown_counts=p.unknown_counts,
            )
        )
    return ClusterModel(
        k=result.qn.shape[0],
        gamma=gamma,
        prototypes=tuple(final),
        assignment=tuple(int(a) for a in result.assignment),
        total_cost=result.cost,
        breakdowns=tuple(result.breakdowns),
        fit_meta=meta,
        schema=d.schema,
    )


def fit(d: MixedDataset, cfg: FitConfig) -> ClusterModel:
    """Best-of-restarts alternating optimization.

    Returns the restart with minimal total cost; ties keep the earliest
    restart so results are reproducible.
    """
    if d.n < cfg.k:
        raise InfeasibleKError(f"n={d.n} < k={cfg.k}")
    gamma, estimated = _resolve_gamma(d, cfg)
    best: Optional[SingleFitResult] = None
    best_restart = -1
    iteration_counts = []
    for r in range(cfg.restarts):
        qn, qc = init_prototypes(d, cfg, r)
        result = fit_single(d, qn, qc, gamma, cfg.max_iter, cfg.tol)
        iteration_counts.append(result.iterations)
        if best is None or result.cost < best.cost:
            best = result
            best_restart = r
    meta = FitMeta(
        seed=cfg.seed,
        restarts=cfg.restarts,
        iterations=tuple(iteration_counts),
        converged=best.converged,
        best_restart=best_restart,
        gamma_estimated=estimated,
    )
    return _build_model(d, best, gamma, meta)


def fit_with_trace(d: MixedDataset, cfg: FitConfig) -> tuple[ClusterModel, list[SingleFitResult]]:
    """Like fit() but also returns every restart's traced run (for the
    monotonicity and reduction checks)."""
    if d.n < cfg.k:
        raise InfeasibleKError(f"n={d.n} < k={cfg.k}")
    gamma, estimated = _resolve_gamma(d, cfg)
    results = []
    best_idx = 0
    for r in range(cfg.restarts):
        qn, qc = init_prototypes(d, cfg, r)
        result = fit_single(d, qn, qc, gamma, cfg.max_iter, cfg.tol, trace=True)
        results.append(result)
        if result.cost < results[best_idx].cost:
            best_idx = r
    meta = FitMeta(
        seed=cfg.seed,
        restarts=cfg.restarts,
        iterations=tuple(res.iterations for res in results),
        converged=results[best_idx].converged,
        best_restart=best_idx,
        gamma_estimated=estimated,
    )
    return _build_model(d, results[best_idx], gamma, meta), results


def predict(model: ClusterModel, record: MixedRecord, strict: bool = False) -> int:
    """Cluster index for one record under the model's gamma and tie-break."""
    if strict and any(c == UNKNOWN for c in record.categorical):
        raise UnknownCategoryError("record contains an unseen category")
    qn, qc = model.centers_arrays()
    numeric = np.asarray(record.numeric, dtype=float).reshape(1, -1)
    categorical = np.asarray(record.categorical, dtype=np.int64).reshape(1, -1)
    if numeric.shape[1] != qn.shape[1] or categorical.shape[1] != qc.shape[1]:
        raise SchemaError("record does not match model schema")
    dist = _distance_matrix(numeric, categorical, qn, qc, model.gamma)
    return int(np.argmin(dist[0]))
