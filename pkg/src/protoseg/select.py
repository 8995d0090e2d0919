"""Cost-curve scan over k and elbow detection.

The scan fixes gamma once for the whole range so curve points are
comparable.  With ``nested=True`` every k > k_min gets one extra restart
seeded from the best solution at k-1 plus one additional center placed on
the record farthest from its current center, which guarantees a
non-increasing curve.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import ClusterModel, FitMeta, MixedDataset
from .errors import InfeasibleKError, InsufficientCurveError
from .fit import (
    FitConfig,
    SingleFitResult,
    _build_model,
    _point_costs,
    _resolve_gamma,
    fit,
    fit_single,
)


@dataclass(frozen=True)
class ElbowEntry:
    k: int
    cost: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class ElbowCurve:
    entries: tuple[ElbowEntry, ...]
    gamma: float
    k_min: int
    k_max: int
    nested: bool
    seed: int

    def __post_init__(self):
        ks = [e.k for e in self.entries]
        if ks != sorted(set(ks)):
            raise InsufficientCurveError("curve k values must be strictly increasing")
        if any(e.cost < 0 for e in self.entries):
            raise InsufficientCurveError("curve costs must be non-negative")

    def costs(self) -> list[float]:
        return [e.cost for e in self.entries]


def _nested_restart(d: MixedDataset, prev: ClusterModel, gamma: float, cfg: FitConfig) -> SingleFitResult:
    """Warm start at k+1: previous centers plus the farthest record."""
    qn, qc = prev.centers_arrays()
    assignment = np.asarray(prev.assignment)
    num_cost, cat_cost = _point_costs(d.numeric, d.categorical, qn, qc, assignment, gamma)
    far = int(np.argmax(num_cost + cat_cost))
    qn = np.vstack([qn, d.numeric[far][None, :]]) if d.schema.m_r else np.zeros((qn.shape[0] + 1, 0))
    qc = (
        np.vstack([qc, d.categorical[far][None, :]])
        if d.schema.m_c
        else np.zeros((qc.shape[0] + 1, 0), dtype=np.int64)
    )
    return fit_single(d, qn, qc, gamma, cfg.max_iter, cfg.tol)


def elbow_scan(
    d: MixedDataset, k_min: int, k_max: int, cfg: FitConfig, nested: bool = True
) -> tuple[ElbowCurve, dict[int, ClusterModel]]:
    """One best-of-restarts fit per k in [k_min, k_max].

    Returns the curve and the fitted model per k.
    """
    if not (1 <= k_min < k_max <= d.n):
        raise InfeasibleKError(f"invalid k range [{k_min}, {k_max}] for n={d.n}")
    gamma, estimated = _resolve_gamma(d, cfg)
    entries = []
    models: dict[int, ClusterModel] = {}
    prev_model: Optional[ClusterModel] = None
    for k in range(k_min, k_max + 1):
        kcfg = replace(cfg, k=k, gamma=gamma)
        model = fit(d, kcfg)
        if nested and prev_model is not None:
            warm = _nested_restart(d, prev_model, gamma, kcfg)
            if warm.cost < model.total_cost:
                meta = FitMeta(
                    seed=cfg.seed,
                    restarts=cfg.restarts + 1,
                    iterations=model.fit_meta.iterations + (warm.iterations,),
                    converged=warm.converged,
                    best_restart=cfg.restarts,
                    gamma_estimated=estimated,
                )
                model = _build_model(d, warm, gamma, meta)
        models[k] = model
        entries.append(
            ElbowEntry(
                k=k,
                cost=model.total_cost,
                iterations=model.fit_meta.iterations[model.fit_meta.best_restart],
                converged=model.fit_meta.converged,
            )
        )
        prev_model = model
    curve = ElbowCurve(
        entries=tuple(entries),
        gamma=gamma,
        k_min=k_min,
        k_max=k_max,
        nested=nested,
        seed=cfg.seed,
    )
    if nested:
        costs = curve.costs()
        assert all(b <= a + 1e-9 * max(abs(a), 1.0) for a, b in zip(costs, costs[1:])), (
            "nested scan produced an increasing cost curve"
        )
    return curve, models


def detect_elbow(curve: ElbowCurve) -> int:
    """k maximizing the discrete second difference of the cost curve.

    Advisory only; ties go to the smaller k.  Invariant under uniform
    positive scaling of the costs.
    """
    if len(curve.entries) < 3:
        raise InsufficientCurveError("elbow detection needs at least 3 curve points")
    costs = curve.costs()
    ks = [e.k for e in curve.entries]
    best_k = None
    best_val = -np.inf
    for i in range(1, len(costs) - 1):
        val = costs[i - 1] - 2 * costs[i] + costs[i + 1]
        if val > best_val:
            best_val = val
            best_k = ks[i]
    return best_k


def curve_to_csv(curve: ElbowCurve, header_comment: str = "") -> str:
    """CSV text (columns: k, cost, iterations, converged) for plotting."""
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    buf.write(f"# gamma={curve.gamma!r} seed={curve.seed} nested={curve.nested}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", "cost", "iterations", "converged"])
    for e in curve.entries:
        writer.writerow([e.k, repr(e.cost), e.iterations, e.converged])
    return buf.getvalue()
