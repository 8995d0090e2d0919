"""Shared generators and independent oracles for the test suite."""

from itertools import product

import numpy as np
import pytest

from protoseg import DatasetSchema, MixedDataset, MixedRecord


def make_schema(m_r: int, cat_sizes: tuple[int, ...], standardization=None) -> DatasetSchema:
    return DatasetSchema(
        numeric_attrs=tuple((f"num{j}", "unit") for j in range(m_r)),
        categorical_attrs=tuple(
            (f"cat{j}", tuple(f"v{c}" for c in range(size))) for j, size in enumerate(cat_sizes)
        ),
        standardization=standardization,
    )


def random_dataset(rng: np.random.Generator, n: int, m_r: int, cat_sizes: tuple[int, ...]) -> MixedDataset:
    schema = make_schema(m_r, cat_sizes)
    numeric = rng.normal(size=(n, m_r))
    categorical = np.column_stack(
        [rng.integers(size, size=n) for size in cat_sizes]
    ) if cat_sizes else np.zeros((n, 0), dtype=np.int64)
    return MixedDataset.from_arrays(schema, numeric, categorical)


def planted_dataset(rng: np.random.Generator, groups: int, n: int, cat_size: int = None):
    """Well-separated mixed clusters with a dominant category per cluster.

    Numeric centers sit at scaled one-hot positions, so every pair is
    10 * sqrt(2) apart in unit within-cluster sigma.  Returns (dataset,
    labels).
    """
    cat_size = cat_size or groups
    m_r = groups
    labels = rng.integers(groups, size=n)
    centers = 10.0 * np.eye(groups)
    numeric = centers[labels] + rng.normal(size=(n, m_r))
    # dominant category with 85% mass, rest uniform
    categorical = np.empty((n, 1), dtype=np.int64)
    for i in range(n):
        if rng.random() < 0.85:
            categorical[i, 0] = labels[i] % cat_size
        else:
            categorical[i, 0] = rng.integers(cat_size)
    schema = make_schema(m_r, (cat_size,))
    return MixedDataset.from_arrays(schema, numeric, categorical), labels


# ---------------------------------------------------------------------------
# Brute-force oracle: exhaustive set partitions scored with means / modes
# ---------------------------------------------------------------------------


def _partitions_upto_k(n: int, k: int):
    """All set partitions of range(n) into at most k non-empty blocks,
    enumerated via restricted growth strings."""

    def rec(i, assignment, used):
        if i == n:
            yield list(assignment)
            return
        for b in range(min(used + 1, k)):
            assignment.append(b)
            yield from rec(i + 1, assignment, max(used, b + 1))
            assignment.pop()

    yield from rec(0, [], 0)


def partition_cost(d: MixedDataset, assignment, gamma: float) -> float:
    """Cost of a partition with block means as numeric centers and block
    modes as categorical centers (first max = smallest code on ties)."""
    assignment = np.asarray(assignment)
    total = 0.0
    for b in np.unique(assignment):
        members = np.flatnonzero(assignment == b)
        if d.schema.m_r:
            block = d.numeric[members]
            center = block.mean(axis=0)
            total += float(((block - center) ** 2).sum())
        for j in range(d.schema.m_c):
            col = d.categorical[members, j]
            counts = np.bincount(col, minlength=len(d.schema.categorical_attrs[j][1]))
            total += gamma * (len(members) - counts.max())
    return total


def brute_force_optimum(d: MixedDataset, k: int, gamma: float) -> float:
    """Global optimum cost over every partition into at most k blocks."""
    best = np.inf
    for assignment in _partitions_upto_k(d.n, k):
        best = min(best, partition_cost(d, assignment, gamma))
    return best


# ---------------------------------------------------------------------------
# Plain K-means twin (numeric only) sharing init / tie-break rules
# ---------------------------------------------------------------------------


def plain_kmeans_trajectory(X: np.ndarray, centers: np.ndarray, max_iter: int = 100):
    """Lloyd iterations on a numeric matrix: argmin with lowest-index
    tie-break, mean updates, farthest-point reseeding of empty clusters.
    Returns the list of assignment vectors, one per iteration."""
    centers = centers.copy()
    k = centers.shape[0]
    trajectory = []
    prev = None
    for _ in range(max_iter):
        dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assignment = np.argmin(dist, axis=1)
        trajectory.append(assignment.copy())
        if prev is not None and np.array_equal(assignment, prev):
            break
        prev = assignment
        for l in range(k):
            members = np.flatnonzero(assignment == l)
            if len(members):
                centers[l] = X[members].mean(axis=0)
        empties = [l for l in range(k) if not np.any(assignment == l)]
        for l in empties:
            diff = X - centers[assignment]
            cost = (diff * diff).sum(axis=1)
            counts = np.bincount(assignment, minlength=k)
            cost = np.where(counts[assignment] > 1, cost, -np.inf)
            far = int(np.argmax(cost))
            assignment[far] = l
            prev = assignment
            for m in range(k):
                members = np.flatnonzero(assignment == m)
                if len(members):
                    centers[m] = X[members].mean(axis=0)
    return trajectory


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
