"""Per-cluster summaries: attribute means with pooled percentiles, sharing
shares, derived trip economics and top origin/destination areas.

Cluster-level economics are ratios of cluster means (mean fare over mean
distance, etc.), not means of per-trip ratios; this is noted in the CSV
headers.  Trips with non-positive distance or duration are excluded from
the derived metrics but stay in the clustering.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import MODEL_SCHEMA_VERSION, ClusterModel, MixedDataset
from .errors import SchemaError
from .ingest import TripRecord


@dataclass(frozen=True)
class TripMetrics:
    dollars_per_mile: float
    dollars_per_minute: float
    avg_speed_mph: float
    transit_gap: Optional[float]  # fraction; None when no transit time


@dataclass(frozen=True)
class ClusterProfile:
    cluster_id: int
    share_pct: float
    numeric_summary: dict  # name -> (mean in original units, pooled percentile)
    categorical_summary: dict  # name -> (modal label, within-cluster % of members)
    percent_ridesplitting: float
    metrics: Optional[TripMetrics]
    excluded_from_metrics: int


@dataclass(frozen=True)
class SharingSummary:
    authorized_pct: float
    matched_given_authorized_pct: float
    pooled_pct: float


@dataclass(frozen=True)
class LocationShare:
    cluster_id: int
    direction: str  # "origin" | "destination"
    ranked: tuple[tuple[str, float], ...]  # (area id, % of cluster trips)


def pooled_percentile(value: float, column: Sequence[float]) -> float:
    """Share of column values strictly less than ``value``, in percent."""
    col = np.asarray(column, dtype=float)
    if col.size == 0:
        raise SchemaError("percentile column is empty")
    return 100.0 * float(np.count_nonzero(col < value)) / col.size


def derive_trip_metrics(
    fare: float, distance: float, duration: float, transit_time: Optional[float]
) -> Optional[TripMetrics]:
    """Fare per mile / per minute, speed, and the relative transit gap
    (transit minus ridesourcing travel time over ridesourcing travel time).

    Durations in minutes.  Returns None for non-positive distance or
    duration (the caller excludes such trips, it is not an error).
    """
    if distance <= 0 or duration <= 0:
        return None
    gap = None if transit_time is None else (transit_time - duration) / duration
    return TripMetrics(
        dollars_per_mile=fare / distance,
        dollars_per_minute=fare / duration,
        avg_speed_mph=distance / (duration / 60.0),
        transit_gap=gap,
    )


def _cluster_metrics(trips: list[TripRecord]) -> tuple[Optional[TripMetrics], int]:
    """Ratio-of-means economics over the usable trips of one group."""
    usable = [t for t in trips if t.distance_mi > 0 and t.duration_s > 0]
    excluded = len(trips) - len(usable)
    if not usable:
        return None, excluded
    fare = float(np.mean([t.fare_total_usd for t in usable]))
    dist = float(np.mean([t.distance_mi for t in usable]))
    dur = float(np.mean([t.duration_min for t in usable]))
    with_transit = [t for t in usable if t.transit_time_s is not None]
    gap = None
    if with_transit:
        transit = float(np.mean([t.transit_time_min for t in with_transit]))
        dur_t = float(np.mean([t.duration_min for t in with_transit]))
        gap = (transit - dur_t) / dur_t
    return (
        TripMetrics(
            dollars_per_mile=fare / dist,
            dollars_per_minute=fare / dur,
            avg_speed_mph=dist / (dur / 60.0),
            transit_gap=gap,
        ),
        excluded,
    )


def profile_clusters(
    d: MixedDataset, model: ClusterModel, trips: list[TripRecord]
) -> tuple[list[ClusterProfile], SharingSummary]:
    """Table of per-cluster summaries plus the dataset-level sharing rates.

    ``trips[i]`` must correspond to dataset row i (use the row-index map
    from ingestion).  Numeric means are reported in original units.
    """
    if len(trips) != d.n or len(model.assignment) != d.n:
        raise SchemaError("trips / dataset / assignment lengths differ")
    assignment = np.asarray(model.assignment)
    original = d.numeric_original()
    schema = d.schema

    profiles = []
    for l in range(model.k):
        members = np.flatnonzero(assignment == l)
        member_trips = [trips[i] for i in members]
        numeric_summary = {}
        for j, (name, _unit) in enumerate(schema.numeric_attrs):
            mean = float(np.mean(original[members, j]))
            numeric_summary[name] = (mean, pooled_percentile(mean, original[:, j]))
        categorical_summary = {}
        for j, (name, _labels) in enumerate(schema.categorical_attrs):
            col = d.categorical[members, j]
            codes, counts = np.unique(col, return_counts=True)
            top = codes[np.argmax(counts)]
            categorical_summary[name] = (
                schema.decode_code(j, int(top)),
                100.0 * float(np.max(counts)) / len(members),
            )
        ridesplit = 100.0 * sum(t.shared_matched for t in member_trips) / len(member_trips)
        metrics, excluded = _cluster_metrics(member_trips)
        profiles.append(
            ClusterProfile(
                cluster_id=l,
                share_pct=100.0 * len(members) / d.n,
                numeric_summary=numeric_summary,
                categorical_summary=categorical_summary,
                percent_ridesplitting=ridesplit,
                metrics=metrics,
                excluded_from_metrics=excluded,
            )
        )

    n_auth = sum(t.shared_authorized for t in trips)
    n_matched = sum(t.shared_matched for t in trips)
    sharing = SharingSummary(
        authorized_pct=100.0 * n_auth / len(trips),
        matched_given_authorized_pct=(100.0 * n_matched / n_auth) if n_auth else 0.0,
        pooled_pct=100.0 * n_matched / len(trips),
    )
    return profiles, sharing


def top_locations(
    trips: list[TripRecord], model: ClusterModel, direction: str, top_n: int = 6
) -> list[LocationShare]:
    """Top areas per cluster by trip share; ties broken by area id."""
    if direction not in ("origin", "destination"):
        raise SchemaError(f"direction must be origin or destination, got {direction!r}")
    if len(trips) != len(model.assignment):
        raise SchemaError("trips / assignment lengths differ")
    attr = "origin_tract" if direction == "origin" else "dest_tract"
    assignment = np.asarray(model.assignment)
    out = []
    for l in range(model.k):
        members = [trips[i] for i in np.flatnonzero(assignment == l)]
        counts: dict[str, int] = {}
        for t in members:
            area = getattr(t, attr)
            counts[area] = counts.get(area, 0) + 1
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
        out.append(
            LocationShare(
                cluster_id=l,
                direction=direction,
                ranked=tuple((area, 100.0 * c / len(members)) for area, c in ranked),
            )
        )
    return out


# ---------------------------------------------------------------------------
# CSV emitters
# ---------------------------------------------------------------------------


def _header(model: ClusterModel, extra: str = "") -> str:
    base = f"# {MODEL_SCHEMA_VERSION} seed={model.fit_meta.seed}"
    return base + (f" {extra}" if extra else "")


def profiles_to_csv(
    profiles: list[ClusterProfile], sharing: SharingSummary, model: ClusterModel, extra: str = ""
) -> str:
    buf = io.StringIO()
    buf.write(_header(model, extra) + "\n")
    buf.write("# derived metrics are ratios of cluster means, not means of per-trip ratios\n")
    buf.write(
        f"# sharing: authorized={sharing.authorized_pct:.2f}% "
        f"matched_given_authorized={sharing.matched_given_authorized_pct:.2f}% "
        f"pooled={sharing.pooled_pct:.2f}%\n"
    )
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["cluster", "row_kind", "name", "value", "pooled_percentile_or_pct"])
    for p in profiles:
        writer.writerow([p.cluster_id, "share", "share_pct", repr(p.share_pct), ""])
        for name, (mean, pct) in p.numeric_summary.items():
            writer.writerow([p.cluster_id, "numeric", name, repr(mean), repr(pct)])
        for name, (label, freq) in p.categorical_summary.items():
            writer.writerow([p.cluster_id, "categorical", name, label, repr(freq)])
        writer.writerow(
            [p.cluster_id, "share", "percent_ridesplitting", repr(p.percent_ridesplitting), ""]
        )
        if p.metrics is not None:
            m = p.metrics
            writer.writerow([p.cluster_id, "derived", "dollars_per_mile", repr(m.dollars_per_mile), ""])
            writer.writerow(
                [p.cluster_id, "derived", "dollars_per_minute", repr(m.dollars_per_minute), ""]
            )
            writer.writerow([p.cluster_id, "derived", "avg_speed_mph", repr(m.avg_speed_mph), ""])
            if m.transit_gap is not None:
                writer.writerow(
                    [p.cluster_id, "derived", "transit_gap_pct", repr(100.0 * m.transit_gap), ""]
                )
        writer.writerow(
            [p.cluster_id, "derived", "excluded_from_metrics", p.excluded_from_metrics, ""]
        )
    return buf.getvalue()


def locations_to_csv(shares: list[LocationShare], model: ClusterModel, extra: str = "") -> str:
    buf = io.StringIO()
    buf.write(_header(model, extra) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["cluster", "direction", "rank", "area", "share_pct"])
    for s in shares:
        for rank, (area, pct) in enumerate(s.ranked, start=1):
            writer.writerow([s.cluster_id, s.direction, rank, area, repr(pct)])
    return buf.getvalue()
