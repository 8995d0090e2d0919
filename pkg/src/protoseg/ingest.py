"""Loading, filtering and joining the four input tables into trip records,
and turning trips into a mixed-type feature matrix.

Input CSV schemas (ISO-8601 local timestamps, '#'-prefixed comment lines
allowed):

    trips:   trip_id, pickup_ts, dropoff_ts, origin_tract, dest_tract,
             duration_s, distance_mi, fare_total_usd, shared_authorized,
             shared_matched, parties
    weather: ts_hour, temp_f, humidity_pct, wind_mph, rain_1h_in,
             snow_1h_in, condition
    transit: origin_tract, dest_tract, depart_bucket (HH:MM, 15-min),
             dow_class (weekday|saturday|sunday), transit_time_s
    taxi:    origin_tract, dest_tract, monthly_trips
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from typing import Iterable, Optional

import numpy as np

from .core import DatasetSchema, MixedDataset, Standardization
from .errors import EmptyDatasetError, JoinError, SchemaError

WEATHER_FILL_MAX_HOURS = 6

TRIP_COLUMNS = [
    "trip_id",
    "pickup_ts",
    "dropoff_ts",
    "origin_tract",
    "dest_tract",
    "duration_s",
    "distance_mi",
    "fare_total_usd",
    "shared_authorized",
    "shared_matched",
    "parties",
]


@dataclass
class TripRecord:
    """One enriched ridesourcing trip."""

    trip_id: str
    pickup_ts: datetime
    dropoff_ts: datetime
    origin_tract: str
    dest_tract: str
    duration_s: float
    distance_mi: float
    fare_total_usd: float
    shared_authorized: bool
    shared_matched: bool
    parties: int
    humidity_pct: Optional[float] = None
    wind_mph: Optional[float] = None
    rain_1h_in: Optional[float] = None
    condition: Optional[str] = None
    weather_missing: bool = False
    transit_time_s: Optional[float] = None
    taxi_monthly_freq: int = 0

    @property
    def minute_after_midnight(self) -> int:
        return self.pickup_ts.hour * 60 + self.pickup_ts.minute

    @property
    def duration_min(self) -> float:
        return self.duration_s / 60.0

    @property
    def transit_time_min(self) -> Optional[float]:
        if self.transit_time_s is None:
            return None
        return self.transit_time_s / 60.0


@dataclass(frozen=True)
class TripFilter:
    """Row filters applied at load time."""

    start_date: Optional[date] = None
    end_date: Optional[date] = None  # inclusive
    weekdays_only: bool = True
    holidays: tuple[date, ...] = ()
    hour_min: int = 6
    hour_max: int = 22  # exclusive: pickups at exactly hour_max are dropped


@dataclass
class IngestReport:
    """Row accounting across filters and joins."""

    rows_read: int = 0
    malformed: int = 0
    dropped_window: int = 0
    dropped_weekend: int = 0
    dropped_holiday: int = 0
    dropped_hours: int = 0
    kept: int = 0
    weather_missing: int = 0
    transit_unmatched: int = 0
    taxi_unmatched: int = 0
    taxi_duplicate_keys: int = 0
    dropped_missing_features: int = 0
    dropped_constant_columns: list = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"rows read: {self.rows_read}", f"malformed rows: {self.malformed}"]
        out.append(f"dropped outside date window: {self.dropped_window}")
        out.append(f"dropped weekends: {self.dropped_weekend}")
        out.append(f"dropped holidays: {self.dropped_holiday}")
        out.append(f"dropped outside hour window: {self.dropped_hours}")
        out.append(f"trips kept: {self.kept}")
        out.append(f"weather missing: {self.weather_missing}")
        out.append(f"transit unmatched: {self.transit_unmatched}")
        out.append(f"taxi unmatched: {self.taxi_unmatched}")
        out.append(f"taxi duplicate keys summed: {self.taxi_duplicate_keys}")
        return out


def _parse_bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "t", "yes", "y")


def _open_csv(path):
    fh = open(path, newline="")
    return csv.DictReader(line for line in fh if not line.startswith("#"))


def _require_columns(reader: csv.DictReader, required: Iterable[str], path) -> None:
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(f"{path}: missing required column(s): {', '.join(missing)}")


def load_trips(path, flt: TripFilter, report: Optional[IngestReport] = None) -> tuple[list[TripRecord], IngestReport]:
    """Read and filter the trips CSV.

    Malformed rows are counted, not fatal.  Filtering on the pickup time:
    date window, weekday/holiday rules, and the half-open hour window
    [hour_min, hour_max).
    """
    report = report or IngestReport()
    reader = _open_csv(path)
    _require_columns(reader, TRIP_COLUMNS, path)
    trips: list[TripRecord] = []
    for row in reader:
        report.rows_read += 1
        try:
            pickup = datetime.fromisoformat(row["pickup_ts"])
            dropoff = datetime.fromisoformat(row["dropoff_ts"])
            trip = TripRecord(
                trip_id=row["trip_id"],
                pickup_ts=pickup,
                dropoff_ts=dropoff,
                origin_tract=row["origin_tract"],
                dest_tract=row["dest_tract"],
                duration_s=float(row["duration_s"]),
                distance_mi=float(row["distance_mi"]),
                fare_total_usd=float(row["fare_total_usd"]),
                shared_authorized=_parse_bool(row["shared_authorized"]),
                shared_matched=_parse_bool(row["shared_matched"]),
                parties=int(row["parties"]),
            )
            if trip.dropoff_ts < trip.pickup_ts or trip.duration_s <= 0:
                raise ValueError("inconsistent timing")
            if trip.distance_mi < 0 or trip.fare_total_usd < 0 or trip.parties < 1:
                raise ValueError("negative quantity")
            if trip.shared_matched and not trip.shared_authorized:
                raise ValueError("matched but not authorized")
        except (ValueError, KeyError):
            report.malformed += 1
            continue
        day = trip.pickup_ts.date()
        if (flt.start_date and day < flt.start_date) or (flt.end_date and day > flt.end_date):
            report.dropped_window += 1
            continue
        if flt.weekdays_only and day.weekday() >= 5:
            report.dropped_weekend += 1
            continue
        if day in flt.holidays:
            report.dropped_holiday += 1
            continue
        hour = trip.pickup_ts.hour
        if hour < flt.hour_min or hour >= flt.hour_max:
            report.dropped_hours += 1
            continue
        trips.append(trip)
    report.kept = len(trips)
    trips.sort(key=lambda t: t.trip_id)
    return trips, report


# ---------------------------------------------------------------------------
# Joins
# ---------------------------------------------------------------------------


def load_weather(path) -> dict[datetime, dict]:
    reader = _open_csv(path)
    _require_columns(reader, ["ts_hour", "humidity_pct", "wind_mph", "rain_1h_in", "condition"], path)
    table = {}
    for row in reader:
        ts = datetime.fromisoformat(row["ts_hour"]).replace(minute=0, second=0, microsecond=0)
        table[ts] = {
            "humidity_pct": float(row["humidity_pct"]),
            "wind_mph": float(row["wind_mph"]),
            "rain_1h_in": float(row["rain_1h_in"]),
            "condition": row["condition"],
        }
    return table


def join_weather(trips: list[TripRecord], weather: dict[datetime, dict], report: IngestReport) -> None:
    """Attach the weather row of the pickup hour (floored); fall back to the
    most recent prior hour within 6 hours, else flag the trip."""
    if not weather:
        raise JoinError("weather table is empty")
    for trip in trips:
        hour = trip.pickup_ts.replace(minute=0, second=0, microsecond=0)
        row = None
        for back in range(WEATHER_FILL_MAX_HOURS + 1):
            row = weather.get(hour - timedelta(hours=back))
            if row is not None:
                break
        if row is None:
            trip.weather_missing = True
            report.weather_missing += 1
            continue
        trip.humidity_pct = row["humidity_pct"]
        trip.wind_mph = row["wind_mph"]
        trip.rain_1h_in = row["rain_1h_in"]
        trip.condition = row["condition"]


def dow_class(day: date) -> str:
    wd = day.weekday()
    if wd < 5:
        return "weekday"
    return "saturday" if wd == 5 else "sunday"


def depart_bucket(ts: datetime) -> str:
    """Pickup time floored to its 15-minute bucket, as HH:MM."""
    minute = (ts.minute // 15) * 15
    return time(ts.hour, minute).strftime("%H:%M")


def load_transit(path) -> dict[tuple, float]:
    reader = _open_csv(path)
    _require_columns(
        reader, ["origin_tract", "dest_tract", "depart_bucket", "dow_class", "transit_time_s"], path
    )
    table = {}
    for row in reader:
        key = (row["origin_tract"], row["dest_tract"], row["depart_bucket"], row["dow_class"])
        table[key] = float(row["transit_time_s"])
    return table


def join_transit(trips: list[TripRecord], transit: dict[tuple, float], report: IngestReport) -> None:
    """Exact (origin, destination, 15-min bucket, day class) lookup; no
    fallback — unmatched trips are left without a transit time."""
    for trip in trips:
        key = (
            trip.origin_tract,
            trip.dest_tract,
            depart_bucket(trip.pickup_ts),
            dow_class(trip.pickup_ts.date()),
        )
        value = transit.get(key)
        if value is None:
            report.transit_unmatched += 1
        else:
            trip.transit_time_s = value


def load_taxi(path, report: Optional[IngestReport] = None) -> dict[tuple[str, str], int]:
    """Monthly taxi counts per OD pair; duplicate keys are summed."""
    reader = _open_csv(path)
    _require_columns(reader, ["origin_tract", "dest_tract", "monthly_trips"], path)
    table: dict[tuple[str, str], int] = {}
    for row in reader:
        key = (row["origin_tract"], row["dest_tract"])
        if key in table and report is not None:
            report.taxi_duplicate_keys += 1
        table[key] = table.get(key, 0) + int(row["monthly_trips"])
    return table


def join_taxi(trips: list[TripRecord], taxi: dict[tuple[str, str], int], report: IngestReport) -> None:
    for trip in trips:
        freq = taxi.get((trip.origin_tract, trip.dest_tract))
        if freq is None:
            report.taxi_unmatched += 1
            trip.taxi_monthly_freq = 0
        else:
            trip.taxi_monthly_freq = freq


# ---------------------------------------------------------------------------
# Feature matrix
# ---------------------------------------------------------------------------

#: How numeric feature names map onto TripRecord values (durations are
#: exposed in minutes in the feature view).
NUMERIC_FEATURE_GETTERS = {
    "duration_min": lambda t: t.duration_min,
    "distance_mi": lambda t: t.distance_mi,
    "fare_total_usd": lambda t: t.fare_total_usd,
    "parties": lambda t: float(t.parties),
    "humidity_pct": lambda t: t.humidity_pct,
    "wind_mph": lambda t: t.wind_mph,
    "rain_1h_in": lambda t: t.rain_1h_in,
    "minute_after_midnight": lambda t: float(t.minute_after_midnight),
    "transit_time_min": lambda t: t.transit_time_min,
    "taxi_monthly_freq": lambda t: float(t.taxi_monthly_freq),
}

CATEGORICAL_FEATURE_GETTERS = {
    "shared_matched": lambda t: "yes" if t.shared_matched else "no",
    "shared_authorized": lambda t: "yes" if t.shared_authorized else "no",
    "condition": lambda t: t.condition,
}

NUMERIC_FEATURE_UNITS = {
    "duration_min": "min",
    "distance_mi": "mi",
    "fare_total_usd": "USD",
    "parties": "count",
    "humidity_pct": "%",
    "wind_mph": "mph",
    "rain_1h_in": "in",
    "minute_after_midnight": "min",
    "transit_time_min": "min",
    "taxi_monthly_freq": "trips/month",
}

DEFAULT_NUMERIC_FEATURES = (
    "duration_min",
    "distance_mi",
    "fare_total_usd",
    "parties",
    "humidity_pct",
    "wind_mph",
    "rain_1h_in",
    "minute_after_midnight",
    "transit_time_min",
    "taxi_monthly_freq",
)
DEFAULT_CATEGORICAL_FEATURES = ("shared_matched",)


@dataclass(frozen=True)
class FeatureSpec:
    numeric: tuple[str, ...] = DEFAULT_NUMERIC_FEATURES
    categorical: tuple[str, ...] = DEFAULT_CATEGORICAL_FEATURES
    standardize: bool = True

    def __post_init__(self):
        for name in self.numeric:
            if name not in NUMERIC_FEATURE_GETTERS:
                raise SchemaError(f"unknown numeric feature: {name!r}")
        for name in self.categorical:
            if name not in CATEGORICAL_FEATURE_GETTERS:
                raise SchemaError(f"unknown categorical feature: {name!r}")
        if not self.numeric and not self.categorical:
            raise SchemaError("feature spec selects no features")


def to_mixed_dataset(
    trips: list[TripRecord], spec: FeatureSpec, report: Optional[IngestReport] = None
) -> tuple[MixedDataset, list[int]]:
    """Feature matrix plus the map from dataset rows back to trip indices.

    Trips missing any selected feature are dropped (counted in the report).
    Numeric columns are z-standardized when ``spec.standardize``; constant
    columns are dropped with a warning since their stddev is zero.
    Categorical labels are dictionary-encoded in first-seen order.
    """
    report = report if report is not None else IngestReport()
    rows = []
    row_map = []
    cat_values: list[list[str]] = [[] for _ in spec.categorical]
    for idx, trip in enumerate(trips):
        numeric = [NUMERIC_FEATURE_GETTERS[name](trip) for name in spec.numeric]
        categorical = [CATEGORICAL_FEATURE_GETTERS[name](trip) for name in spec.categorical]
        if any(v is None for v in numeric) or any(v is None for v in categorical):
            report.dropped_missing_features += 1
            continue
        rows.append((numeric, categorical))
        row_map.append(idx)
    if not rows:
        raise EmptyDatasetError("no usable rows after feature selection")

    numeric = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), len(spec.numeric))
    kept_numeric = list(spec.numeric)
    std = None
    if spec.standardize and kept_numeric:
        stds = numeric.std(axis=0)
        constant = stds == 0
        if np.any(constant):
            dropped = [name for name, c in zip(kept_numeric, constant) if c]
            report.dropped_constant_columns.extend(dropped)
            keep = ~constant
            numeric = numeric[:, keep]
            kept_numeric = [name for name, c in zip(kept_numeric, constant) if not c]
            stds = stds[keep]
        means = numeric.mean(axis=0)
        numeric = (numeric - means) / stds
        std = Standardization(tuple(float(m) for m in means), tuple(float(s) for s in stds))

    # dictionary-encode categoricals in first-seen order
    codes = np.zeros((len(rows), len(spec.categorical)), dtype=np.int64)
    for j in range(len(spec.categorical)):
        seen: dict[str, int] = {}
        for i, (_, cats) in enumerate(rows):
            label = cats[j]
            if label not in seen:
                seen[label] = len(seen)
            codes[i, j] = seen[label]
        cat_values[j] = list(seen)

    schema = DatasetSchema(
        numeric_attrs=tuple((name, NUMERIC_FEATURE_UNITS[name]) for name in kept_numeric),
        categorical_attrs=tuple(
            (name, tuple(labels)) for name, labels in zip(spec.categorical, cat_values)
        ),
        standardization=std,
    )
    return MixedDataset.from_arrays(schema, numeric, codes), row_map


# ---------------------------------------------------------------------------
# Enriched-trips CSV round trip (audit output of the ingest stage)
# ---------------------------------------------------------------------------

ENRICHED_COLUMNS = TRIP_COLUMNS + [
    "humidity_pct",
    "wind_mph",
    "rain_1h_in",
    "condition",
    "weather_missing",
    "transit_time_s",
    "taxi_monthly_freq",
    "minute_after_midnight",
]


def write_enriched_csv(trips: list[TripRecord], path, header_comment: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ENRICHED_COLUMNS)
        for t in trips:
            writer.writerow(
                [
                    t.trip_id,
                    t.pickup_ts.isoformat(),
                    t.dropoff_ts.isoformat(),
                    t.origin_tract,
                    t.dest_tract,
                    repr(t.duration_s),
                    repr(t.distance_mi),
                    repr(t.fare_total_usd),
                    t.shared_authorized,
                    t.shared_matched,
                    t.parties,
                    "" if t.humidity_pct is None else repr(t.humidity_pct),
                    "" if t.wind_mph is None else repr(t.wind_mph),
                    "" if t.rain_1h_in is None else repr(t.rain_1h_in),
                    "" if t.condition is None else t.condition,
                    t.weather_missing,
                    "" if t.transit_time_s is None else repr(t.transit_time_s),
                    t.taxi_monthly_freq,
                    t.minute_after_midnight,
                ]
            )


def read_enriched_csv(path) -> list[TripRecord]:
    reader = _open_csv(path)
    _require_columns(reader, ENRICHED_COLUMNS[:-1], path)
    trips = []
    for row in reader:
        trips.append(
            TripRecord(
                trip_id=row["trip_id"],
                pickup_ts=datetime.fromisoformat(row["pickup_ts"]),
                dropoff_ts=datetime.fromisoformat(row["dropoff_ts"]),
                origin_tract=row["origin_tract"],
                dest_tract=row["dest_tract"],
                duration_s=float(row["duration_s"]),
                distance_mi=float(row["distance_mi"]),
                fare_total_usd=float(row["fare_total_usd"]),
                shared_authorized=_parse_bool(row["shared_authorized"]),
                shared_matched=_parse_bool(row["shared_matched"]),
                parties=int(row["parties"]),
                humidity_pct=float(row["humidity_pct"]) if row["humidity_pct"] else None,
                wind_mph=float(row["wind_mph"]) if row["wind_mph"] else None,
                rain_1h_in=float(row["rain_1h_in"]) if row["rain_1h_in"] else None,
                condition=row["condition"] or None,
                weather_missing=_parse_bool(row["weather_missing"]),
                transit_time_s=float(row["transit_time_s"]) if row["transit_time_s"] else None,
                taxi_monthly_freq=int(row["taxi_monthly_freq"]),
            )
        )
    return trips
