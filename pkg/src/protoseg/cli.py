"""Command-line surface: ingest -> elbow -> fit -> profile -> predict.

Stages hand off via files so each can be run and diffed independently.
Every output embeds the config hash and seed in a comment header, and all
randomness flows from the single configured seed.

Exit codes: 0 ok, 2 config error, 3 data error, 4 infeasible model.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import date
from pathlib import Path

from . import core, ingest, profiling, select
from .fit import INIT_PLUS_PLUS, FitConfig
from .fit import fit as fit_model
from .fit import predict as predict_record
from .errors import (
    InfeasibleKError,
    InsufficientCurveError,
    ProtosegError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4


class ConfigError(Exception):
    pass


def parse_config_file(path: Path) -> dict[str, str]:
    """Flat ``key = value`` file; blank lines and '#' comments ignored."""
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    config: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        config[key.strip()] = value.strip()
    return config


def config_hash(config: dict[str, str]) -> str:
    canonical = json.dumps(config, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _parse_date(text: str) -> date:
    return date.fromisoformat(text)


def _get_filter(config: dict[str, str]) -> ingest.TripFilter:
    holidays = tuple(
        _parse_date(t.strip()) for t in config.get("holidays", "").split(",") if t.strip()
    )
    return ingest.TripFilter(
        start_date=_parse_date(config["start_date"]) if "start_date" in config else None,
        end_date=_parse_date(config["end_date"]) if "end_date" in config else None,
        weekdays_only=config.get("weekdays_only", "true").lower() != "false",
        holidays=holidays,
        hour_min=int(config.get("hour_min", 6)),
        hour_max=int(config.get("hour_max", 22)),
    )


def _get_feature_spec(config: dict[str, str]) -> ingest.FeatureSpec:
    kwargs = {}
    if "numeric_features" in config:
        kwargs["numeric"] = tuple(t.strip() for t in config["numeric_features"].split(",") if t.strip())
    if "categorical_features" in config:
        kwargs["categorical"] = tuple(
            t.strip() for t in config["categorical_features"].split(",") if t.strip()
        )
    kwargs["standardize"] = config.get("standardize", "true").lower() != "false"
    return ingest.FeatureSpec(**kwargs)


def _get_fit_config(config: dict[str, str], k: int | None = None) -> FitConfig:
    return FitConfig(
        k=k if k is not None else int(config.get("k", 2)),
        gamma=float(config["gamma"]) if "gamma" in config else None,
        seed=int(config.get("seed", 0)),
        restarts=int(config.get("restarts", 10)),
        max_iter=int(config.get("max_iter", 100)),
        tol=float(config.get("tol", 1e-8)),
        init=config.get("init", INIT_PLUS_PLUS),
    )


def _require(config: dict[str, str], key: str) -> str:
    if key not in config:
        raise ConfigError(f"missing config key: {key}")
    return config[key]


def _require_path(config: dict[str, str], key: str) -> Path:
    path = Path(_require(config, key))
    if not path.exists():
        raise ConfigError(f"{key} path does not exist: {path}")
    return path


def _out_dir(config: dict[str, str], args) -> Path:
    out = Path(args.out or config.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(config, args):
    trips = ingest.read_enriched_csv(_require_path(config, "enriched"))
    dataset, row_map = ingest.to_mixed_dataset(trips, _get_feature_spec(config))
    return trips, dataset, row_map


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(config: dict[str, str], args) -> int:
    out = _out_dir(config, args)
    trips, report = ingest.load_trips(_require_path(config, "trips"), _get_filter(config))
    weather = ingest.load_weather(_require_path(config, "weather"))
    ingest.join_weather(trips, weather, report)
    if "transit" in config:
        transit = ingest.load_transit(_require_path(config, "transit"))
        ingest.join_transit(trips, transit, report)
    if "taxi" in config:
        taxi = ingest.load_taxi(_require_path(config, "taxi"), report)
        ingest.join_taxi(trips, taxi, report)
    header = f"config_hash={config_hash(config)} seed={config.get('seed', 0)}"
    ingest.write_enriched_csv(trips, out / "enriched_trips.csv", header)
    report_path = out / "ingest_report.txt"
    report_path.write_text("\n".join(report.lines()) + "\n")
    for line in report.lines():
        print(line)
    return EXIT_OK


def cmd_elbow(config: dict[str, str], args) -> int:
    out = _out_dir(config, args)
    _trips, dataset, _row_map = _load_dataset(config, args)
    k_min = int(args.k_min or config.get("k_min", 2))
    k_max = int(args.k_max or config.get("k_max", 14))
    cfg = _get_fit_config(config, k=max(k_min, 1))
    curve, _models = select.elbow_scan(dataset, k_min, k_max, cfg, nested=True)
    header = f"config_hash={config_hash(config)} seed={cfg.seed}"
    (out / "elbow_curve.csv").write_text(select.curve_to_csv(curve, header))
    k_star = select.detect_elbow(curve)
    for e in curve.entries:
        print(f"k={e.k} cost={e.cost!r}")
    print(f"recommended k (advisory): {k_star}")
    return EXIT_OK


def cmd_fit(config: dict[str, str], args) -> int:
    out = _out_dir(config, args)
    trips, dataset, row_map = _load_dataset(config, args)
    cfg = _get_fit_config(config, k=int(args.k) if args.k else None)
    model = fit_model(dataset, cfg)
    core.save_model(model, out / "model.json")
    header = f"# config_hash={config_hash(config)} seed={cfg.seed}\n"
    lines = [header, "trip_id,cluster\n"]
    for row, cluster in enumerate(model.assignment):
        lines.append(f"{trips[row_map[row]].trip_id},{cluster}\n")
    (out / "assignments.csv").write_text("".join(lines))
    gamma_src = "estimated" if model.fit_meta.gamma_estimated else "configured"
    print(f"k={model.k} gamma={model.gamma!r} ({gamma_src}) cost={model.total_cost!r}")
    return EXIT_OK


def cmd_profile(config: dict[str, str], args) -> int:
    out = _out_dir(config, args)
    trips, dataset, row_map = _load_dataset(config, args)
    model = core.load_model(Path(args.model or _require(config, "model")))
    if len(model.assignment) != dataset.n:
        print("error: model assignment does not match the enriched trips", file=sys.stderr)
        return EXIT_DATA
    aligned = [trips[i] for i in row_map]
    profiles, sharing = profiling.profile_clusters(dataset, model, aligned)
    extra = f"config_hash={config_hash(config)}"
    (out / "profiles.csv").write_text(profiling.profiles_to_csv(profiles, sharing, model, extra))
    top_n = int(config.get("top_n", 6))
    origins = profiling.top_locations(aligned, model, "origin", top_n)
    dests = profiling.top_locations(aligned, model, "destination", top_n)
    (out / "locations.csv").write_text(profiling.locations_to_csv(origins + dests, model, extra))
    for p in profiles:
        print(
            f"cluster {p.cluster_id}: share={p.share_pct:.2f}% "
            f"ridesplitting={p.percent_ridesplitting:.2f}%"
        )
    return EXIT_OK


def cmd_predict(config: dict[str, str], args) -> int:
    out = _out_dir(config, args)
    trips, dataset, row_map = _load_dataset(config, args)
    model = core.load_model(Path(args.model or _require(config, "model")))
    header = f"# config_hash={config_hash(config)} seed={model.fit_meta.seed}\n"
    lines = [header, "trip_id,cluster\n"]
    for row in range(dataset.n):
        cluster = predict_record(model, dataset.record(row))
        lines.append(f"{trips[row_map[row]].trip_id},{cluster}\n")
    (out / "predictions.csv").write_text("".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protoseg", description="Mixed-type trip segmentation pipeline"
    )
    parser.add_argument("--config", required=True, help="key = value config file")
    parser.add_argument("--out", help="output directory (overrides config)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="filter and join the input tables")

    p_elbow = sub.add_parser("elbow", help="scan k and report the cost curve")
    p_elbow.add_argument("--k-min", type=int)
    p_elbow.add_argument("--k-max", type=int)

    p_fit = sub.add_parser("fit", help="fit the clustering model")
    p_fit.add_argument("--k", type=int)
    p_fit.add_argument("--gamma", type=float)
    p_fit.add_argument("--seed", type=int)
    p_fit.add_argument("--restarts", type=int)
    p_fit.add_argument("--max-iter", type=int)
    p_fit.add_argument("--no-standardize", action="store_true")

    p_profile = sub.add_parser("profile", help="per-cluster summary tables")
    p_profile.add_argument("--model")

    p_predict = sub.add_parser("predict", help="assign trips under a saved model")
    p_predict.add_argument("--model")

    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "elbow": cmd_elbow,
    "fit": cmd_fit,
    "profile": cmd_profile,
    "predict": cmd_predict,
}


def _apply_overrides(config: dict[str, str], args) -> dict[str, str]:
    config = dict(config)
    for key in ("k", "gamma", "seed", "restarts"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = str(value)
    if getattr(args, "max_iter", None) is not None:
        config["max_iter"] = str(args.max_iter)
    if getattr(args, "no_standardize", False):
        config["standardize"] = "false"
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = parse_config_file(Path(args.config))
        config = _apply_overrides(config, args)
        return _COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleKError, InsufficientCurveError) as exc:
        print(f"infeasible model: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ProtosegError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
