"""Command-line experiment harness.

Subcommands: `run` executes an epsilon x T x repeat grid and writes one
report JSON plus a trace CSV per run and a rebuildable aggregate CSV;
`mixture-error` estimates (and optionally releases) the best mixture error
of a public support; `synthesize` samples records from a saved run report.

Exit codes: 0 success, 1 config error, 2 data error, 3 budget error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import version_string
from .accounting import BudgetLedger
from .domain import Dataset, Schema, empirical_distribution
from .engine import (
    RunConfig,
    RunReport,
    best_mixture_error,
    release_mixture_error,
    run_mwem,
    run_pmw_pub,
    synthesize_dataset,
)
from .errors import BudgetExceededError, ConfigError, DataError
from .ingest import SplitSpec, biased_split, load_csv, subsample_public
from .queries import QuerySet, build_workloads

METRICS = ("max", "mean", "mse")


@dataclass
class ExperimentConfig:
    schema: str
    queries: dict
    epsilons: list[float]
    iterations: list[int]
    algorithm: str = "pmwpub"
    csv: str | None = None
    private_csv: str | None = None
    public_csv: str | None = None
    split: dict | None = None
    public_sample_fraction: float = 1.0
    delta: float | None = None
    selection: str = "permute_and_flip"
    output_mode: str = "last"
    replay: bool = True
    mixture_probe_epsilon: float | None = None
    repeats: int = 5
    seed: int = 0
    out_dir: str = "runs"
    synthetic_rows: int | None = None
    diagnostics: bool = False

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON/TOML table")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("schema", "queries", "epsilons", "iterations"):
            if key not in doc:
                raise ConfigError(f"config key {key!r} is required")
        doc = dict(doc)
        iterations = doc["iterations"]
        doc["iterations"] = [int(t) for t in (iterations if isinstance(iterations, list) else [iterations])]
        doc["epsilons"] = [float(e) for e in doc["epsilons"]]
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.algorithm not in ("pmwpub", "mwem"):
            raise ConfigError("algorithm must be 'pmwpub' or 'mwem'")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ConfigError("epsilons must be a nonempty list of positive values")
        if not self.iterations or any(t < 1 for t in self.iterations):
            raise ConfigError("iterations must be positive")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        for key in ("k", "workloads"):
            if key not in self.queries:
                raise ConfigError(f"queries.{key} is required")
        if self.csv is None and self.private_csv is None:
            raise ConfigError("supply data.csv or private_csv")
        if self.csv is not None and self.private_csv is not None:
            raise ConfigError("supply either csv (with a split) or explicit private/public CSVs")
        if self.algorithm == "pmwpub" and self.csv is None and self.public_csv is None:
            raise ConfigError("pmwpub needs a public dataset (csv+split or public_csv)")

    def resolved(self) -> dict:
        out = {f: getattr(self, f) for f in self.__dataclass_fields__}
        out["version"] = version_string()
        return out


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        doc = tomllib.loads(raw.decode())
    else:
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


def cell_seed(base_seed: int, *indices: int) -> int:
    """Derived seed for one (epsilon, T, repeat) cell; stable across runs."""
    return int(np.random.SeedSequence([base_seed, *indices]).generate_state(1)[0])


def prepare_data(cfg: ExperimentConfig) -> tuple[Schema, Dataset, Dataset | None]:
    schema = Schema.load(cfg.schema)
    try:
        if cfg.csv is not None:
            full = load_csv(cfg.csv, schema)
            spec = SplitSpec(**(cfg.split or {}))
            private, public = biased_split(full, spec)
        else:
            private = load_csv(cfg.private_csv, schema)
            public = load_csv(cfg.public_csv, schema) if cfg.public_csv else None
    except OSError as exc:
        raise DataError(f"cannot read data: {exc}") from exc
    if public is not None and cfg.public_sample_fraction != 1.0:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5AB5]))
        public = subsample_public(public, cfg.public_sample_fraction, rng)
    return schema, private, public


def build_queryset(cfg: ExperimentConfig, schema: Schema) -> QuerySet:
    q = cfg.queries
    workloads = build_workloads(schema, int(q["k"]), int(q["workloads"]), int(q.get("seed", 0)))
    return QuerySet(schema, workloads)


def _run_cell(
    cfg: ExperimentConfig,
    private: Dataset,
    public: Dataset | None,
    queryset: QuerySet,
    epsilon: float,
    iterations: int,
    seed: int,
) -> RunReport:
    run_cfg = RunConfig(
        iterations=iterations,
        epsilon=epsilon,
        delta=cfg.delta,
        selection=cfg.selection,
        output_mode=cfg.output_mode,
        replay=cfg.replay,
        mixture_probe_epsilon=cfg.mixture_probe_epsilon,
        synthetic_rows=cfg.synthetic_rows,
        seed=seed,
        diagnostics=cfg.diagnostics,
    )
    if cfg.algorithm == "mwem":
        return run_mwem(private, queryset, run_cfg)
    return run_pmw_pub(private, public, queryset, run_cfg)


def _artifact_stem(epsilon: float, iterations: int, repeat: int) -> str:
    return f"run_eps{epsilon:g}_T{iterations}_rep{repeat}"


def write_run_artifacts(out_dir: Path, stem: str, report: RunReport, experiment: dict) -> None:
    doc = report.to_dict()
    doc["experiment"] = experiment
    with open(out_dir / f"{stem}.json", "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
    columns = ["iteration", "query_index", "score", "measured", "replay_count"]
    if report.trace and "max_error" in report.trace[0]:
        columns.append("max_error")  # diagnostics recompute true errors: not private
    with open(out_dir / f"{stem}_trace.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        writer.writerows(report.trace)
    if report.synthetic is not None:
        report.synthetic.to_csv(out_dir / f"{stem}_synthetic.csv")


_WORKER_STATE: dict = {}


def _pool_cell(args: tuple) -> None:
    config_json, epsilon, iterations, seed, stem = args
    state = _WORKER_STATE.get(config_json)
    if state is None:
        cfg = ExperimentConfig.from_dict(json.loads(config_json))
        schema, private, public = prepare_data(cfg)
        state = (cfg, private, public, build_queryset(cfg, schema))
        _WORKER_STATE[config_json] = state
    cfg, private, public, queryset = state
    report = _run_cell(cfg, private, public, queryset, epsilon, iterations, seed)
    write_run_artifacts(Path(cfg.out_dir), stem, report, cfg.resolved())


def aggregate_runs(out_dir: Path) -> list[dict]:
    """Rebuild the aggregate table from the per-run JSON artifacts alone."""
    groups: dict[tuple[float, int], list[dict]] = {}
    for path in sorted(out_dir.glob("run_*.json")):
        with open(path) as f:
            doc = json.load(f)
        key = (doc["config"]["epsilon"], doc["config"]["iterations"])
        groups.setdefault(key, []).append(doc["error_metrics"])
    rows = []
    for (epsilon, iterations), metrics in sorted(groups.items()):
        for name in METRICS:
            values = np.array([m[name] for m in metrics])
            std_error = (
                float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
            )
            rows.append(
                {
                    "epsilon": epsilon,
                    "T": iterations,
                    "metric": name,
                    "mean": float(values.mean()),
                    "std_error": std_error,
                }
            )
    return rows


def write_aggregate(out_dir: Path) -> Path:
    rows = aggregate_runs(out_dir)
    path = out_dir / "aggregate.csv"
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["epsilon", "T", "metric", "mean", "std_error"])
        writer.writeheader()
        writer.writerows(rows)
    return path


def cmd_run(cfg: ExperimentConfig, jobs: int) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = []
    for ei, epsilon in enumerate(cfg.epsilons):
        for ti, iterations in enumerate(cfg.iterations):
            for rep in range(cfg.repeats):
                seed = cell_seed(cfg.seed, ei, ti, rep)
                cells.append((epsilon, iterations, seed, _artifact_stem(epsilon, iterations, rep)))
    if jobs > 1:
        config_json = json.dumps({k: v for k, v in cfg.resolved().items() if k != "version"})
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_pool_cell, [(config_json, *cell) for cell in cells]))
    else:
        schema, private, public = prepare_data(cfg)
        queryset = build_queryset(cfg, schema)
        experiment = cfg.resolved()
        for epsilon, iterations, seed, stem in cells:
            report = _run_cell(cfg, private, public, queryset, epsilon, iterations, seed)
            write_run_artifacts(out_dir, stem, report, experiment)
            print(
                f"{stem}: max={report.metrics['max']:.4f} mean={report.metrics['mean']:.6f}",
                file=sys.stderr,
            )
    aggregate = write_aggregate(out_dir)
    print(f"wrote {len(cells)} runs and {aggregate}")
    return 0


def cmd_mixture_error(cfg: ExperimentConfig) -> int:
    schema, private, public = prepare_data(cfg)
    if public is None:
        raise ConfigError("mixture-error needs a public dataset")
    queryset = build_queryset(cfg, schema)
    support = empirical_distribution(public).support
    report = best_mixture_error(private, support, queryset)
    out = {
        "estimate": report.estimate,
        "iterations": report.iterations,
        "released": None,
        "config": cfg.resolved(),
    }
    print(f"best mixture error estimate: {report.estimate:.6f} ({report.iterations} iterations)")
    if cfg.mixture_probe_epsilon is not None:
        eps = cfg.mixture_probe_epsilon
        ledger = BudgetLedger(capacity=Fraction(eps) ** 2 / 2)
        rng = np.random.default_rng(cfg.seed)
        released = release_mixture_error(report, private.size, eps, rng, ledger=ledger)
        out["released"] = released
        out["ledger"] = ledger.to_dict()
        print(f"released estimate (Laplace, epsilon={eps:g}): {released:.6f}")
        print(f"ledger: spent {float(ledger.total_rho):.3e} zCDP on the probe")
    print(json.dumps(out, sort_keys=True))
    if cfg.out_dir:
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "mixture_error.json", "w") as f:
            json.dump(out, f, indent=2, sort_keys=True)
    return 0


def cmd_synthesize(report_path: str, rows: int, out_path: str, seed: int) -> int:
    try:
        with open(report_path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise DataError(f"cannot read report {report_path}: {exc}") from exc
    dist = RunReport.load_distribution(doc)
    dataset = synthesize_dataset(dist, rows, np.random.default_rng(seed))
    dataset.to_csv(out_path)
    print(f"wrote {rows} synthetic rows to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmwpub", description=__doc__)
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an epsilon x T x repeat experiment grid")
    run.add_argument("--config", required=True, help="experiment config (JSON or TOML)")
    run.add_argument("--seed", type=int, default=None, help="override the config base seed")
    run.add_argument("--out-dir", default=None, help="override the config output directory")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    mix = sub.add_parser("mixture-error", help="estimate the best mixture error of the public support")
    mix.add_argument("--config", required=True)
    mix.add_argument("--seed", type=int, default=None)
    mix.add_argument("--out-dir", default=None)

    syn = sub.add_parser("synthesize", help="sample synthetic records from a run report")
    syn.add_argument("--report", required=True, help="run report JSON")
    syn.add_argument("--rows", type=int, required=True)
    syn.add_argument("--out", required=True, help="output CSV path")
    syn.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synthesize":
            return cmd_synthesize(args.report, args.rows, args.out, args.seed)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out_dir is not None:
            cfg.out_dir = args.out_dir
        if args.command == "run":
            return cmd_run(cfg, max(1, args.jobs))
        return cmd_mixture_error(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except BudgetExceededError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
