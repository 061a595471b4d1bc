"""Core reweighting algorithms.

`run_pmw_pub` privately reweights the support of a public dataset to match a
private dataset's marginal answers: per round it selects an (approximately)
worst-answered query with a private selection mechanism, measures it with
clipped Gaussian noise, and applies multiplicative-weights updates, replaying
past measurements whose error estimate is still at least half the current
one. `run_mwem` is the same loop over the enumerated full domain with a
uniform start, feasible only for small domains.
"""

from __future__ import annotations

import datetime
import json
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import version_string
from .accounting import BudgetLedger, PrivacyBudget
from .domain import (
    Dataset,
    Distribution,
    Schema,
    Support,
    check_same_schema,
    empirical_distribution,
    normalize,
)
from .errors import ConfigError, DataError, InfeasibleDomainError
from .mechanisms import (
    SelectionScores,
    exponential_select,
    gaussian_measure,
    laplace_release,
    permute_and_flip_select,
)
from .queries import AnswerMatrix, MarginalQuery, QuerySet, answers_on_dataset, error_metrics

__all__ = [
    "MeasurementLog",
    "RunConfig",
    "RunReport",
    "MixtureErrorReport",
    "run_pmw_pub",
    "run_mwem",
    "mw_update",
    "replay_pass",
    "best_mixture_error",
    "release_mixture_error",
    "synthesize_dataset",
    "full_domain_support",
    "DEFAULT_DOMAIN_CAP",
]

DEFAULT_DOMAIN_CAP = 10_000_000

_SELECTORS = {
    "permute_and_flip": permute_and_flip_select,
    "exponential": exponential_select,
}


@dataclass
class MeasurementLog:
    """Ordered (query index, clipped noisy answer) pairs, one per round."""

    query_indices: list[int] = field(default_factory=list)
    values: list[float] = field(default_factory=list)

    def append(self, query_index: int, value: float) -> None:
        if not 0.0 <= value <= 1.0:
            raise DataError("measured values must lie in [0, 1]")
        self.query_indices.append(int(query_index))
        self.values.append(float(value))

    def __len__(self) -> int:
        return len(self.query_indices)


@dataclass
class RunConfig:
    """Knobs for one engine run.

    Supply exactly one budget form: `epsilon` (approximate DP, converted
    through the tight zCDP bound with `delta`, default 1/n^2) or
    `epsilon_tilde` (zCDP scale, rho = epsilon_tilde^2/2). `noiseless` is a
    test hook that replaces selection with exact argmax and measurement with
    the exact answer; such runs carry no privacy guarantee and no budget.
    """

    iterations: int
    epsilon: float | None = None
    epsilon_tilde: float | None = None
    delta: float | None = None
    selection: str = "permute_and_flip"
    output_mode: str = "last"  # "last" (default) or "average"
    replay: bool = True
    mixture_probe_epsilon: float | None = None
    synthetic_rows: int | None = None
    seed: int = 0
    noiseless: bool = False
    diagnostics: bool = False
    record_iterates: bool = False  # test/diagnostic hook; memory scales with T
    mwem_domain_cap: int = DEFAULT_DOMAIN_CAP

    def validate(self) -> None:
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.selection not in _SELECTORS:
            raise ConfigError(f"selection must be one of {sorted(_SELECTORS)}")
        if self.output_mode not in ("last", "average"):
            raise ConfigError("output_mode must be 'last' or 'average'")
        budget_forms = (self.epsilon is not None) + (self.epsilon_tilde is not None)
        if self.noiseless:
            if budget_forms:
                raise ConfigError("noiseless runs take no privacy budget")
        elif budget_forms != 1:
            raise ConfigError("supply exactly one of epsilon or epsilon_tilde")
        if self.delta is not None and not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must be in (0, 1)")
        if self.mixture_probe_epsilon is not None and not self.mixture_probe_epsilon > 0:
            raise ConfigError("mixture_probe_epsilon must be positive")
        if self.synthetic_rows is not None and self.synthetic_rows < 1:
            raise ConfigError("synthetic_rows must be >= 1")

    def resolved(self) -> dict:
        return {
            "iterations": self.iterations,
            "epsilon": self.epsilon,
            "epsilon_tilde": self.epsilon_tilde,
            "delta": self.delta,
            "selection": self.selection,
            "output_mode": self.output_mode,
            "replay": self.replay,
            "mixture_probe_epsilon": self.mixture_probe_epsilon,
            "synthetic_rows": self.synthetic_rows,
            "seed": self.seed,
            "noiseless": self.noiseless,
            "diagnostics": self.diagnostics,
            "record_iterates": self.record_iterates,
            "mwem_domain_cap": self.mwem_domain_cap,
        }


@dataclass
class MixtureErrorReport:
    """Best-mixture-error estimate (an upper bound on the true optimum)."""

    estimate: float
    iterations: int
    released: float | None = None

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "iterations": self.iterations, "released": self.released}


@dataclass
class RunReport:
    """Everything a finished run produced, serializable to JSON.

    Error metrics and trace scores are computed against the private data and
    are research diagnostics, not private releases; `budget` covers only the
    differentially private outputs (weights, measurements, probe).
    """

    algorithm: str
    config: dict
    n_private: int
    queries: dict
    schema: Schema
    distribution: Distribution
    metrics: dict
    budget: dict
    trace: list[dict]
    mixture_error: MixtureErrorReport | None = None
    synthetic: Dataset | None = None
    runtime_seconds: float = 0.0
    iterates: list[np.ndarray] | None = None  # weights of A_0..A_T when recorded
    ledger: BudgetLedger | None = None  # exact-arithmetic ledger behind `budget`

    def to_dict(self) -> dict:
        return {
            "version": version_string(),
            "algorithm": self.algorithm,
            "config": self.config,
            "n_private": self.n_private,
            "queries": self.queries,
            "schema": self.schema.to_dict(),
            "support": {
                "points": self.distribution.support.points.tolist(),
                "counts": self.distribution.support.counts.tolist(),
            },
            "weights": self.distribution.weights.tolist(),
            "error_metrics": self.metrics,
            "budget": self.budget,
            "trace": self.trace,
            "mixture_error": self.mixture_error.to_dict() if self.mixture_error else None,
            "synthetic_rows": self.synthetic.size if self.synthetic is not None else None,
            "timestamps": {
                "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
                "runtime_seconds": self.runtime_seconds,
            },
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @staticmethod
    def load_distribution(doc: dict) -> Distribution:
        """Rebuild the output distribution from a report's JSON document."""
        if "weights" not in doc or "support" not in doc:
            raise DataError("report document carries no distribution")
        schema = Schema.from_dict(doc["schema"])
        support = Support(
            schema,
            np.asarray(doc["support"]["points"], dtype=np.int64),
            np.asarray(doc["support"]["counts"], dtype=np.int64),
        )
        return Distribution.from_weights(support, np.asarray(doc["weights"], dtype=np.float64))


def _mw_update_row(dist: Distribution, row: np.ndarray, measured: float) -> Distribution:
    """One multiplicative-weights step with a precomputed predicate row."""
    current = float(row @ dist.weights)
    shifted = dist.log_weights + row * ((measured - current) / 2.0)
    return normalize(Distribution(dist.support, shifted))


def mw_update(dist: Distribution, query: MarginalQuery, measured: float) -> Distribution:
    """Reweight: w(x) *= exp(phi(x) * (measured - q(A)) / 2), then normalize."""
    if not 0.0 <= measured <= 1.0:
        raise DataError("measured value must lie in [0, 1]")
    if not dist.is_normalized:
        raise DataError("distribution must be normalized")
    query.check(dist.support.schema)
    return _mw_update_row(dist, query.matches(dist.support.points), measured)


def replay_pass(
    dist: Distribution,
    log: MeasurementLog,
    matrix: AnswerMatrix,
    rng: np.random.Generator,
) -> tuple[Distribution, int]:
    """Apply the current round's update plus replays of stale measurements.

    Staleness c_i = |q_i(A) - a_i| is computed once against the pre-pass
    distribution; every logged entry with c_i >= c_t/2 (the newest entry
    always qualifies) is applied in a uniformly random order. Returns the
    updated distribution and how many entries were applied.
    """
    if len(log) == 0:
        raise DataError("measurement log is empty")
    weights = dist.weights
    stale = np.array(
        [
            abs(float(matrix.row(qi) @ weights) - a)
            for qi, a in zip(log.query_indices, log.values)
        ]
    )
    selected = np.flatnonzero(stale >= stale[-1] / 2.0)
    out = dist
    for j in rng.permutation(len(selected)):
        i = int(selected[j])
        out = _mw_update_row(out, matrix.row(log.query_indices[i]), log.values[i])
    return out, int(len(selected))


def full_domain_support(schema: Schema, cap: int = DEFAULT_DOMAIN_CAP) -> Support:
    """Enumerate every domain point (lexicographic order), refusing past `cap`."""
    size = schema.domain_size()
    if size > cap:
        raise InfeasibleDomainError(
            f"full domain has {size} points (10^{schema.domain_size_log10():.1f}), "
            f"exceeding the enumeration cap of {cap} points"
        )
    cards = tuple(int(c) for c in schema.cardinalities)
    points = np.stack(np.unravel_index(np.arange(size), cards), axis=1).astype(np.int64)
    return Support(schema, points, np.ones(size, dtype=np.int64))


def _resolve_budget(cfg: RunConfig, n: int) -> PrivacyBudget | None:
    if cfg.noiseless:
        return None
    delta = cfg.delta if cfg.delta is not None else 1.0 / n**2
    if cfg.epsilon_tilde is not None:
        return PrivacyBudget.from_zcdp(cfg.epsilon_tilde, delta, cfg.iterations)
    return PrivacyBudget.from_approx_dp(cfg.epsilon, delta, cfg.iterations)


def _run(
    private: Dataset,
    start: Distribution,
    queryset: QuerySet,
    cfg: RunConfig,
    algorithm: str,
) -> RunReport:
    cfg.validate()
    if private.schema != queryset.schema or private.schema != start.support.schema:
        raise DataError("private data, query set, and support must share a schema")
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    n = private.size
    budget = _resolve_budget(cfg, n)
    ledger = None
    if budget is not None:
        capacity = budget.rho
        if cfg.mixture_probe_epsilon is not None:
            capacity += Fraction(cfg.mixture_probe_epsilon) ** 2 / 2
        ledger = BudgetLedger(capacity=capacity)
    select = _SELECTORS[cfg.selection]

    matrix = AnswerMatrix(start.support, queryset)
    true_answers = answers_on_dataset(queryset, private)
    dist = start
    log = MeasurementLog()
    trace: list[dict] = []
    averaged = np.zeros(len(start.support)) if cfg.output_mode == "average" else None
    iterates: list[np.ndarray] | None = [start.weights.copy()] if cfg.record_iterates else None

    for t in range(1, cfg.iterations + 1):
        if averaged is not None:
            averaged += dist.weights  # running sum of A_0 .. A_{T-1}
        scores = np.abs(matrix.answers(dist.weights) - true_answers)
        if cfg.noiseless:
            chosen = int(np.argmax(scores))
            measured = float(true_answers[chosen])
        else:
            ledger.charge("select", budget.epsilon0, budget.rho_per_release)
            chosen = select(SelectionScores(scores, 1.0 / n, budget.epsilon0), rng)
            ledger.charge("measure", budget.epsilon0, budget.rho_per_release)
            measured = gaussian_measure(float(true_answers[chosen]), n, budget.epsilon0, rng)
        log.append(chosen, measured)
        if cfg.replay:
            dist, replayed = replay_pass(dist, log, matrix, rng)
        else:
            dist = _mw_update_row(dist, matrix.row(chosen), measured)
            replayed = 1
        entry = {
            "iteration": t,
            "query_index": chosen,
            "score": float(scores[chosen]),
            "measured": measured,
            "replay_count": replayed,
        }
        if cfg.diagnostics:
            entry["max_error"] = float(
                np.abs(matrix.answers(dist.weights) - true_answers).max()
            )
        trace.append(entry)
        if iterates is not None:
            iterates.append(dist.weights.copy())

    if averaged is not None:
        output = Distribution.from_weights(start.support, averaged / cfg.iterations)
    else:
        output = dist

    mixture = None
    if cfg.mixture_probe_epsilon is not None:
        mixture = best_mixture_error(private, start.support, queryset, matrix=matrix)
        mixture.released = release_mixture_error(
            mixture, n, cfg.mixture_probe_epsilon, rng, ledger=ledger
        )

    synthetic = None
    if cfg.synthetic_rows is not None:
        synthetic = synthesize_dataset(output, cfg.synthetic_rows, rng)

    if ledger is not None:
        budget_doc = ledger.to_dict(budget)
    else:
        budget_doc = {"non_private": True}

    return RunReport(
        algorithm=algorithm,
        config=cfg.resolved(),
        n_private=n,
        queries=queryset.to_dict(),
        schema=private.schema,
        distribution=output,
        metrics=error_metrics(queryset, private, output, matrix),
        budget=budget_doc,
        trace=trace,
        mixture_error=mixture,
        synthetic=synthetic,
        runtime_seconds=time.perf_counter() - t0,
        iterates=iterates,
        ledger=ledger,
    )


def run_pmw_pub(
    private: Dataset, public: Dataset, queryset: QuerySet, cfg: RunConfig
) -> RunReport:
    """Private reweighting of the public dataset's support (total cost
    epsilon_tilde^2/2 zCDP, plus the probe when configured)."""
    check_same_schema(private, public)
    return _run(private, empirical_distribution(public), queryset, cfg, "pmwpub")


def run_mwem(private: Dataset, queryset: QuerySet, cfg: RunConfig) -> RunReport:
    """Baseline over the enumerated full domain, from a uniform start.

    Raises InfeasibleDomainError when the domain exceeds cfg.mwem_domain_cap.
    """
    support = full_domain_support(private.schema, cfg.mwem_domain_cap)
    return _run(private, Distribution.uniform(support), queryset, cfg, "mwem")


def best_mixture_error(
    private: Dataset,
    support: Support,
    queryset: QuerySet,
    iterations: int = 100,
    matrix: AnswerMatrix | None = None,
) -> MixtureErrorReport:
    """Estimate the lowest achievable worst-query error of any reweighting.

    Runs noise-free multiplicative weights (exact worst query, exact answer)
    and reports the smallest max error seen over iterates and their running
    averages. The average is what the no-regret argument controls; raw
    iterates can cycle without it. Always an upper bound on the true optimum.
    """
    if len(support) < 1:
        raise DataError("support is empty")
    check_same_schema(private, support)
    if matrix is None:
        matrix = AnswerMatrix(support, queryset)
    true_answers = answers_on_dataset(queryset, private)
    weights = np.full(len(support), 1.0 / len(support))
    weight_sum = weights.copy()
    best = float(np.abs(true_answers - matrix.answers(weights)).max())
    for t in range(1, iterations + 1):
        current = matrix.answers(weights)
        gaps = np.abs(true_answers - current)
        i = int(np.argmax(gaps))
        weights = weights * np.exp(matrix.row(i) * (true_answers[i] - current[i]) / 2.0)
        weights /= weights.sum()
        best = min(best, float(np.abs(true_answers - matrix.answers(weights)).max()))
        weight_sum += weights
        averaged = weight_sum / (t + 1)
        best = min(best, float(np.abs(true_answers - matrix.answers(averaged)).max()))
    return MixtureErrorReport(estimate=best, iterations=iterations)


def release_mixture_error(
    report: MixtureErrorReport,
    n: int,
    epsilon_probe: float,
    rng: np.random.Generator,
    ledger: BudgetLedger | None = None,
) -> float:
    """Laplace release of the estimate at sensitivity 1/n, charging the ledger."""
    if not epsilon_probe > 0:
        raise ConfigError("epsilon_probe must be positive")
    if ledger is not None:
        ledger.charge("mixture_probe", epsilon_probe, Fraction(epsilon_probe) ** 2 / 2)
    return laplace_release(report.estimate, 1.0 / n, epsilon_probe, rng)


def synthesize_dataset(dist: Distribution, n_out: int, rng: np.random.Generator) -> Dataset:
    """Sample n_out records i.i.d. from the distribution (post-processing)."""
    if n_out < 1:
        raise DataError("n_out must be >= 1")
    weights = dist.weights
    if abs(weights.sum() - 1.0) > 1e-9:
        raise DataError("distribution is not normalized")
    idx = rng.choice(len(weights), size=n_out, p=weights / weights.sum())
    return Dataset(dist.support.schema, dist.support.points[idx])
