"""Zero-concentrated DP budget arithmetic.

A run with scale parameter e (written epsilon_tilde elsewhere) spends
rho = e^2/2 total: T selections at epsilon0-DP (hence epsilon0^2/2-zCDP
each) plus T Gaussian measurements at epsilon0^2/2-zCDP each, where
epsilon0 = e / sqrt(2T). Ledger charges are exact rationals in the spent
parameters, so the 2T-release total equals e^2/2 with zero error.

Conversion to (epsilon, delta)-DP uses the tight infimum over Renyi orders:

    epsilon(delta) = inf_{a>1}  rho*a + log(1/(a*delta))/(a-1) + log(1-1/a)

which never exceeds the closed form rho + sqrt(2*log(1/delta)*2*rho)
(= e^2/2 + sqrt(2 log(1/delta)) * e).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import BudgetExceededError, ConfigError

__all__ = [
    "per_round_budget",
    "zcdp_to_approx_dp",
    "approx_dp_to_zcdp",
    "closed_form_epsilon",
    "PrivacyBudget",
    "LedgerEntry",
    "BudgetLedger",
]


def per_round_budget(epsilon_tilde: float, iterations: int) -> float:
    """Per-round pure-DP budget epsilon0 = epsilon_tilde / sqrt(2T)."""
    if not epsilon_tilde > 0:
        raise ConfigError("epsilon_tilde must be positive")
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    return epsilon_tilde / math.sqrt(2.0 * iterations)


def closed_form_epsilon(epsilon_tilde: float, delta: float) -> float:
    """Loose conversion bound: e^2/2 + sqrt(2 log(1/delta)) * e."""
    _check_delta(delta)
    return 0.5 * epsilon_tilde**2 + math.sqrt(2.0 * math.log(1.0 / delta)) * epsilon_tilde


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must be in (0, 1), got {delta}")


def _conversion_objective(alpha: float, rho: float, delta: float) -> float:
    return rho * alpha + math.log(1.0 / (alpha * delta)) / (alpha - 1.0) + math.log1p(-1.0 / alpha)


def zcdp_to_approx_dp(epsilon_tilde: float, delta: float) -> float:
    """Smallest epsilon such that (epsilon_tilde^2/2)-zCDP gives (epsilon, delta)-DP.

    The objective is convex in alpha with derivative
    rho + (log(alpha) - log(1/delta)) / (alpha-1)^2, so the minimizer is
    located by bisecting the derivative's sign change.
    """
    _check_delta(delta)
    if epsilon_tilde < 0:
        raise ConfigError("epsilon_tilde must be nonnegative")
    if epsilon_tilde == 0.0:
        return 0.0
    rho = 0.5 * epsilon_tilde**2
    log_inv_delta = math.log(1.0 / delta)

    def derivative(alpha: float) -> float:
        return rho + (math.log(alpha) - log_inv_delta) / (alpha - 1.0) ** 2

    lo = 1.0 + 1e-12
    hi = 2.0
    while derivative(hi) < 0.0:
        hi *= 2.0
    while hi - lo > 1e-9 * hi:
        mid = 0.5 * (lo + hi)
        if derivative(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return max(_conversion_objective(0.5 * (lo + hi), rho, delta), 0.0)


def approx_dp_to_zcdp(epsilon: float, delta: float) -> float:
    """Invert zcdp_to_approx_dp: the epsilon_tilde whose tight conversion hits
    the (epsilon, delta) target. Well-defined by strict monotonicity."""
    _check_delta(delta)
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    lo, hi = 0.0, 1.0
    while zcdp_to_approx_dp(hi, delta) < epsilon:
        hi *= 2.0
    while hi - lo > 1e-9 * hi:
        mid = 0.5 * (lo + hi)
        if zcdp_to_approx_dp(mid, delta) < epsilon:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class PrivacyBudget:
    """Resolved budget for one run: zCDP scale, round count, per-round split."""

    epsilon_tilde: float
    iterations: int
    delta: float
    epsilon0: float

    def __post_init__(self):
        if not self.epsilon_tilde > 0:
            raise ConfigError("epsilon_tilde must be positive")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        _check_delta(self.delta)

    @classmethod
    def from_zcdp(cls, epsilon_tilde: float, delta: float, iterations: int) -> "PrivacyBudget":
        return cls(epsilon_tilde, iterations, delta, per_round_budget(epsilon_tilde, iterations))

    @classmethod
    def from_approx_dp(cls, epsilon: float, delta: float, iterations: int) -> "PrivacyBudget":
        return cls.from_zcdp(approx_dp_to_zcdp(epsilon, delta), delta, iterations)

    @property
    def rho(self) -> Fraction:
        """Total zCDP budget epsilon_tilde^2 / 2, exact in the float's value."""
        return Fraction(self.epsilon_tilde) ** 2 / 2

    @property
    def rho_per_release(self) -> Fraction:
        """epsilon0^2/2 expressed exactly as epsilon_tilde^2 / (4T)."""
        return Fraction(self.epsilon_tilde) ** 2 / (4 * self.iterations)

    def reported_epsilon(self) -> float:
        return zcdp_to_approx_dp(self.epsilon_tilde, self.delta)


@dataclass(frozen=True)
class LedgerEntry:
    kind: str  # "select" | "measure" | "mixture_probe"
    epsilon: float  # pure-DP budget of the primitive release
    rho: Fraction  # zCDP cost, exact


@dataclass
class BudgetLedger:
    """Append-only record of primitive releases, capped at a zCDP capacity."""

    capacity: Fraction | None = None
    entries: list[LedgerEntry] = field(default_factory=list)

    @property
    def total_rho(self) -> Fraction:
        return sum((e.rho for e in self.entries), Fraction(0))

    def charge(self, kind: str, epsilon: float, rho: Fraction) -> None:
        if self.capacity is not None and self.total_rho + rho > self.capacity:
            raise BudgetExceededError(
                f"charging {kind} ({float(rho):.3e} zCDP) would exceed capacity "
                f"{float(self.capacity):.3e}; spent {float(self.total_rho):.3e}"
            )
        self.entries.append(LedgerEntry(kind, epsilon, rho))

    def to_dict(self, budget: PrivacyBudget | None = None) -> dict:
        out: dict = {
            "rho_spent": float(self.total_rho),
            "releases": [
                {"kind": e.kind, "epsilon": e.epsilon, "rho": float(e.rho)}
                for e in self.entries
            ],
        }
        if budget is not None:
            out.update(
                epsilon_tilde=budget.epsilon_tilde,
                T=budget.iterations,
                epsilon0=budget.epsilon0,
                delta=budget.delta,
                epsilon_reported=zcdp_to_approx_dp(
                    math.sqrt(2.0 * float(self.total_rho)), budget.delta
                ),
            )
        return out
