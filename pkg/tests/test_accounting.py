import math
from fractions import Fraction

import pytest

from pmwpub.accounting import (
    BudgetLedger,
    PrivacyBudget,
    approx_dp_to_zcdp,
    closed_form_epsilon,
    per_round_budget,
    zcdp_to_approx_dp,
)
from pmwpub.errors import BudgetExceededError, ConfigError

from .oracles import grid_zcdp_epsilon


class TestPerRoundBudget:
    def test_known_values(self):
        assert per_round_budget(1.0, 2) == 0.5
        assert per_round_budget(1.0, 1) == pytest.approx(1 / math.sqrt(2), rel=1e-15)

    def test_composition_identity_exact(self):
        # 2T releases of epsilon0^2/2 recompose to epsilon_tilde^2/2 exactly
        for epsilon_tilde in (0.1, 0.37, 1.0):
            for iterations in (1, 7, 100):
                budget = PrivacyBudget.from_zcdp(epsilon_tilde, 1e-6, iterations)
                assert 2 * iterations * budget.rho_per_release == budget.rho
                assert 2 * iterations * (0.5 * budget.epsilon0**2) == pytest.approx(
                    0.5 * epsilon_tilde**2, abs=1e-12
                )

    def test_rejects_bad_inputs(self):
        with pytest.raises(ConfigError):
            per_round_budget(0.0, 10)
        with pytest.raises(ConfigError):
            per_round_budget(1.0, 0)


class TestZcdpToApproxDp:
    def test_zero_budget(self):
        assert zcdp_to_approx_dp(0.0, 1e-6) == 0.0

    def test_never_exceeds_closed_form(self):
        for epsilon_tilde in (0.05, 0.1, 0.5, 1.0, 2.0):
            for delta in (1e-10, 1e-6, 1e-3):
                tight = zcdp_to_approx_dp(epsilon_tilde, delta)
                assert tight <= closed_form_epsilon(epsilon_tilde, delta) + 1e-12

    def test_known_case_against_grid(self):
        # epsilon_tilde = 0.5, delta = 1e-6: below the ~2.754 closed form and
        # matching a dense alpha scan
        tight = zcdp_to_approx_dp(0.5, 1e-6)
        assert tight <= 0.5 * 0.25 + math.sqrt(2 * math.log(1e6)) * 0.5
        assert tight == pytest.approx(grid_zcdp_epsilon(0.5, 1e-6, points=400_000), abs=1e-6)

    def test_strictly_monotone(self):
        values = [zcdp_to_approx_dp(e, 1e-6) for e in (0.1, 0.2, 0.4, 0.8, 1.6)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_delta_perturbation_is_stable_and_monotone(self):
        base = zcdp_to_approx_dp(0.5, 1e-6)
        lower = zcdp_to_approx_dp(0.5, 1e-6 * 0.99)
        higher = zcdp_to_approx_dp(0.5, 1e-6 * 1.01)
        assert higher < base < lower  # smaller delta costs more epsilon
        assert abs(lower - base) / base < 0.01
        assert abs(higher - base) / base < 0.01

    def test_rejects_bad_delta(self):
        with pytest.raises(ConfigError):
            zcdp_to_approx_dp(0.5, 0.0)
        with pytest.raises(ConfigError):
            zcdp_to_approx_dp(0.5, 1.0)


class TestApproxDpToZcdp:
    def test_round_trip(self):
        for epsilon in (0.1, 0.5, 1.0):
            epsilon_tilde = approx_dp_to_zcdp(epsilon, 1e-10)
            assert zcdp_to_approx_dp(epsilon_tilde, 1e-10) == pytest.approx(epsilon, abs=1e-6)

    def test_small_target_gives_small_scale(self):
        assert approx_dp_to_zcdp(1e-6, 1e-6) < 1e-3

    def test_dominates_crude_closed_form_inverse(self):
        # the tight conversion affords a LARGER zCDP scale than inverting the
        # closed-form bound at the same (epsilon, delta) target
        for epsilon in (0.1, 0.5, 1.0):
            for delta in (1e-10, 1e-6):
                two_l = 2 * math.log(1 / delta)
                crude = -math.sqrt(two_l) + math.sqrt(two_l + 2 * epsilon)
                assert closed_form_epsilon(crude, delta) == pytest.approx(epsilon, rel=1e-9)
                assert approx_dp_to_zcdp(epsilon, delta) >= crude


class TestPrivacyBudget:
    def test_epsilon0_definition(self):
        budget = PrivacyBudget.from_zcdp(1.0, 1e-6, 8)
        assert budget.epsilon0 == 1.0 / math.sqrt(16)

    def test_from_approx_dp(self):
        budget = PrivacyBudget.from_approx_dp(1.0, 1e-9, 10)
        assert budget.reported_epsilon() == pytest.approx(1.0, abs=1e-6)

    def test_validation(self):
        with pytest.raises(ConfigError):
            PrivacyBudget.from_zcdp(-1.0, 1e-6, 10)
        with pytest.raises(ConfigError):
            PrivacyBudget.from_zcdp(1.0, 2.0, 10)


class TestBudgetLedger:
    def test_exact_sum_and_capacity(self):
        budget = PrivacyBudget.from_zcdp(0.3, 1e-6, 5)
        ledger = BudgetLedger(capacity=budget.rho)
        for _ in range(5):
            ledger.charge("select", budget.epsilon0, budget.rho_per_release)
            ledger.charge("measure", budget.epsilon0, budget.rho_per_release)
        assert ledger.total_rho == Fraction(0.3) ** 2 / 2  # exact, zero error
        with pytest.raises(BudgetExceededError):
            ledger.charge("select", budget.epsilon0, budget.rho_per_release)

    def test_to_dict_reports_epsilon(self):
        budget = PrivacyBudget.from_zcdp(0.5, 1e-6, 2)
        ledger = BudgetLedger(capacity=budget.rho)
        ledger.charge("select", budget.epsilon0, budget.rho_per_release)
        doc = ledger.to_dict(budget)
        assert doc["epsilon_tilde"] == 0.5
        assert doc["T"] == 2
        assert len(doc["releases"]) == 1
        assert doc["epsilon_reported"] < zcdp_to_approx_dp(0.5, 1e-6)
