"""Exact-arithmetic checks of the analytic engine."""

from fractions import Fraction

import pytest

from mqsim.bounds import (CommBoundInput, MigrationCriterionInput,
                          check_migration_criterion, clock_adjustment,
                          comm_breakdown, migration_bound, step_f)
from mqsim.errors import DegenerateInput


def test_step_function():
    assert step_f(1) == 1
    assert step_f(Fraction(1, 2)) == 0
    assert step_f(Fraction(28, 1)) == 1
    assert step_f(0) == 0


class TestMigrationBound:
    def test_golden_values_exact(self):
        assert migration_bound(Fraction("5.4"), 10, 50) == Fraction("5.4")
        assert migration_bound(20, 10, 50) == 100
        assert migration_bound(Fraction("26.4"), 10, 50) == Fraction("106.4")
        assert migration_bound(Fraction("891.4"), 10, 50) == Fraction("4451.4")

    def test_verdicts_against_next_event(self):
        e_s = Fraction("79.8")
        ok = lambda d: check_migration_criterion(
            MigrationCriterionInput(e_s, Fraction(d), 10, 50))
        assert ok("5.4")
        assert not ok("20")
        assert not ok("26.4")
        assert not ok("891.4")

    def test_twenty_is_first_violating_cost(self):
        # below two full budgets the bound stays under the 79.8 next-event
        # time; exactly at 20 it jumps to two periods
        assert migration_bound(Fraction("19.9"), 10, 50) == Fraction("59.9")
        assert Fraction("59.9") <= Fraction("79.8")
        assert migration_bound(20, 10, 50) == 100 > Fraction("79.8")

    def test_right_discontinuity_at_budget_multiples(self):
        for k in (1, 2, 7):
            assert migration_bound(k * 10, 10, 50) == k * 50
            just_below = migration_bound(k * 10 - Fraction(1, 1000), 10, 50)
            assert just_below == (k - 1) * 50 + 10 - Fraction(1, 1000)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            MigrationCriterionInput(0, 1, 1, 1)


class TestClockAdjustment:
    def test_direct_substitution(self):
        assert clock_adjustment(1000, 400, 10, 100) == 480

    def test_synchronized_clocks(self):
        assert clock_adjustment(12345, 12345, 0, 0) == 0

    def test_skew_dominates(self):
        assert clock_adjustment(10_000 + 102, 0, 1, 100) == 10_000


class TestCommBreakdown:
    def test_worked_example_every_symbol(self):
        bd = comm_breakdown(CommBoundInput.from_work(2, 10, 3, 15, 5, 4))
        assert (bd.l_s, bd.l_d) == (1, 2)
        assert (bd.s, bd.d) == (29, 28)
        assert bd.r_floor == 2
        assert (bd.q, bd.p, bd.b) == (7, -1, 2)
        assert (bd.n1, bd.n2, bd.e) == (1, 0, 1)
        assert (bd.w, bd.w_shifted) == (48, 49)

    def test_byte_and_work_forms_agree(self):
        by_work = comm_breakdown(CommBoundInput.from_work(2, 10, 3, 15, 5, 4))
        by_bytes = comm_breakdown(CommBoundInput(
            c_s=2, t_s=10, c_d=3, t_d=15, n_bytes=2048, m_bytes=2048,
            delta_s=Fraction(5, 2048), delta_d=Fraction(4, 2048)))
        assert by_work.w == by_bytes.w == 48
        assert by_work.w_shifted == by_bytes.w_shifted == 49

    def test_leftover_budget_regime(self):
        bd = comm_breakdown(CommBoundInput.from_work(20, 100, 2, 10, 1, 1))
        assert bd.l_s == 19
        assert bd.d == 9
        assert bd.case_id == 1
        assert bd.w == bd.w_shifted == 90

    def test_exact_multiple_convention(self):
        bd = comm_breakdown(CommBoundInput.from_work(5, 20, 3, 15, 5, 1))
        assert bd.l_s == 5          # (n mod C_s) == 0 leaves a "full" leftover
        assert bd.s == 15           # T_s - C_s

    def test_shift_never_negative(self):
        bd = comm_breakdown(CommBoundInput.from_work(7, 19, 4, 11, 3, 2))
        assert bd.e >= 0
        assert bd.w_shifted >= bd.w

    def test_division_guard_always_runnable_sender(self):
        # T_s == C_s: the in-window test degenerates to a sign test on Q
        bd = comm_breakdown(CommBoundInput.from_work(5, 5, 7, 7, 5, 3))
        assert bd.w_shifted >= bd.w

    def test_division_guard_zero_partial_budget(self):
        # P == 0 falls back to comparing C_s against L_s
        bd = comm_breakdown(CommBoundInput.from_work(10, 20, 10, 30, 5, 5))
        assert bd.p == -10 or bd.p == 0 or bd.p > 0  # evaluates without error

    def test_zero_request_raises_unless_opted_in(self):
        with pytest.raises(DegenerateInput):
            CommBoundInput.from_work(2, 10, 3, 15, 0, 4)
        inp = CommBoundInput.from_work(2, 10, 3, 15, 0, 4, allow_zero_request=True)
        comm_breakdown(inp)

    def test_invalid_vcpu_parameters(self):
        with pytest.raises(ValueError):
            CommBoundInput.from_work(11, 10, 3, 15, 5, 4)
        with pytest.raises(ValueError):
            CommBoundInput.from_work(2, 10, 0, 15, 5, 4)

    def test_json_view_round_trips_ints(self):
        bd = comm_breakdown(CommBoundInput.from_work(2, 10, 3, 15, 5, 4))
        d = bd.as_dict()
        assert d["W"] == 48 and d["W_shifted"] == 49
        assert d["inputs"]["request_work"] == 5

    def test_extraction_helpers(self):
        from mqsim.bounds import worst_rtt, worst_rtt_shifted
        inp = CommBoundInput.from_work(2, 10, 3, 15, 5, 4)
        assert worst_rtt(inp) == 48
        assert worst_rtt_shifted(inp) == 49
