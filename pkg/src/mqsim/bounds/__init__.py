"""Analytic engine: exact worst-case round-trip bounds, the migration-cost
criterion, clock-skew adjustment, and a brute-force sweep oracle."""

from mqsim.bounds.formulas import (
    CommBoundBreakdown,
    CommBoundInput,
    MigrationCriterionInput,
    check_migration_criterion,
    clock_adjustment,
    comm_breakdown,
    migration_bound,
    step_f,
    worst_rtt,
    worst_rtt_shifted,
)
from mqsim.bounds.oracle import brute_force_worst_rtt, sweep_backend_name

__all__ = [
    "CommBoundBreakdown",
    "CommBoundInput",
    "MigrationCriterionInput",
    "brute_force_worst_rtt",
    "check_migration_criterion",
    "clock_adjustment",
    "comm_breakdown",
    "migration_bound",
    "step_f",
    "sweep_backend_name",
    "worst_rtt",
    "worst_rtt_shifted",
]
