"""Exact-arithmetic worst-case analysis of sporadic-server request/response
round trips and of address-space migration cost.

All functions work on ``fractions.Fraction`` (plain ints are accepted and
promoted), so floor/ceil/mod boundary cases such as a request that exactly
fills a whole number of budgets are computed without rounding error.

Symbols for the round-trip chain, for a sender VCPU (C_s, T_s) and a
receiver VCPU (C_d, T_d) exchanging a request of ``N * delta_s`` execution
ticks and a response of ``M * delta_d + K`` ticks:

    L_s  budget left in the sender's window after the request is sent
    L_d  budget left in the receiver's window after the response is sent
    S    time to emit the request when sending starts with an empty budget
    D    time from the end of the request to the end of the response
    R    elapsed sender periods until the response completes
    Q    offset of the response end past the sender's last used window
    P    sender budget consumed when the response lands inside a window
    B    sender budget remaining at receipt
    W    worst-case round trip when sending starts at the end of a budget
    W'   worst case over any start position inside the budget (W + E)

The derivation assumes contiguous per-period budget windows; see
``mqsim.bounds.oracle`` for the matching brute-force model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

Rational = Union[int, Fraction]


def step_f(x: Rational) -> int:
    """Unit step: 1 if x >= 1 else 0."""
    return 1 if x >= 1 else 0


def clock_adjustment(tsc_d: Rational, tsc_s: Rational,
                     rdtsc_cost: Rational, ipi_cost: Rational) -> Rational:
    """Signed adjustment added to a migrated VCPU's future event times.

    ``tsc_s`` is sampled by the source immediately before the migration
    request IPI is sent; ``tsc_d`` by the destination when that IPI is
    received.  The two timestamp reads and the IPI flight are subtracted so
    the result approximates the pure inter-sandbox clock skew.
    """
    return tsc_d - tsc_s - 2 * rdtsc_cost - ipi_cost


def migration_bound(delta_s: Rational, c_m: Rational, t_m: Rational) -> Rational:
    """Least relative next-event time that tolerates a migration of cost
    ``delta_s`` performed by a migration-thread VCPU with budget ``c_m`` and
    period ``t_m``:

        floor(delta_s / c_m) * t_m + delta_s mod c_m

    Exact on rationals; right-discontinuous at multiples of ``c_m``.
    """
    delta_s, c_m, t_m = Fraction(delta_s), Fraction(c_m), Fraction(t_m)
    return (delta_s // c_m) * t_m + delta_s % c_m


@dataclass(frozen=True)
class MigrationCriterionInput:
    """Inputs of the migration-eligibility inequality."""
    e_s: Fraction          # relative time of the next replenishment or wakeup
    delta_s: Fraction      # total copy cost of the address space
    c_m: Fraction          # migration-thread VCPU budget
    t_m: Fraction          # migration-thread VCPU period

    def __post_init__(self):
        for name in ("e_s", "delta_s", "c_m", "t_m"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def check_migration_criterion(inp: MigrationCriterionInput) -> bool:
    """True when the migrating VCPU's utilization is unaffected by migration."""
    return inp.e_s >= migration_bound(inp.delta_s, inp.c_m, inp.t_m)


from mqsim.errors import DegenerateInput  # noqa: E402  (kept near its only users)


@dataclass(frozen=True)
class CommBoundInput:
    """Parameters of one request/response exchange between two VCPUs."""
    c_s: Fraction
    t_s: Fraction
    c_d: Fraction
    t_d: Fraction
    n_bytes: int = 1
    m_bytes: int = 1
    delta_s: Fraction = Fraction(0)
    delta_d: Fraction = Fraction(0)
    k: Fraction = Fraction(0)
    allow_zero_request: bool = False

    def __post_init__(self):
        for name in ("c_s", "t_s", "c_d", "t_d", "delta_s", "delta_d", "k"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if not (0 < self.c_s <= self.t_s):
            raise ValueError("sender VCPU must satisfy 0 < C_s <= T_s")
        if not (0 < self.c_d <= self.t_d):
            raise ValueError("receiver VCPU must satisfy 0 < C_d <= T_d")
        if self.n_bytes < 0 or self.m_bytes < 0:
            raise ValueError("message sizes must be non-negative")
        if min(self.delta_s, self.delta_d, self.k) < 0:
            raise ValueError("per-byte costs and service time must be non-negative")
        if self.request_work == 0 and not self.allow_zero_request:
            raise DegenerateInput("request cost N*delta_s is zero")

    @classmethod
    def from_work(cls, c_s, t_s, c_d, t_d, request_work, response_work,
                  allow_zero_request: bool = False) -> "CommBoundInput":
        """Build an input directly from total execution costs: the request
        costs ``request_work`` ticks and the response ``response_work`` ticks
        (service time folded in)."""
        return cls(c_s=c_s, t_s=t_s, c_d=c_d, t_d=t_d,
                   n_bytes=1, m_bytes=1,
                   delta_s=Fraction(request_work), delta_d=Fraction(response_work),
                   k=Fraction(0), allow_zero_request=allow_zero_request)

    @property
    def request_work(self) -> Fraction:
        return self.n_bytes * self.delta_s

    @property
    def response_work(self) -> Fraction:
        return self.m_bytes * self.delta_d + self.k


@dataclass(frozen=True)
class CommBoundBreakdown:
    """Every intermediate symbol of the round-trip chain, exact."""
    inp: CommBoundInput
    l_s: Fraction
    l_d: Fraction
    s: Fraction
    d: Fraction
    r: Fraction
    r_floor: int
    q: Fraction
    p: Fraction
    b: Fraction
    n1: Fraction
    n2: Fraction
    e: Fraction
    w: Fraction
    w_shifted: Fraction
    case_id: int

    def as_dict(self) -> dict:
        """JSON-friendly view; exact values rendered as strings when non-integral."""
        def num(x):
            fx = Fraction(x)
            return int(fx) if fx.denominator == 1 else str(fx)
        return {
            "inputs": {
                "C_s": num(self.inp.c_s), "T_s": num(self.inp.t_s),
                "C_d": num(self.inp.c_d), "T_d": num(self.inp.t_d),
                "request_work": num(self.inp.request_work),
                "response_work": num(self.inp.response_work),
            },
            "L_s": num(self.l_s), "L_d": num(self.l_d),
            "S": num(self.s), "D": num(self.d),
            "R_floor": self.r_floor, "Q": num(self.q), "P": num(self.p),
            "B": num(self.b), "E": num(self.e),
            "N1": num(self.n1), "N2": num(self.n2),
            "W": num(self.w), "W_shifted": num(self.w_shifted),
            "case_id": self.case_id,
        }


def _guarded_step(numer: Fraction, denom: Fraction) -> int:
    """step_f(numer/denom) with the zero-denominator conventions:
    a vanishing gap or a vanishing partial budget degenerates to a sign test."""
    if denom == 0:
        return 1 if numer > 0 else 0
    return step_f(Fraction(numer, denom))


def comm_breakdown(inp: CommBoundInput) -> CommBoundBreakdown:
    """Evaluate the full symbol chain for one exchange.

    Multi-period requests and responses (work exceeding a whole budget) are
    accepted and evaluated as written; the shift term E is only derived for
    sub-budget exchanges, so oracle comparisons are the authority outside
    that regime.
    """
    c_s, t_s, c_d, t_d = inp.c_s, inp.t_s, inp.c_d, inp.t_d
    n_work = inp.request_work
    m_work = inp.response_work

    l_s = c_s - (n_work % c_s)
    l_d = c_d - (m_work % c_d)
    s = math.ceil(n_work / c_s) * t_s - l_s
    d = math.ceil(m_work / c_d) * t_d - l_d

    r = Fraction(d - l_s, 1) / t_s
    r_floor = math.floor(r)
    # identical to D - L_s - floor(R)*T_s but stays in [0, T_s) even when D < L_s
    q = (d - l_s) % t_s
    p = q - (t_s - c_s)

    f_gap = _guarded_step(q, t_s - c_s)           # 1 iff response lands inside a window
    b = c_s - f_gap * p
    f_case1 = step_f(Fraction(d, l_s))            # 0 iff response fits the leftover budget
    w = s + d + f_case1 * (l_s + r_floor * t_s - b - d)

    n1 = (1 - f_gap) * min(q, c_s - l_s)
    n2 = f_gap * _guarded_step(c_s - l_s, p) * min(t_s - c_s, c_s - l_s - p)
    e = max(n1, n2)
    w_shifted = w + e

    if f_case1 == 0:
        case_id = 1
    elif f_gap == 0:
        case_id = 2 if r_floor <= 0 else 4
    else:
        case_id = 3 if r_floor <= 0 else 5

    return CommBoundBreakdown(inp=inp, l_s=l_s, l_d=l_d, s=s, d=d, r=r,
                              r_floor=r_floor, q=q, p=p, b=b, n1=n1, n2=n2,
                              e=e, w=w, w_shifted=w_shifted, case_id=case_id)


def worst_rtt(inp: CommBoundInput) -> Fraction:
    """Worst-case round trip when sending starts at the end of the budget."""
    return comm_breakdown(inp).w


def worst_rtt_shifted(inp: CommBoundInput) -> Fraction:
    """Worst-case round trip over any start position inside the budget."""
    return comm_breakdown(inp).w_shifted
