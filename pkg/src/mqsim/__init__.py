"""mqsim: a deterministic discrete-event model of a partitioned multikernel.

Per-sandbox sporadic-server VCPU scheduling, shared-memory mailbox channels,
predictable address-space migration with clock-skew compensation, and an
exact analytic engine for worst-case round-trip communication bounds backed
by a brute-force sweep oracle.
"""

__version__ = "0.1.0"
