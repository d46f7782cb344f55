"""Brute-force worst-case round-trip sweep.

Both VCPUs are modeled as backlogged sporadic servers: a contiguous budget
window of length C at a fixed offset in every period T.  The sweep enumerates
the receiver window phase ``phi`` in [0, T_d) and the position ``sigma`` in
[0, C_s) of the send start inside the sender's window, advances the request
and the response through the windows with exact integer arithmetic, and
returns the largest observed round trip (send start to response completion).

The inner sweep is the hot kernel.  Three interchangeable backends exist:

* ``numba``  - @njit compiled loops (default when numba imports),
* ``numpy``  - vectorized over the (phi, sigma) grid in chunks,
* ``python`` - plain loops, the reference the other two are tested against.

Set ``MQSIM_ORACLE_BACKEND`` to one of those names to force a backend, or
``MQSIM_NO_NUMBA=1`` to select the numpy path.  ``benchmarks/bench_oracle.py``
compares the backends.
"""

from __future__ import annotations

import math
import os
import warnings
from fractions import Fraction

import numpy as np

from mqsim.bounds.formulas import CommBoundInput
from mqsim.errors import ResolutionTooCoarse

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn
        return deco

# grids smaller than this run on the python reference; JIT warmup costs more
# than it saves there
_SMALL_GRID = 4096


def _send_end(c_s: int, t_s: int, n: int, sigma: int) -> int:
    """Completion time of n ticks of sender work starting at window offset sigma."""
    r = c_s - sigma
    if n <= r:
        return sigma + n
    rem = n - r
    full = rem // c_s
    part = rem - full * c_s
    if part == 0:
        return full * t_s + c_s
    return (full + 1) * t_s + part


def _resp_end(c_d: int, t_d: int, phi: int, t0: int, work: int) -> int:
    """Completion time of the receiver's work, first runnable instant >= t0."""
    if work == 0:
        return t0
    x = (t0 - phi) % t_d
    if x >= c_d:
        t = t0 + (t_d - x)
        x = 0
    else:
        t = t0
    avail = c_d - x
    if work <= avail:
        return t + work
    w2 = work - avail
    k1 = (w2 - 1) // c_d
    last = w2 - k1 * c_d
    return t + avail + (t_d - c_d) + k1 * t_d + last


def _sweep_python(c_s, t_s, c_d, t_d, n, m, res):
    best = -1
    for phi in range(0, t_d, res):
        for sigma in range(0, c_s, res):
            rtt = _resp_end(c_d, t_d, phi, _send_end(c_s, t_s, n, sigma), m) - sigma
            if rtt > best:
                best = rtt
    return best


@njit(cache=True)
def _sweep_numba(c_s, t_s, c_d, t_d, n, m, res):  # pragma: no cover - compiled
    best = -1
    for phi in range(0, t_d, res):
        for sigma in range(0, c_s, res):
            r = c_s - sigma
            if n <= r:
                te = sigma + n
            else:
                rem = n - r
                full = rem // c_s
                part = rem - full * c_s
                if part == 0:
                    te = full * t_s + c_s
                else:
                    te = (full + 1) * t_s + part
            if m == 0:
                tr = te
            else:
                x = (te - phi) % t_d
                if x >= c_d:
                    t = te + (t_d - x)
                    x = 0
                else:
                    t = te
                avail = c_d - x
                if m <= avail:
                    tr = t + m
                else:
                    w2 = m - avail
                    k1 = (w2 - 1) // c_d
                    last = w2 - k1 * c_d
                    tr = t + avail + (t_d - c_d) + k1 * t_d + last
            rtt = tr - sigma
            if rtt > best:
                best = rtt
    return best


def _sweep_numpy(c_s, t_s, c_d, t_d, n, m, res):
    sigma = np.arange(0, c_s, res, dtype=np.int64)
    r = c_s - sigma
    rem = np.maximum(n - r, 1)
    full = rem // c_s
    part = rem - full * c_s
    te_span = np.where(part == 0, full * t_s + c_s, (full + 1) * t_s + part)
    te = np.where(n <= r, sigma + n, te_span)

    phis = np.arange(0, t_d, res, dtype=np.int64)
    best = -1
    chunk = max(1, 10_000_000 // max(1, len(sigma)))
    for lo in range(0, len(phis), chunk):
        phi = phis[lo:lo + chunk, None]
        x = (te[None, :] - phi) % t_d
        waited = x >= c_d
        t = np.where(waited, te[None, :] + t_d - x, te[None, :])
        avail = c_d - np.where(waited, 0, x)
        w2 = np.maximum(m - avail, 1)
        k1 = (w2 - 1) // c_d
        last = w2 - k1 * c_d
        tr = np.where(m <= avail, t + m,
                      t + avail + (t_d - c_d) + k1 * t_d + last)
        if m == 0:
            tr = np.broadcast_to(te[None, :], tr.shape)
        best = max(best, int((tr - sigma[None, :]).max()))
    return best


def sweep_backend_name() -> str:
    """Backend the next full-size sweep will run on."""
    forced = os.environ.get("MQSIM_ORACLE_BACKEND", "").lower()
    if forced in ("numba", "numpy", "python"):
        return forced
    if os.environ.get("MQSIM_NO_NUMBA", "") not in ("", "0"):
        return "numpy"
    return "numba" if _HAVE_NUMBA else "numpy"


def _dispatch(c_s, t_s, c_d, t_d, n, m, res) -> int:
    backend = sweep_backend_name()
    if backend == "numba" and not _HAVE_NUMBA:
        backend = "numpy"
    points = (t_d // res) * (c_s // res)
    forced = "MQSIM_ORACLE_BACKEND" in os.environ
    if backend == "python" or (points < _SMALL_GRID and not forced):
        return _sweep_python(c_s, t_s, c_d, t_d, n, m, res)
    if backend == "numpy":
        return _sweep_numpy(c_s, t_s, c_d, t_d, n, m, res)
    return int(_sweep_numba(c_s, t_s, c_d, t_d, n, m, res))


def brute_force_worst_rtt(inp: CommBoundInput, resolution: int = 1) -> Fraction:
    """Largest round trip found by the (phi, sigma) sweep at ``resolution``.

    Rational inputs are rescaled to a common integer tick, swept exactly, and
    scaled back, so the result is exact at resolution 1.  Emits a
    ``ResolutionTooCoarse`` warning when the step cannot hit every distinct
    alignment of the inputs.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1 tick")
    vals = [inp.c_s, inp.t_s, inp.c_d, inp.t_d, inp.request_work, inp.response_work]
    scale = math.lcm(*(Fraction(v).denominator for v in vals))
    c_s, t_s, c_d, t_d, n, m = (int(Fraction(v) * scale) for v in vals)
    res = resolution * scale

    params = [v for v in (c_s, t_s, c_d, t_d, n, m) if v]
    if res > math.gcd(*params):
        warnings.warn(
            f"resolution {resolution} exceeds the parameter gcd; "
            "the sweep may miss the true maximum", ResolutionTooCoarse)

    best = _dispatch(c_s, t_s, c_d, t_d, n, m, res)
    return Fraction(best, scale)
