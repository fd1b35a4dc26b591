"""Bang-bang pricing cycles under uniform arrivals.

With one arrival per class per step (total size Q = sum q_i) and enough
capacity, the policy "hold at the top price for k - 1 steps, then flush"
orbits a k-cycle: pool states S^(1), ..., S^(k), where S^(l) has the first
n - 1 value columns at l and the top column at 1.  The flush block has
size ((n - 1) k + 1) Q and must fit under the hard cap 2B, giving

    Q (n - 1) / (B - Q)  <=  k  <=  (2B - Q) / (Q (n - 1)),

which admits an integer k whenever

    B >= B_min(Q, n) = (Q / 4) (3 + sqrt(8 n^2 - 16 n + 9))  (> n Q / 2).

The cycle's average overshoot is (((n - 1) k + 1) Q - B) / k, at most
B Q (n - 1) / (2B - Q), and its occupancy measure puts weight 1/k on each
of the k (state, action) pairs — an exact member of the stationarity
polytope.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

from .core import MempoolState, SimConfig, TxClassGrid, UniformArrivals
from .mdp import (
    MempoolEnv,
    check_delta_membership,
    estimate_occupancy,
    transition_kernel,
)

_EPS = 1e-12


def min_capacity(Q: float, n: int) -> float:
    """Smallest B guaranteeing a feasible cycle length exists."""
    if Q <= 0:
        raise ValueError("total arrival size must be positive")
    if n < 2:
        raise ValueError("need at least two value classes")
    return (Q / 4.0) * (3.0 + math.sqrt(8.0 * n * n - 16.0 * n + 9.0))


def k_range(Q: float, n: int, B: float) -> Optional[tuple]:
    """Integer cycle lengths [k_lo, k_hi] admitting a feasible flush, or
    None when the window contains no integer.  Requires B > Q."""
    if n < 2:
        raise ValueError("need at least two value classes")
    if B <= Q:
        raise ValueError(f"capacity B={B} must exceed the arrival size Q={Q}")
    lower = Q * (n - 1) / (B - Q)
    upper = (2 * B - Q) / (Q * (n - 1))
    k_lo = max(1, math.ceil(lower - _EPS))
    k_hi = math.floor(upper + _EPS)
    if k_lo > k_hi:
        return None
    return (k_lo, k_hi)


def overshoot_bound(Q: float, n: int, B: float) -> float:
    """Upper bound B Q (n-1) / (2B - Q) on the cycle's average overshoot."""
    if 2 * B <= Q:
        raise ValueError("needs 2B > Q")
    if n < 2:
        raise ValueError("need at least two value classes")
    return B * Q * (n - 1) / (2 * B - Q)


@dataclass(frozen=True)
class CycleReport:
    B: float
    Q: float
    n: int
    k: int
    flush_size: int
    avg_overshoot: float
    exact_avg_overshoot: float
    bound: float
    periodic: bool
    period: int
    delta_ok: bool
    flow_residual: float
    dropped: int
    max_pool: int
    all_scheduled: bool

    def to_json(self) -> dict:
        return {
            "B": self.B,
            "Q": self.Q,
            "n": self.n,
            "k": self.k,
            "flush_size": self.flush_size,
            "avg_overshoot": self.avg_overshoot,
            "bound": self.bound,
            "periodic": self.periodic,
            "delta_ok": self.delta_ok,
        }

    def dump(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _top_state(grid: TxClassGrid, k: int, cap: int) -> tuple:
    """Flat counts of S^(k): first n-1 columns at k, top column at 1."""
    return tuple(
        k if j < grid.n - 1 else 1 for _ in range(grid.m) for j in range(grid.n)
    )


def simulate_cycle(
    grid: TxClassGrid,
    B: float,
    k: int,
    cycles: int = 50,
) -> CycleReport:
    """Run the hold/flush policy and verify every cycle property.

    Checks: the orbit is k-periodic; the flush block has the predicted
    size and fits under 2B; nothing is dropped and the pool stays bounded
    (every arrival is eventually scheduled); the measured average
    overshoot matches (((n-1)k + 1) Q - B) / k and respects the bound; and
    the empirical occupancy over whole cycles sits in the stationarity
    polytope to 1e-9.
    """
    Q = grid.total_size
    n = grid.n
    rng_k = k_range(Q, n, B)
    if rng_k is None or not rng_k[0] <= k <= rng_k[1]:
        raise ValueError(f"k={k} outside the feasible range {rng_k} for B={B}, Q={Q}")
    cap = max(k + 2, 4)
    config = SimConfig(B=B, c_hold=0.0, c_over=1.0, seed=0, L=cap, H=1, iterations=1)
    env = MempoolEnv(grid, config, UniformArrivals(grid))
    flush_state = _top_state(grid, k, cap)

    def policy(counts: tuple) -> int:
        return 1 if counts == flush_state else n

    steps = cycles * k + k + 2  # warm-up plus whole cycles
    env.reset()
    seen: dict = {}
    trajectory = []  # (counts, action, q_sched, dropped)
    state = env.current_key()
    first_rep, period = None, None
    for t in range(steps):
        a = policy(state)
        res = env.step(a)
        trajectory.append((state, a, res.q_sched, res.dropped))
        if state in seen and first_rep is None:
            first_rep, period = seen[state], t - seen[state]
        if state not in seen:
            seen[state] = t
        state = env.current_key()

    periodic = period == k
    # analyse whole periods starting at the first repetition
    start = first_rep if first_rep is not None else 0
    per = period or k
    whole = (len(trajectory) - start) // per
    cycle_steps = trajectory[start : start + whole * per]
    flushes = [q for (_, a, q, _) in cycle_steps if a == 1]
    flush_size = flushes[0] if flushes else 0
    predicted_flush = ((n - 1) * k + 1) * Q
    overshoots = [max(0, q - B) for (_, _, q, _) in cycle_steps]
    avg_over = sum(overshoots) / len(cycle_steps) if cycle_steps else 0.0
    exact_avg = (predicted_flush - B) / k
    dropped = sum(d for (_, _, _, d) in trajectory)
    max_pool = max(
        sum(c * q for c, q in zip(counts, env._sizes_flat)) for (counts, _, _, _) in trajectory
    )
    arrived = len(cycle_steps) * n * Q
    scheduled = sum(q for (_, _, q, _) in cycle_steps)
    all_scheduled = dropped == 0 and scheduled == arrived

    occ = estimate_occupancy(
        [(_unflatten(counts, grid), a) for (counts, a, _, _) in cycle_steps]
    )
    support = UniformArrivals(grid).support()

    def kern(counts, action):
        return transition_kernel(
            MempoolState(counts, cap), action, support, grid, config
        )

    membership = check_delta_membership(occ, kern, tol=1e-9)

    periodic = bool(
        periodic
        and flushes
        and all(f == predicted_flush for f in flushes)
        and len(set(s for (s, _, _, _) in cycle_steps)) == k
    )
    return CycleReport(
        B=B,
        Q=Q,
        n=n,
        k=k,
        flush_size=flush_size,
        avg_overshoot=avg_over,
        exact_avg_overshoot=exact_avg,
        bound=overshoot_bound(Q, n, B),
        periodic=periodic,
        period=per,
        delta_ok=bool(membership.ok),
        flow_residual=membership.flow_residual,
        dropped=dropped,
        max_pool=max_pool,
        all_scheduled=all_scheduled,
    )


def _unflatten(counts: tuple, grid: TxClassGrid) -> tuple:
    n = grid.n
    return tuple(counts[r * n : (r + 1) * n] for r in range(grid.m))
