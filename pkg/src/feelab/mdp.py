"""Mempool MDP: threshold actions, packing protocol, rewards, kernels.

Action a in {1..n} posts the value threshold v_a; classes with column
index >= a are eligible.  The scheduler then fills a block of size at
most tau in two phases:

  1. entries above the per-class cap L are drained (lexicographic (i, j)
     order) until they are back at L or the block is full;
  2. remaining capacity packs eligible transactions in ascending q_i*v_j
     order, ties broken by (i, j); a transaction that does not fit is
     skipped, later smaller ones may still be packed (first-fit-skip).

Both choices have ablation switches: `descending=True` flips the phase-2
order, `stop_at_misfit=True` ends packing at the first transaction that
does not fit.

The per-step reward charges holding and overshoot:

    r(S, a) = -c_hold * Q_pool(S) - c_over * max(0, Q_sched(S, a) - B).

Transitions add an arrival draw and clamp entries at L (dropping the
excess), so the state space stays finite.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Callable, Iterable, Optional, Sequence, Union

from .core import (
    ArrivalModel,
    MempoolState,
    SimConfig,
    TxClassGrid,
    UniformArrivals,
    apply_dynamics,
    make_rng,
    pool_size,
    sample_arrivals,
)


@dataclass(frozen=True)
class SchedulingOutcome:
    scheduled: tuple  # m x n counts taken from the pool
    q_sched: int

    @property
    def total_count(self) -> int:
        return sum(sum(row) for row in self.scheduled)


def packing_order(grid: TxClassGrid, action: int, descending: bool = False) -> list:
    """Eligible classes for the action, in the protocol's packing order."""
    if not 1 <= action <= grid.n:
        raise ValueError(f"action must be in 1..{grid.n}, got {action}")
    cells = [
        (grid.sizes[i] * grid.values[j], i, j)
        for i in range(grid.m)
        for j in range(action - 1, grid.n)
    ]
    cells.sort(reverse=descending)
    if descending:  # keep (i, j) ascending within equal weights
        cells.sort(key=lambda c: (-c[0], c[1], c[2]))
    return [(i, j, grid.sizes[i]) for (_, i, j) in cells]


def _fit(budget_int, budget_float, q):
    if budget_int is not None:
        return budget_int // q
    f = int(budget_float / q + 1e-12)
    return f if f >= 0 else 0


def schedule(
    state: MempoolState,
    action: int,
    grid: TxClassGrid,
    tau: float,
    descending: bool = False,
    stop_at_misfit: bool = False,
) -> SchedulingOutcome:
    """Apply the two-phase packing protocol; returns counts and size."""
    if state.m != grid.m or state.n != grid.n:
        raise ValueError("state shape does not match grid")
    if tau <= 0:
        raise ValueError("block budget must be positive")
    tau_int = int(tau) if float(tau).is_integer() else None
    used = 0
    taken = [[0] * grid.n for _ in range(grid.m)]
    L = state.cap

    def remaining_int():
        return tau_int - used if tau_int is not None else None

    # phase 1: drain entries above the cap among eligible classes
    for i in range(grid.m):
        for j in range(action - 1, grid.n):
            over = state.counts[i][j] - L
            if over > 0:
                fit = _fit(remaining_int(), tau - used, grid.sizes[i])
                take = min(over, fit)
                if take > 0:
                    taken[i][j] += take
                    used += take * grid.sizes[i]

    # phase 2: ascending weight first-fit-skip over what is left
    for i, j, q in packing_order(grid, action, descending):
        avail = state.counts[i][j] - taken[i][j]
        if avail <= 0:
            continue
        fit = _fit(remaining_int(), tau - used, q)
        take = min(avail, fit)
        if take > 0:
            taken[i][j] += take
            used += take * q
        elif stop_at_misfit:
            break
    return SchedulingOutcome(
        scheduled=tuple(tuple(row) for row in taken), q_sched=used
    )


def reward(
    state: MempoolState,
    outcome: SchedulingOutcome,
    grid: TxClassGrid,
    c_hold: float,
    c_over: float,
    B: float,
) -> float:
    """-c_hold * pending size - c_over * positive part of the overshoot."""
    over = outcome.q_sched - B
    return -c_hold * pool_size(state, grid) - (c_over * over if over > 0 else 0.0)


def step(
    state: MempoolState,
    action: int,
    arrivals,
    grid: TxClassGrid,
    config: SimConfig,
    descending: bool = False,
    stop_at_misfit: bool = False,
) -> tuple:
    """One transition: schedule, collect reward, add arrivals, clamp.

    Returns (next_state, reward, outcome, dropped).
    """
    outcome = schedule(state, action, grid, config.tau, descending, stop_at_misfit)
    r = reward(state, outcome, grid, config.c_hold, config.c_over, config.B)
    nxt, dropped = apply_dynamics(state, arrivals, outcome.scheduled)
    return nxt, r, outcome, dropped


# --- fast environment for training loops -------------------------------------


@dataclass
class StepResult:
    state_key: tuple  # flat counts of the state the action was taken in
    action: int
    reward: float
    q_pool: int
    q_sched: int
    dropped: int


class MempoolEnv:
    """Mutable episode runner over flat count tuples (row-major).

    Exposes the same protocol semantics as `step`, with the packing order
    and per-entry sizes precomputed per action.  The arrival stream is
    owned by this object, seeded from the config.
    """

    def __init__(
        self,
        grid: TxClassGrid,
        config: SimConfig,
        arrivals: ArrivalModel,
        descending: bool = False,
        stop_at_misfit: bool = False,
        rng_stream: int = 0,
    ):
        self.grid = grid
        self.config = config
        self.arrival_model = arrivals
        self.n_actions = grid.n
        self._rng = make_rng(config.seed, rng_stream)
        self._m, self._n = grid.m, grid.n
        self._cells = self._m * self._n
        self._sizes_flat = tuple(
            grid.sizes[i] for i in range(self._m) for _ in range(self._n)
        )
        self._orders = []
        for a in range(1, grid.n + 1):
            order = packing_order(grid, a, descending)
            self._orders.append(tuple((i * self._n + j, q) for (i, j, q) in order))
        self._stop_at_misfit = stop_at_misfit
        tau = config.tau
        self._tau_int = int(tau) if float(tau).is_integer() else None
        self._tau = tau
        self._L = config.L
        self._B = config.B
        self._c_hold = config.c_hold
        self._c_over = config.c_over
        # deterministic all-ones fast path for uniform arrivals
        self._ones = (1,) * self._cells if isinstance(arrivals, UniformArrivals) else None
        self._counts = [0] * self._cells
        self._pool = 0

    def reset(self) -> tuple:
        self._counts = [0] * self._cells
        self._pool = 0
        return tuple(self._counts)

    def current_key(self) -> tuple:
        return tuple(self._counts)

    @property
    def state(self) -> MempoolState:
        n = self._n
        rows = tuple(
            tuple(self._counts[r * n : (r + 1) * n]) for r in range(self._m)
        )
        return MempoolState(rows, self._L)

    def _draw(self):
        if self._ones is not None:
            return self._ones
        mat = sample_arrivals(self.arrival_model, self._rng)
        return tuple(c for row in mat for c in row)

    def step(self, action: int) -> StepResult:
        counts = self._counts
        key = tuple(counts)
        sizes = self._sizes_flat
        used = 0
        taken = [0] * self._cells
        tau_int, tau = self._tau_int, self._tau
        L = self._L
        # phase 1 (only possible if some entry exceeds L, which clamping
        # normally prevents; kept for protocol fidelity)
        if max(counts) > L:
            n = self._n
            for idx in range(self._cells):
                if idx % n + 1 >= action:
                    over = counts[idx] - L
                    if over > 0:
                        q = sizes[idx]
                        fit = (tau_int - used) // q if tau_int is not None else int(
                            (tau - used) / q + 1e-12
                        )
                        take = over if over < fit else fit
                        if take > 0:
                            taken[idx] = take
                            used += take * q
        for idx, q in self._orders[action - 1]:
            avail = counts[idx] - taken[idx]
            if avail > 0:
                if tau_int is not None:
                    fit = (tau_int - used) // q
                else:
                    fit = int((tau - used) / q + 1e-12)
                take = avail if avail < fit else fit
                if take > 0:
                    taken[idx] += take
                    used += take * q
                elif self._stop_at_misfit:
                    break
        q_pool = self._pool
        over = used - self._B
        r = -self._c_hold * q_pool - (self._c_over * over if over > 0 else 0.0)
        arr = self._draw()
        dropped = 0
        pool = 0
        for idx in range(self._cells):
            c = counts[idx] + arr[idx] - taken[idx]
            if c > L:
                dropped += c - L
                c = L
            counts[idx] = c
            pool += c * sizes[idx]
        self._pool = pool
        return StepResult(
            state_key=key,
            action=action,
            reward=r,
            q_pool=q_pool,
            q_sched=used,
            dropped=dropped,
        )

    def run_episode(self, policy_action: Callable, horizon: int) -> list:
        """Roll out `horizon` steps from a fresh pool; returns StepResults."""
        self.reset()
        out = []
        for _ in range(horizon):
            a = policy_action(tuple(self._counts))
            out.append(self.step(a))
        return out


def write_episode_csv(results: Sequence[StepResult], out: Union[str, IO]) -> None:
    def _write(fh):
        w = csv.writer(fh)
        w.writerow(["t", "action", "q_pool", "q_sched", "reward", "dropped"])
        for t, res in enumerate(results, start=1):
            w.writerow([t, res.action, res.q_pool, res.q_sched, repr(res.reward), res.dropped])

    if isinstance(out, str):
        with open(out, "w", newline="") as fh:
            _write(fh)
    else:
        _write(out)


# --- enumerable-kernel utilities ---------------------------------------------


def transition_kernel(
    state: MempoolState,
    action: int,
    arrival_support: Iterable,
    grid: TxClassGrid,
    config: SimConfig,
) -> list:
    """Successor distribution [(state', prob)] under a finite arrival law.

    `arrival_support` is a list of (matrix, prob) summing to one; the
    deterministic schedule makes each successor a clamped shift of S.
    """
    support = list(arrival_support)
    total = sum(p for _, p in support)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"arrival probabilities sum to {total}, expected 1")
    outcome = schedule(state, action, grid, config.tau)
    agg: dict = {}
    for mat, prob in support:
        nxt, _ = apply_dynamics(state, mat, outcome.scheduled)
        agg[nxt] = agg.get(nxt, 0.0) + prob
    return sorted(agg.items(), key=lambda kv: kv[0].counts)


@dataclass(frozen=True)
class OccupancyMeasure:
    """Empirical state-action frequencies over a trajectory."""

    weights: dict  # (counts tuple, action) -> float

    @property
    def total(self) -> float:
        return sum(self.weights.values())

    def states(self) -> set:
        return {s for (s, _) in self.weights}

    def state_mass(self, counts: tuple) -> float:
        return sum(w for (s, _), w in self.weights.items() if s == counts)


def estimate_occupancy(pairs: Sequence) -> OccupancyMeasure:
    """Average visitation measure of (state, action) pairs.

    Accepts MempoolState or raw count tuples; weights sum to one.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty trajectory")
    w = 1.0 / len(pairs)
    agg: dict = {}
    for s, a in pairs:
        counts = s.counts if isinstance(s, MempoolState) else tuple(map(tuple, s))
        agg[(counts, a)] = agg.get((counts, a), 0.0) + w
    return OccupancyMeasure(weights=agg)


@dataclass(frozen=True)
class DeltaMembershipReport:
    ok: bool
    norm_residual: float
    flow_residual: float
    worst_state: Optional[tuple]


def check_delta_membership(
    rho: OccupancyMeasure,
    kernel: Callable,
    tol: float = 1e-9,
) -> DeltaMembershipReport:
    """Check rho against the stationarity polytope Delta.

    `kernel(counts, action)` must return [(counts', prob)].  Conditions:
    weights sum to one, and for every state S in the support the outflow
    sum_a rho(S, a) equals the inflow sum_{S', a'} P(S|S', a') rho(S', a').
    """
    norm_res = abs(rho.total - 1.0)
    inflow: dict = {}
    for (s, a), w in rho.weights.items():
        for s2, p in kernel(s, a):
            key = s2.counts if isinstance(s2, MempoolState) else tuple(map(tuple, s2))
            inflow[key] = inflow.get(key, 0.0) + w * p
    worst, worst_state = 0.0, None
    for s in rho.states():
        out = rho.state_mass(s)
        res = abs(out - inflow.get(s, 0.0))
        if res > worst:
            worst, worst_state = res, s
    ok = norm_res <= tol and worst <= tol
    return DeltaMembershipReport(
        ok=ok, norm_residual=norm_res, flow_residual=worst, worst_state=worst_state
    )
