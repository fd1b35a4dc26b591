"""Core value types for the fee-mechanism lab.

A market is described by a grid of transaction classes: m sizes times
n values, so class (i, j) holds transactions of size q_i and per-unit
value v_j.  A mempool state counts pending transactions per class.
Arrival models produce per-step count matrices on the same grid.

All types validate on construction and are immutable afterwards; the
random stream for stochastic arrivals is owned by the caller and passed
in explicitly (numpy Generator, PCG64).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence, Union

import numpy as np


class ArrivalStreamEnd(Exception):
    """Raised when an explicit arrival sequence is exhausted."""


def _check_grid_axis(name: str, xs: Sequence[float]) -> tuple:
    out = tuple(xs)
    if any(x <= 0 for x in out):
        raise ValueError(f"{name} must be positive, got {out}")
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ValueError(f"{name} must be strictly increasing, got {out}")
    return out


@dataclass(frozen=True)
class TxClassGrid:
    """Transaction classes: sizes q_1 < ... < q_m, values v_1 < ... < v_n."""

    sizes: tuple
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "sizes", _check_grid_axis("sizes", self.sizes))
        object.__setattr__(self, "values", _check_grid_axis("values", self.values))
        if len(self.sizes) < 1:
            raise ValueError("need at least one size class")
        if len(self.values) < 2:
            raise ValueError("need at least two value classes")

    @property
    def m(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def total_size(self) -> int:
        """Sum of the size axis (the Q of the uniform arrival pattern)."""
        return sum(self.sizes)

    def class_weight(self, i: int, j: int) -> float:
        """Welfare q_i * v_j of one transaction of class (i, j)."""
        return self.sizes[i] * self.values[j]


@dataclass(frozen=True)
class MempoolState:
    """Counts of pending transactions per class, each capped at `cap`."""

    counts: tuple  # m rows (one per size), n columns (one per value)
    cap: int

    def __post_init__(self):
        rows = tuple(tuple(int(c) for c in row) for row in self.counts)
        object.__setattr__(self, "counts", rows)
        if self.cap < 0:
            raise ValueError("cap must be non-negative")
        if not rows:
            raise ValueError("state needs at least one row")
        n = len(rows[0])
        for row in rows:
            if len(row) != n:
                raise ValueError("ragged count matrix")
            for c in row:
                if c < 0 or c > self.cap:
                    raise ValueError(f"count {c} outside [0, {self.cap}]")

    @property
    def m(self) -> int:
        return len(self.counts)

    @property
    def n(self) -> int:
        return len(self.counts[0])

    @staticmethod
    def zeros(m: int, n: int, cap: int) -> "MempoolState":
        return MempoolState(tuple((0,) * n for _ in range(m)), cap)

    def flat(self) -> tuple:
        return tuple(c for row in self.counts for c in row)

    def key(self) -> str:
        """Row-major string form, rows joined by ';', used in JSON exports."""
        return ";".join(",".join(str(c) for c in row) for row in self.counts)

    @staticmethod
    def from_key(key: str, cap: int) -> "MempoolState":
        rows = tuple(tuple(int(c) for c in row.split(",")) for row in key.split(";"))
        return MempoolState(rows, cap)


def pool_size(state: MempoolState, grid: TxClassGrid) -> int:
    """Total pending size: sum_i q_i * sum_j counts[i][j]."""
    if state.m != grid.m or state.n != grid.n:
        raise ValueError("state shape does not match grid")
    return sum(q * sum(row) for q, row in zip(grid.sizes, state.counts))


# --- arrival models --------------------------------------------------------


@dataclass(frozen=True)
class UniformArrivals:
    """One transaction of every class per step (deterministic)."""

    grid: TxClassGrid

    def sample(self, rng) -> tuple:
        return tuple((1,) * self.grid.n for _ in range(self.grid.m))

    def support(self):
        """Finite distribution [(matrix, prob)] — a single point here."""
        return [(tuple((1,) * self.grid.n for _ in range(self.grid.m)), 1.0)]

    def mean_total_size(self) -> float:
        return self.grid.n * self.grid.total_size


@dataclass(frozen=True)
class PoissonArrivals:
    """Independent Poisson counts with mean mu_i = 2*B*lam / (m*n*q_i).

    The means are chosen so the expected total arriving size per step is
    2*B*lam; lam in (0.5, 1) keeps the market loaded but not trivially
    saturated (smaller rates are allowed, e.g. to probe limits).
    """

    grid: TxClassGrid
    lam: float
    B: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("rate must be non-negative")
        if self.B <= 0:
            raise ValueError("target capacity must be positive")

    def means(self) -> tuple:
        m, n = self.grid.m, self.grid.n
        return tuple(2.0 * self.B * self.lam / (m * n * q) for q in self.grid.sizes)

    def mean_total_size(self) -> float:
        return 2.0 * self.B * self.lam

    def sample(self, rng) -> tuple:
        mus = self.means()
        draws = rng.poisson(lam=np.repeat(mus, self.grid.n))
        n = self.grid.n
        it = iter(int(d) for d in draws)
        return tuple(tuple(next(it) for _ in range(n)) for _ in range(self.grid.m))


class ExplicitArrivals:
    """A fixed sequence of arrival matrices, consumed one per step."""

    def __init__(self, matrices: Sequence):
        self._matrices = tuple(
            tuple(tuple(int(c) for c in row) for row in mat) for mat in matrices
        )
        for mat in self._matrices:
            for row in mat:
                if any(c < 0 for c in row):
                    raise ValueError("arrival counts must be non-negative")
        self._next = 0

    @property
    def matrices(self) -> tuple:
        return self._matrices

    def sample(self, rng) -> tuple:
        if self._next >= len(self._matrices):
            raise ArrivalStreamEnd(
                f"arrival sequence exhausted after {len(self._matrices)} steps"
            )
        mat = self._matrices[self._next]
        self._next += 1
        return mat

    def restarted(self) -> "ExplicitArrivals":
        return ExplicitArrivals(self._matrices)


ArrivalModel = Union[UniformArrivals, PoissonArrivals, ExplicitArrivals]


def sample_arrivals(model: ArrivalModel, rng) -> tuple:
    """Draw one arrival count matrix from the model."""
    return model.sample(rng)


def truncated_poisson_support(model: PoissonArrivals, kmax: int):
    """Finite support [(matrix, prob)] for Poisson counts truncated to
    {0..kmax} per entry and renormalized entrywise.  Only sensible for
    tiny grids: the support has (kmax+1)**(m*n) points."""
    m, n = model.grid.m, model.grid.n
    cells = m * n
    if (kmax + 1) ** cells > 100_000:
        raise ValueError("truncated support too large; shrink the grid or kmax")
    mus = np.repeat(model.means(), n)
    pmfs = []
    for mu in mus:
        p = np.array([math.exp(-mu) * mu**k / math.factorial(k) for k in range(kmax + 1)])
        pmfs.append(p / p.sum())
    support = []

    def rec(idx, counts, prob):
        if idx == cells:
            mat = tuple(tuple(counts[r * n : (r + 1) * n]) for r in range(m))
            support.append((mat, prob))
            return
        for k in range(kmax + 1):
            rec(idx + 1, counts + [k], prob * pmfs[idx][k])

    rec(0, [], 1.0)
    return support


# --- simulation configuration ----------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """Shared knobs for market simulations and training runs.

    hard_cap defaults to 2*B (the protocol's block limit) and tau — the
    scheduler's per-block budget — defaults to hard_cap.
    """

    B: float
    c_hold: float = 1.0
    c_over: float = 0.0
    gamma: float = 0.95
    eta: float = 0.01
    p_min: float = 0.01
    H: int = 200
    iterations: int = 2000
    seed: int = 0
    L: int = 20
    hard_cap: Optional[float] = None
    tau: Optional[float] = None

    def __post_init__(self):
        if self.B <= 0:
            raise ValueError("B must be positive")
        if self.hard_cap is None:
            object.__setattr__(self, "hard_cap", 2 * self.B)
        if self.hard_cap < self.B:
            raise ValueError("hard_cap must be at least B")
        if self.tau is None:
            object.__setattr__(self, "tau", self.hard_cap)
        if not 0 < self.tau <= self.hard_cap:
            raise ValueError("tau must lie in (0, hard_cap]")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        for name in ("c_hold", "c_over", "p_min"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.H < 1 or self.iterations < 1:
            raise ValueError("H and iterations must be at least 1")
        if self.L < 1:
            raise ValueError("L must be at least 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must fit in 64 bits")


def make_rng(seed: int, stream: int = 0):
    """Named project RNG: numpy PCG64 behind default_rng, derived
    deterministically from (seed, stream) via SeedSequence spawn keys."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


# --- dynamics ---------------------------------------------------------------


def apply_dynamics(state: MempoolState, arrivals, scheduled) -> tuple:
    """S' = clamp(S + A - F, [0, cap]); returns (S', dropped count).

    F must be entrywise within [0, S]: the scheduler cannot remove what
    is not pending.  Arrivals that would push an entry above the cap are
    dropped and counted.
    """
    m, n, cap = state.m, state.n, state.cap
    arr = tuple(tuple(int(c) for c in row) for row in arrivals)
    sch = tuple(tuple(int(c) for c in row) for row in scheduled)
    if len(arr) != m or any(len(r) != n for r in arr):
        raise ValueError("arrival shape does not match state")
    if len(sch) != m or any(len(r) != n for r in sch):
        raise ValueError("schedule shape does not match state")
    dropped = 0
    rows = []
    for i in range(m):
        row = []
        for j in range(n):
            if not 0 <= sch[i][j] <= state.counts[i][j]:
                raise ValueError(
                    f"schedule entry ({i},{j})={sch[i][j]} outside [0, {state.counts[i][j]}]"
                )
            if arr[i][j] < 0:
                raise ValueError("arrivals must be non-negative")
            c = state.counts[i][j] + arr[i][j] - sch[i][j]
            if c > cap:
                dropped += c - cap
                c = cap
            row.append(c)
        rows.append(tuple(row))
    return MempoolState(tuple(rows), cap), dropped
