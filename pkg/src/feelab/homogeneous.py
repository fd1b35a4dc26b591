"""Homogeneous (single-class) backlog control by value iteration.

State s >= 0 is the pending size.  Choosing the amount f in
[-B, min(s, 2B) - B] scheduled beyond the target B (so the block size is
f + B) costs overshoot c_over * f^+ now and holding c_hold * s; the next
backlog is s + A - f - B for a random arrival size A in [0, 2B]:

    J_{k+1}(s) = c_hold * s + min_f { c_over * f^+ + gamma * E[J_k(s + A - f - B)] }

with J_0(s) = c_term * s.  Values live on the grid {0, delta, ..., L};
off-grid successors are linearly interpolated, and above L the value is
extended linearly with slope c_hold / (1 - gamma) (the cost of holding a
marginal unit forever).

The optimal committed schedule has a threshold form: for some s* >= B,

    f*(s) = min(s, B) - B          for s <= s*     (fill up to the target)
    f*(s) = min(s - s*, B)         for s >  s*     (overshoot the excess)

and when overshooting is no dearer than holding (c_over <= c_hold) the
threshold collapses to scheduling flat out: f*(s) = min(s - B, B).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Optional, Sequence, Union

import numpy as np


class ConvergenceError(RuntimeError):
    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"value iteration still at residual {residual:.3e} after {iterations} sweeps"
        )


@dataclass(frozen=True)
class HomogeneousConfig:
    B: float
    c_hold: float
    c_over: float
    gamma: float
    arrivals: tuple  # ((size, prob), ...), sizes in [0, 2B]
    L: float
    delta: Optional[float] = None
    c_term: Optional[float] = None
    tol: float = 1e-9
    max_iter: int = 200_000

    def __post_init__(self):
        if self.B <= 0:
            raise ValueError("B must be positive")
        if self.delta is None:
            object.__setattr__(self, "delta", self.B / 100)
        if self.c_term is None:
            object.__setattr__(self, "c_term", self.c_hold)
        if self.delta <= 0:
            raise ValueError("grid step must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.c_hold < 0 or self.c_over < 0 or self.c_term < 0:
            raise ValueError("costs must be non-negative")
        if self.L < 2 * self.B:
            raise ValueError("grid must reach at least 2B")
        arr = tuple((float(a), float(p)) for a, p in self.arrivals)
        object.__setattr__(self, "arrivals", arr)
        if not arr:
            raise ValueError("need at least one arrival atom")
        if abs(sum(p for _, p in arr) - 1.0) > 1e-9:
            raise ValueError("arrival probabilities must sum to one")
        if any(p < 0 for _, p in arr):
            raise ValueError("arrival probabilities must be non-negative")
        if any(a < 0 or a > 2 * self.B + 1e-12 for a, _ in arr):
            raise ValueError("arrival sizes must lie in [0, 2B]")
        for name, mult in (("L", self.L), ("B", self.B)):
            k = mult / self.delta
            if abs(k - round(k)) > 1e-9:
                raise ValueError(f"{name} must be an integral multiple of delta")


@dataclass
class ValueTable:
    config: HomogeneousConfig
    s: np.ndarray
    J: np.ndarray
    f_star: np.ndarray
    residuals: list

    @property
    def y_star(self) -> np.ndarray:
        """Post-schedule backlog s - f* - B (what carries to the next step)."""
        return self.s - self.f_star - self.config.B

    def write_csv(self, out: Union[str, IO]) -> None:
        def _write(fh):
            w = csv.writer(fh)
            w.writerow(["s", "J", "f_star", "y_star"])
            y = self.y_star
            for i in range(len(self.s)):
                w.writerow(
                    [repr(float(self.s[i])), repr(float(self.J[i])),
                     repr(float(self.f_star[i])), repr(float(y[i]))]
                )

        if isinstance(out, str):
            with open(out, "w", newline="") as fh:
                _write(fh)
        else:
            _write(out)


def _interp_indices(x: np.ndarray, K: int, delta: float, slope: float):
    """Split positions into grid interpolation (index, frac) and the linear
    extension above the last grid point (addend on J[K])."""
    x = np.maximum(x, 0.0)
    top = K * delta
    ext = x > top + 1e-12
    xc = np.minimum(x, top)
    pos = xc / delta
    lo = np.minimum(np.floor(pos + 1e-12).astype(int), K - 1)
    frac = pos - lo
    add = np.where(ext, (x - top) * slope, 0.0)
    return lo, frac, ext, add


def value_iteration(config: HomogeneousConfig) -> ValueTable:
    """Iterate the Bellman operator to sup-norm tolerance config.tol."""
    delta = config.delta
    K = int(round(config.L / delta))
    s = np.arange(K + 1) * delta
    nf = int(round(2 * config.B / delta))
    f = -config.B + np.arange(nf + 1) * delta  # candidate overshoots
    slope = config.c_hold / (1.0 - config.gamma)

    # feasibility: f <= min(s, 2B) - B, elementwise over the (s, f) table
    feas = f[None, :] <= np.minimum(s, 2 * config.B)[:, None] - config.B + 1e-12

    atoms = config.arrivals
    lo_list, fr_list, ext_list, add_list, p_list = [], [], [], [], []
    for a, p in atoms:
        x = s[:, None] - f[None, :] - config.B + a  # successor backlog
        lo, frac, ext, add = _interp_indices(x, K, delta, slope)
        lo_list.append(lo)
        fr_list.append(frac)
        ext_list.append(ext)
        add_list.append(add)
        p_list.append(p)

    over_cost = config.c_over * np.maximum(f, 0.0)[None, :]
    hold_cost = config.c_hold * s

    J = config.c_term * s.copy()
    residuals = []
    for it in range(config.max_iter):
        EJ = np.zeros((K + 1, nf + 1))
        for lo, frac, ext, add, p in zip(lo_list, fr_list, ext_list, add_list, p_list):
            vals = (1.0 - frac) * J[lo] + frac * J[lo + 1]
            vals = np.where(ext, J[K] + add, vals)
            EJ += p * vals
        total = over_cost + config.gamma * EJ
        total = np.where(feas, total, np.inf)
        Jn = hold_cost + total.min(axis=1)
        res = float(np.max(np.abs(Jn - J)))
        residuals.append(res)
        J = Jn
        if res < config.tol:
            f_idx = total.argmin(axis=1)  # first (smallest f) minimizer
            return ValueTable(
                config=config, s=s, J=J, f_star=f[f_idx], residuals=residuals
            )
    raise ConvergenceError(residuals[-1], config.max_iter)


def bellman_residual(table: ValueTable) -> float:
    """Sup-norm gap between J and one more Bellman application."""
    cfg = table.config
    tmp = value_iteration_step(table.J, cfg)
    return float(np.max(np.abs(tmp - table.J)))


def value_iteration_step(J: np.ndarray, config: HomogeneousConfig) -> np.ndarray:
    delta = config.delta
    K = len(J) - 1
    s = np.arange(K + 1) * delta
    nf = int(round(2 * config.B / delta))
    f = -config.B + np.arange(nf + 1) * delta
    slope = config.c_hold / (1.0 - config.gamma)
    feas = f[None, :] <= np.minimum(s, 2 * config.B)[:, None] - config.B + 1e-12
    EJ = np.zeros((K + 1, nf + 1))
    for a, p in config.arrivals:
        x = s[:, None] - f[None, :] - config.B + a
        lo, frac, ext, add = _interp_indices(x, K, delta, slope)
        vals = (1.0 - frac) * J[lo] + frac * J[lo + 1]
        vals = np.where(ext, J[K] + add, vals)
        EJ += p * vals
    total = config.c_over * np.maximum(f, 0.0)[None, :] + config.gamma * EJ
    total = np.where(feas, total, np.inf)
    return config.c_hold * s + total.min(axis=1)


# --- policy-shape diagnostics -------------------------------------------------


@dataclass(frozen=True)
class ThresholdReport:
    s_star: Optional[float]
    max_deviation: float
    within_one_step: bool
    kept_points: int


def extract_threshold(table: ValueTable, ignore_top: float = 0.1) -> ThresholdReport:
    """Fit the threshold form to f*, ignoring the top `ignore_top` share of
    the grid (interpolation-boundary artifacts live there).

    The threshold is read off as one grid step below the first s with
    f*(s) > 0; the report carries the worst deviation from the predicted
    shape over the kept points.
    """
    cfg = table.config
    keep = len(table.s) - int(len(table.s) * ignore_top)
    s = table.s[:keep]
    fs = table.f_star[:keep]
    delta = cfg.delta
    pos = np.nonzero(fs > delta / 2)[0]
    s_star = None if len(pos) == 0 else float(s[pos[0]] - delta)
    if s_star is None:
        expected = np.minimum(s, cfg.B) - cfg.B
    else:
        expected = np.where(
            s <= s_star + 1e-12,
            np.minimum(s, cfg.B) - cfg.B,
            np.minimum(s - s_star, cfg.B),
        )
    dev = float(np.max(np.abs(fs - expected))) if keep else 0.0
    return ThresholdReport(
        s_star=s_star,
        max_deviation=dev,
        within_one_step=dev <= delta + 1e-9,
        kept_points=keep,
    )


@dataclass(frozen=True)
class ShapeCheck:
    ok: bool
    worst: float
    at_index: int


def check_convexity(J: Sequence[float], rel_tol: float = 1e-7) -> ShapeCheck:
    """Second differences must be >= -rel_tol * max(1, |J|_inf)."""
    J = np.asarray(J, dtype=float)
    if len(J) < 3:
        return ShapeCheck(ok=True, worst=0.0, at_index=0)
    d2 = J[2:] - 2 * J[1:-1] + J[:-2]
    tol = rel_tol * max(1.0, float(np.max(np.abs(J))))
    i = int(np.argmin(d2))
    return ShapeCheck(ok=bool(d2[i] >= -tol), worst=float(d2[i]), at_index=i + 1)


def check_monotone(J: Sequence[float], rel_tol: float = 1e-7) -> ShapeCheck:
    """First differences must be >= -rel_tol * max(1, |J|_inf)."""
    J = np.asarray(J, dtype=float)
    if len(J) < 2:
        return ShapeCheck(ok=True, worst=0.0, at_index=0)
    d1 = np.diff(J)
    tol = rel_tol * max(1.0, float(np.max(np.abs(J))))
    i = int(np.argmin(d1))
    return ShapeCheck(ok=bool(d1[i] >= -tol), worst=float(d1[i]), at_index=i)
