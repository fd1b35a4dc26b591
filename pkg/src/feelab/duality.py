"""Offline welfare benchmark, dual certificates and competitive bounds.

The offline benchmark is the fractional allocation LP

    max  sum_j q_j v_j x_{jt}
    s.t. sum_{t >= r_j} x_{jt} <= 1          (each tx scheduled once)
         sum_j q_j x_{jt}      <= 2B         (block capacity)
         x >= 0

solved exactly over rationals.  A posted-price trace induces a feasible
dual solution:

    beta_t  = 2B * p_t
    alpha_j = max(0, max_{t >= r_j} q_j (v_j - p_t))

whose objective sum(beta) + sum(alpha) upper-bounds the LP optimum by weak
duality.  The price trajectory's competitive ratio is bounded by

    gamma = max( 4B / (q_min * exp(eta (q_min - B)/B)),
                 2 (v_max - p_min) / v_max )

provided no block in the trace is empty.

A second, LP-free oracle computes the same offline optimum for integral
instances by dynamic programming over suffix capacities; the two routes
must agree bit-for-bit and are kept separate on purpose.

The one-sided relaxation drops the hard cap into a penalty c per unit of
overshoot above B; its dual prices p_t = beta_t/(2B) + gamma_t/B satisfy
0 <= gamma_t <= c*B, and strong duality is checked exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .simplex import LPSolution, solve_lp
from .static_market import BaseFeeTrace, OfflineInstance, Transaction

VARIABLE_LIMIT = 400


class CapacityError(ValueError):
    """Instance exceeds the desk-scale limit of the exact solver."""


class CertificateInfeasible(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(f"dual certificate infeasible at (tx, t) pairs: {self.violations}")


def _lp_variables(instance: OfflineInstance):
    """Variable list [(j, t)] with t >= r_j, plus index lookup."""
    vars_ = [
        (j, t)
        for j, tx in enumerate(instance.transactions)
        for t in range(tx.r, instance.T + 1)
    ]
    index = {jt: k for k, jt in enumerate(vars_)}
    return vars_, index


@dataclass(frozen=True)
class OfflineSolution:
    welfare: Fraction
    x: dict  # (tx_id, t) -> Fraction, nonzero entries only
    alpha: dict  # tx_id -> Fraction (duals of the once constraints)
    beta: tuple  # Fractions, duals of the capacity constraints scaled by 2B


def offline_optimum(instance: OfflineInstance) -> OfflineSolution:
    """Exact LP optimum of the offline allocation problem."""
    vars_, index = _lp_variables(instance)
    if len(vars_) > VARIABLE_LIMIT:
        raise CapacityError(
            f"instance needs {len(vars_)} variables; exact solver is limited to {VARIABLE_LIMIT}"
        )
    txs = instance.transactions
    cap = Fraction(instance.hard_cap)
    n = len(vars_)
    c = [Fraction(txs[j].q) * Fraction(txs[j].v) for (j, _) in vars_]
    A, b = [], []
    for j, tx in enumerate(txs):  # scheduled at most once
        row = [Fraction(0)] * n
        for t in range(tx.r, instance.T + 1):
            row[index[(j, t)]] = Fraction(1)
        A.append(row)
        b.append(Fraction(1))
    for t in range(1, instance.T + 1):  # block capacity
        row = [Fraction(0)] * n
        for j, tx in enumerate(txs):
            if t >= tx.r:
                row[index[(j, t)]] = Fraction(tx.q)
        A.append(row)
        b.append(cap)
    sol = solve_lp(c, A, b)
    x = {
        (txs[j].id, t): sol.x[k]
        for k, (j, t) in enumerate(vars_)
        if sol.x[k] != 0
    }
    alpha = {txs[j].id: sol.duals[j] for j in range(len(txs))}
    beta = tuple(sol.duals[len(txs) + t] * cap for t in range(instance.T))
    return OfflineSolution(welfare=sol.value, x=x, alpha=alpha, beta=beta)


def enumerate_offline_optimum(instance: OfflineInstance) -> Fraction:
    """Offline optimum of an integral instance without the LP.

    For integer sizes and an integer hard cap the LP has an integral
    optimum (unit-split transactions form a transportation polytope), and
    a profile of per-transaction scheduled sizes z_j is feasible iff every
    release-time suffix fits its aggregate capacity:

        sum_{j: r_j >= r} z_j <= hard_cap * (T - r + 1)   for all r.

    Maximizing sum v_j z_j under these suffix budgets is a small DP over
    r = T..1 with the cumulative scheduled size as state.
    """
    cap = instance.hard_cap
    if cap != int(cap):
        raise ValueError("enumeration oracle needs an integral hard cap")
    cap = int(cap)
    for tx in instance.transactions:
        if tx.q != int(tx.q):
            raise ValueError("enumeration oracle needs integral sizes")
    by_release: dict = {}
    for tx in instance.transactions:
        by_release.setdefault(tx.r, []).append(tx)
    best = {0: Fraction(0)}  # cumulative size used by suffix -> best welfare
    for r in range(instance.T, 0, -1):
        for tx in by_release.get(r, ()):
            nxt: dict = {}
            for used, wel in best.items():
                for z in range(int(tx.q) + 1):
                    u = used + z
                    w = wel + Fraction(tx.v) * z
                    if nxt.get(u, Fraction(-1)) < w:
                        nxt[u] = w
            best = nxt
        budget = cap * (instance.T - r + 1)
        best = {u: w for u, w in best.items() if u <= budget}
    return max(best.values())


# --- dual certificates from price traces -------------------------------------


@dataclass(frozen=True)
class DualCertificate:
    """Trace-induced duals: beta per block, alpha per transaction."""

    alpha: dict  # tx_id -> Fraction
    beta: tuple  # Fraction per block, = 2B * p_t

    @property
    def objective(self) -> Fraction:
        return sum(self.alpha.values(), Fraction(0)) + sum(self.beta, Fraction(0))


def build_certificate(trace: BaseFeeTrace) -> DualCertificate:
    instance = trace.instance
    cap = Fraction(instance.hard_cap)
    prices = [Fraction(p) for p in trace.prices]
    beta = tuple(cap * p for p in prices)
    alpha = {}
    for tx in instance.transactions:
        q, v = Fraction(tx.q), Fraction(tx.v)
        gain = max(q * (v - prices[t - 1]) for t in range(tx.r, instance.T + 1))
        alpha[tx.id] = max(Fraction(0), gain)
    return DualCertificate(alpha=alpha, beta=beta)


def certificate_violations(cert: DualCertificate, instance: OfflineInstance) -> list:
    """Dual constraints q v <= beta_t q / 2B + alpha_j for all j, t >= r_j."""
    cap = Fraction(instance.hard_cap)
    out = []
    for tx in instance.transactions:
        q, v = Fraction(tx.q), Fraction(tx.v)
        a = cert.alpha[tx.id]
        for t in range(tx.r, instance.T + 1):
            if q * v > cert.beta[t - 1] * q / cap + a:
                out.append((tx.id, t))
    return out


@dataclass(frozen=True)
class WeakDualityReport:
    holds: bool
    dual_objective: Fraction
    optimum: Fraction

    @property
    def slack(self) -> Fraction:
        return self.dual_objective - self.optimum


def check_weak_duality(
    cert: DualCertificate, optimum: Fraction, instance: OfflineInstance
) -> WeakDualityReport:
    """Verify feasibility, then OPT <= dual objective — all in rationals."""
    violations = certificate_violations(cert, instance)
    if violations:
        raise CertificateInfeasible(violations)
    dual = cert.objective
    return WeakDualityReport(holds=optimum <= dual, dual_objective=dual, optimum=Fraction(optimum))


def competitive_gamma(B: float, q_min: float, eta: float, v_max: float, p_min: float) -> float:
    """Worst-case ratio bound for the base-fee mechanism (no empty blocks)."""
    if q_min <= 0 or B <= 0:
        raise ValueError("sizes and capacity must be positive")
    if v_max <= 0:
        raise ValueError("maximum value must be positive")
    if p_min < 0 or p_min >= v_max:
        raise ValueError("needs 0 <= p_min < v_max")
    lhs = 4 * B / (q_min * math.exp(eta * (q_min - B) / B))
    rhs = 2 * (v_max - p_min) / v_max
    return max(lhs, rhs)


# --- one-sided penalty relaxation --------------------------------------------


@dataclass(frozen=True)
class OneSidedSolution:
    """Exact primal/dual pair of the penalty LP (overshoot above B costs c)."""

    primal_value: Fraction
    dual_value: Fraction
    x: dict  # (tx_id, t) -> Fraction
    y: tuple  # overshoot per block
    alpha: dict  # tx_id -> Fraction
    beta: tuple  # 2B * (capacity dual)
    gamma: tuple  # B * (overshoot dual), in [0, c*B]

    _B: Fraction = Fraction(1)

    @property
    def effective_prices(self) -> tuple:
        """p_t = beta_t / 2B + gamma_t / B, the dual per-unit price."""
        return tuple(b / (2 * self._B) + g / self._B for b, g in zip(self.beta, self.gamma))


def onesided_optimum(instance: OfflineInstance, c_over_scale=1) -> OneSidedSolution:
    """Solve max sum q v x - c sum y  s.t. once, cap 2B, overshoot linkage.

    The linkage row sum_j q_j x_{jt} - y_t <= B prices overshoot above B;
    its dual g_t is scaled to gamma_t = B * g_t and satisfies
    0 <= gamma_t <= c*B exactly.  Strong duality is exact by construction.
    """
    c_over = Fraction(c_over_scale)
    if c_over <= 0:
        raise ValueError("penalty scale must be positive")
    vars_, index = _lp_variables(instance)
    txs = instance.transactions
    T = instance.T
    if len(vars_) + T > VARIABLE_LIMIT:
        raise CapacityError(
            f"instance needs {len(vars_) + T} variables; limit is {VARIABLE_LIMIT}"
        )
    B = Fraction(instance.B)
    cap = Fraction(instance.hard_cap)
    nx = len(vars_)
    n = nx + T  # x variables then y_1..y_T
    c = [Fraction(txs[j].q) * Fraction(txs[j].v) for (j, _) in vars_]
    c += [-c_over] * T
    A, b = [], []
    for j, tx in enumerate(txs):
        row = [Fraction(0)] * n
        for t in range(tx.r, T + 1):
            row[index[(j, t)]] = Fraction(1)
        A.append(row)
        b.append(Fraction(1))
    for t in range(1, T + 1):
        row = [Fraction(0)] * n
        for j, tx in enumerate(txs):
            if t >= tx.r:
                row[index[(j, t)]] = Fraction(tx.q)
        A.append(row)
        b.append(cap)
    for t in range(1, T + 1):
        row = [Fraction(0)] * n
        for j, tx in enumerate(txs):
            if t >= tx.r:
                row[index[(j, t)]] = Fraction(tx.q)
        row[nx + t - 1] = Fraction(-1)
        A.append(row)
        b.append(B)
    sol = solve_lp(c, A, b)
    J = len(txs)
    x = {(txs[j].id, t): sol.x[index[(j, t)]]
         for (j, t) in vars_ if sol.x[index[(j, t)]] != 0}
    y = tuple(sol.x[nx + t] for t in range(T))
    alpha = {txs[j].id: sol.duals[j] for j in range(J)}
    beta = tuple(sol.duals[J + t] * cap for t in range(T))
    gamma = tuple(sol.duals[J + T + t] * B for t in range(T))
    dual_value = (
        sum(alpha.values(), Fraction(0))
        + sum(sol.duals[J + t] * cap for t in range(T))
        + sum(sol.duals[J + T + t] * B for t in range(T))
    )
    return OneSidedSolution(
        primal_value=sol.value,
        dual_value=dual_value,
        x=x,
        y=y,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        _B=B,
    )


# --- trace-level ratio report -------------------------------------------------


def ratio_report(
    trace: BaseFeeTrace,
    eta: float,
    p_min: float,
    optimum: Optional[Fraction] = None,
) -> dict:
    """Bundle the certificate check and the ratio bound for one trace.

    When `optimum` is omitted the LP is solved here (desk scale only);
    oversize instances report sw_opt = None and skip the ratio checks.
    """
    instance = trace.instance
    cert = build_certificate(trace)
    violations = certificate_violations(cert, instance)
    sw_alg = Fraction(trace.sw_alg)
    trivial = not instance.transactions
    if optimum is None:
        try:
            optimum = offline_optimum(instance).welfare
        except CapacityError:
            optimum = None
    empty = trace.has_empty_block
    gamma_bound = None
    ratio_ok = None
    if instance.transactions:
        q_min = min(tx.q for tx in instance.transactions)
        v_max = max(tx.v for tx in instance.transactions)
        gamma_bound = competitive_gamma(instance.B, q_min, eta, v_max, p_min)
        if optimum is not None:
            ratio_ok = Fraction(gamma_bound) * sw_alg >= optimum if sw_alg else optimum == 0
    return {
        "feasible": not violations,
        "dual_objective": float(cert.objective),
        "sw_opt": None if optimum is None else float(optimum),
        "sw_alg": float(sw_alg),
        "gamma_bound": gamma_bound,
        "ratio_ok": ratio_ok,
        "empty_block_flag": empty,
        "trivial": trivial,
    }


def dump_report(report: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
