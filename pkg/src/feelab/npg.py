"""Episodic natural policy gradient with softmax parametrization.

Per state the policy is pi(a|S) proportional to exp(theta[S, a]); the NPG
step with learning rate eta multiplies each probability by

    exp(eta * A_hat(S, a) / (1 - gamma))

and renormalizes — equivalently, theta[S, a] += eta * A_hat / (1 - gamma).
Convergence to an eps-optimal policy within 2 / ((1 - gamma)^2 * eps)
iterations requires eta >= (1 - gamma)^2 * log |A|.

Advantages are estimated from a single on-policy episode by every-visit
Monte Carlo with the per-state mean return as baseline; an exact route via
linear-solve policy evaluation is provided for enumerable MDPs so the two
can be cross-checked.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import IO, Callable, Optional, Sequence, Union

import numpy as np

from .core import SimConfig, make_rng
from .mdp import MempoolEnv, StepResult


def min_learning_rate(gamma: float, n_actions: int) -> float:
    """Smallest eta with the convergence guarantee: (1-gamma)^2 ln |A|.

    gamma = 0 is allowed (the undiscounted bandit edge of the formula);
    gamma = 1 is not, since the guarantee degenerates there.
    """
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    if n_actions < 2:
        raise ValueError("need at least two actions")
    return (1 - gamma) ** 2 * math.log(n_actions)


class SoftmaxPolicy:
    """Tabular softmax policy over hashable state keys.

    States without a logit row act as all-zero logits, i.e. uniform —
    fresh states need no initialization step.
    """

    def __init__(self, n_actions: int, logits: Optional[dict] = None):
        if n_actions < 1:
            raise ValueError("need at least one action")
        self.n_actions = n_actions
        self.logits = {} if logits is None else {k: list(v) for k, v in logits.items()}

    def probs(self, state) -> list:
        row = self.logits.get(state)
        if row is None:
            return [1.0 / self.n_actions] * self.n_actions
        mx = max(row)
        es = [math.exp(v - mx) for v in row]
        z = sum(es)
        return [e / z for e in es]

    def sample(self, state, rng) -> int:
        """Draw an action (1-based)."""
        p = self.probs(state)
        u = rng.random()
        acc = 0.0
        for a, pa in enumerate(p):
            acc += pa
            if u < acc:
                return a + 1
        return self.n_actions

    def entropy(self, state) -> float:
        return -sum(p * math.log(p) for p in self.probs(state) if p > 0)

    def greedy(self, state) -> int:
        p = self.probs(state)
        return max(range(len(p)), key=lambda a: p[a]) + 1

    def copy(self) -> "SoftmaxPolicy":
        return SoftmaxPolicy(self.n_actions, self.logits)

    def update_(self, advantages: "AdvantageTable", eta: float, gamma: float) -> None:
        """In-place NPG step: theta += eta * A_hat / (1 - gamma)."""
        scale = eta / (1.0 - gamma)
        zero = [0.0] * self.n_actions
        for (s, a), adv in advantages.values.items():
            row = self.logits.get(s)
            if row is None:
                row = self.logits[s] = list(zero)
            row[a - 1] += scale * adv

    def to_json(self, key_to_str=None) -> dict:
        ks = key_to_str or (lambda k: k if isinstance(k, str) else ",".join(map(str, k)))
        return {
            "n_actions": self.n_actions,
            "probs": {ks(k): self.probs(k) for k in sorted(self.logits)},
        }


def policy_probs(policy: SoftmaxPolicy, state) -> list:
    return policy.probs(state)


@dataclass(frozen=True)
class AdvantageTable:
    """A_hat(S, a) estimates plus visit counts."""

    values: dict  # (state, action) -> float
    counts: dict  # (state, action) -> int
    baselines: dict  # state -> mean return

    def get(self, state, action: int) -> float:
        return self.values.get((state, action), 0.0)


def estimate_advantage(
    episode: Sequence, gamma: float, first_visit: bool = False
) -> AdvantageTable:
    """Every-visit Monte-Carlo advantages from one episode.

    `episode` holds (state, action, reward) triples or StepResults in time
    order.  Returns-to-go are computed backward; the baseline per state is
    the mean return across its visits, so the visit-weighted mean
    advantage per state is exactly zero.
    """
    n = len(episode)
    if n == 0:
        raise ValueError("empty episode")
    sar = [
        (e.state_key, e.action, e.reward) if isinstance(e, StepResult) else e
        for e in episode
    ]
    returns = [0.0] * n
    g = 0.0
    for t in range(n - 1, -1, -1):
        g = sar[t][2] + gamma * g
        returns[t] = g
    q_sum: dict = {}
    q_cnt: dict = {}
    v_sum: dict = {}
    v_cnt: dict = {}
    seen = set()
    for t, (s, a, _) in enumerate(sar):
        if first_visit:
            if (s, a) in seen:
                continue
            seen.add((s, a))
        key = (s, a)
        q_sum[key] = q_sum.get(key, 0.0) + returns[t]
        q_cnt[key] = q_cnt.get(key, 0) + 1
        v_sum[s] = v_sum.get(s, 0.0) + returns[t]
        v_cnt[s] = v_cnt.get(s, 0) + 1
    baselines = {s: v_sum[s] / v_cnt[s] for s in v_sum}
    values = {key: q_sum[key] / q_cnt[key] - baselines[key[0]] for key in q_sum}
    return AdvantageTable(values=values, counts=q_cnt, baselines=baselines)


def npg_update(
    policy: SoftmaxPolicy, advantages: AdvantageTable, eta: float, gamma: float
) -> SoftmaxPolicy:
    """Pure NPG step returning a new policy; see SoftmaxPolicy.update_."""
    if eta <= 0:
        raise ValueError("learning rate must be positive")
    out = policy.copy()
    out.update_(advantages, eta, gamma)
    return out


def static_reduction_update(
    policy: SoftmaxPolicy,
    q_sched: Sequence[float],
    eta: float,
    gamma: float,
    c_over: float,
    B: float,
    state=None,
) -> list:
    """Frozen-state update: pi'(a) ~ pi(a) * exp(-eta c_over (Q_a - B)^+ / (1-gamma)).

    With holding costs off, the reward at a frozen state is the pure
    overshoot penalty, so this closed form must agree with the generic
    NPG update fed the frozen-state advantage r(a) - E_pi r; the agreement
    is asserted here to 1e-9 on every call.
    """
    if len(q_sched) != policy.n_actions:
        raise ValueError("need one scheduled volume per action")
    p = policy.probs(state)
    scale = eta / (1.0 - gamma)
    weights = [
        pa * math.exp(-scale * c_over * max(0.0, q - B)) for pa, q in zip(p, q_sched)
    ]
    z = sum(weights)
    direct = [w / z for w in weights]

    rewards = [-c_over * max(0.0, q - B) for q in q_sched]
    rbar = sum(pa * ra for pa, ra in zip(p, rewards))
    adv = AdvantageTable(
        values={(state, a + 1): rewards[a] - rbar for a in range(policy.n_actions)},
        counts={},
        baselines={state: rbar},
    )
    via_npg = npg_update(policy, adv, eta, gamma).probs(state)
    worst = max(abs(d - v) for d, v in zip(direct, via_npg))
    if worst > 1e-9:
        raise AssertionError(
            f"static reduction disagrees with the NPG route by {worst:.3e}"
        )
    return direct


# --- episodic training ---------------------------------------------------------


@dataclass(frozen=True)
class IterationMetrics:
    iteration: int
    mean_reward: float
    mean_q_sched: float
    mean_q_pool: float
    dropped: int
    entropy: float


@dataclass
class TrainingResult:
    policy: SoftmaxPolicy
    metrics: list  # IterationMetrics per iteration

    def tail_mean(self, attr: str, frac: float = 0.1) -> float:
        k = max(1, int(len(self.metrics) * frac))
        tail = self.metrics[-k:]
        return sum(getattr(m, attr) for m in tail) / len(tail)

    def run_mean(self, attr: str) -> float:
        """Mean of a per-iteration metric over the whole training run —
        the online view of the run's performance."""
        return sum(getattr(m, attr) for m in self.metrics) / len(self.metrics)


def run_episodic_npg(
    config: SimConfig,
    env: MempoolEnv,
    eta: Optional[float] = None,
    policy: Optional[SoftmaxPolicy] = None,
    first_visit: bool = False,
) -> TrainingResult:
    """Algorithm: sample one on-policy episode per iteration, estimate
    advantages, take one NPG step.  Deterministic given config.seed.
    """
    enforce_floor = eta is None
    eta = config.eta if eta is None else eta
    floor = min_learning_rate(config.gamma, env.n_actions)
    if enforce_floor and eta < floor:
        raise ValueError(f"eta={eta} below the guarantee floor {floor:.6g}")
    pol = policy if policy is not None else SoftmaxPolicy(env.n_actions)
    act_rng = make_rng(config.seed, 1)
    H = config.H
    gamma = config.gamma
    metrics = []
    for k in range(config.iterations):
        state = env.reset()
        episode = []
        ent_sum = 0.0
        r_sum = qs_sum = qp_sum = 0.0
        drop_sum = 0
        probs = pol.probs
        sample_u = act_rng.random
        for _ in range(H):
            p = probs(state)
            u = sample_u()
            acc = 0.0
            a = len(p)
            for i, pa in enumerate(p):
                acc += pa
                if u < acc:
                    a = i + 1
                    break
            ent_sum -= sum(pi * math.log(pi) for pi in p if pi > 0)
            res = env.step(a)
            episode.append((state, a, res.reward))
            r_sum += res.reward
            qs_sum += res.q_sched
            qp_sum += res.q_pool
            drop_sum += res.dropped
            state = env.current_key()
        adv = estimate_advantage(episode, gamma, first_visit)
        pol.update_(adv, eta, gamma)
        metrics.append(
            IterationMetrics(
                iteration=k,
                mean_reward=r_sum / H,
                mean_q_sched=qs_sum / H,
                mean_q_pool=qp_sum / H,
                dropped=drop_sum,
                entropy=ent_sum / H,
            )
        )
    return TrainingResult(policy=pol, metrics=metrics)


def write_metrics_csv(metrics: Sequence[IterationMetrics], out: Union[str, IO]) -> None:
    def _write(fh):
        w = csv.writer(fh)
        w.writerow(["iteration", "mean_reward", "mean_q_sched", "mean_q_pool", "dropped", "entropy"])
        for m in metrics:
            w.writerow(
                [m.iteration, repr(m.mean_reward), repr(m.mean_q_sched),
                 repr(m.mean_q_pool), m.dropped, repr(m.entropy)]
            )

    if isinstance(out, str):
        with open(out, "w", newline="") as fh:
            _write(fh)
    else:
        _write(out)


def write_policy_json(policy: SoftmaxPolicy, shape: tuple, out: Union[str, IO]) -> None:
    """States keyed by their row-major count string (rows ';', entries ',')."""
    m, n = shape

    def key_to_str(k):
        return ";".join(",".join(str(c) for c in k[r * n : (r + 1) * n]) for r in range(m))

    doc = policy.to_json(key_to_str)
    if isinstance(out, str):
        with open(out, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        json.dump(doc, out, indent=2, sort_keys=True)


# --- exact route for enumerable MDPs -------------------------------------------


class TabularMDP:
    """Dense finite MDP for exact policy evaluation and value iteration."""

    def __init__(self, P, r, gamma: float):
        self.P = np.asarray(P, dtype=float)  # (S, A, S)
        self.r = np.asarray(r, dtype=float)  # (S, A)
        if self.P.ndim != 3 or self.P.shape[0] != self.P.shape[2]:
            raise ValueError("P must have shape (S, A, S)")
        if self.r.shape != self.P.shape[:2]:
            raise ValueError("r must have shape (S, A)")
        rowsums = self.P.sum(axis=2)
        if not np.allclose(rowsums, 1.0, atol=1e-12):
            raise ValueError("transition rows must sum to one")
        if not 0 < gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        self.gamma = gamma
        self.n_states, self.n_actions = self.r.shape

    def policy_matrix(self, policy: SoftmaxPolicy) -> np.ndarray:
        return np.array([policy.probs(s) for s in range(self.n_states)])

    def evaluate(self, pi: np.ndarray) -> np.ndarray:
        """V^pi by solving (I - gamma P_pi) V = r_pi (exact to solver eps)."""
        P_pi = np.einsum("sa,sat->st", pi, self.P)
        r_pi = (pi * self.r).sum(axis=1)
        return np.linalg.solve(np.eye(self.n_states) - self.gamma * P_pi, r_pi)

    def q_values(self, V: np.ndarray) -> np.ndarray:
        return self.r + self.gamma * self.P @ V

    def advantages(self, policy: SoftmaxPolicy) -> AdvantageTable:
        pi = self.policy_matrix(policy)
        V = self.evaluate(pi)
        Q = self.q_values(V)
        A = Q - V[:, None]
        values = {
            (s, a + 1): float(A[s, a])
            for s in range(self.n_states)
            for a in range(self.n_actions)
        }
        return AdvantageTable(values=values, counts={}, baselines={s: float(V[s]) for s in range(self.n_states)})

    def optimal_value(self, tol: float = 1e-12) -> np.ndarray:
        V = np.zeros(self.n_states)
        while True:
            Vn = self.q_values(V).max(axis=1)
            if np.max(np.abs(Vn - V)) < tol:
                return Vn
            V = Vn


def run_npg_exact(
    mdp: TabularMDP,
    eta: float,
    iterations: int,
    rho: Optional[np.ndarray] = None,
) -> tuple:
    """NPG with exact advantages; returns (policy, [V_rho per iterate])."""
    policy = SoftmaxPolicy(mdp.n_actions)
    rho = np.full(mdp.n_states, 1.0 / mdp.n_states) if rho is None else np.asarray(rho)
    values = []
    for _ in range(iterations):
        adv = mdp.advantages(policy)
        values.append(float(rho @ mdp.evaluate(mdp.policy_matrix(policy))))
        policy.update_(adv, eta, mdp.gamma)
    values.append(float(rho @ mdp.evaluate(mdp.policy_matrix(policy))))
    return policy, values
