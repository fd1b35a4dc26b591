"""Posted-price base-fee market over a finite horizon.

The base fee follows the multiplicative update

    p_{t+1} = max(p_min, p_t * exp(eta * (Q_t - B) / B))

where Q_t is the scheduled size of block t, B the target and eta the
adjustment rate (Ethereum uses 1/8).  Transactions are patient: anything
not included stays pending.  Blocks may include any eligible set (per-unit
value >= current price) of total size at most the hard cap 2B, and must be
maximal — no eligible leftover may still fit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, Optional, Sequence, Union


@dataclass(frozen=True)
class Transaction:
    """One pending transaction: arrives at block r, size q, unit value v."""

    id: str
    r: int
    q: int
    v: float

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"arrival block must be >= 1, got {self.r}")
        if self.q <= 0:
            raise ValueError(f"size must be positive, got {self.q}")
        if self.v <= 0:
            raise ValueError(f"value must be positive, got {self.v}")

    @property
    def welfare(self) -> float:
        return self.q * self.v


@dataclass(frozen=True)
class OfflineInstance:
    """A finite-horizon instance: transactions plus (T, B, hard_cap)."""

    transactions: tuple
    T: int
    B: float
    hard_cap: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "transactions", tuple(self.transactions))
        if self.T < 1:
            raise ValueError("horizon must be at least one block")
        if self.B <= 0:
            raise ValueError("target capacity must be positive")
        if self.hard_cap is None:
            object.__setattr__(self, "hard_cap", 2 * self.B)
        ids = set()
        for tx in self.transactions:
            if tx.r > self.T:
                raise ValueError(f"tx {tx.id} arrives after the horizon")
            if tx.id in ids:
                raise ValueError(f"duplicate transaction id {tx.id}")
            ids.add(tx.id)

    @property
    def total_welfare(self) -> float:
        return sum(tx.welfare for tx in self.transactions)


class SelectionOrder(Enum):
    """How the block builder breaks ties among eligible transactions."""

    VALUE_DESC = "value_desc"
    FIFO = "fifo"
    ADVERSARIAL = "adversarial"


_EXHAUSTIVE_LIMIT = 20


def _greedy_fill(txs: Sequence[Transaction], cap: float) -> list:
    """First-fit over the given order; skipped items never block later ones."""
    taken, used = [], 0
    for tx in txs:
        if used + tx.q <= cap:
            taken.append(tx)
            used += tx.q
    return taken


def _enumerate_min_welfare(txs: Sequence[Transaction], cap: float) -> list:
    """Exhaustive scan of maximal feasible subsets, minimizing welfare.

    Maximality: no excluded transaction fits the residual capacity.  Ties
    are broken by the lexicographically smallest id tuple, so the choice
    is deterministic.
    """
    best = None  # (welfare, ids, subset)
    order = list(txs)

    def rec(idx, taken, used):
        nonlocal best
        if idx == len(order):
            if any(tx not in taken and used + tx.q <= cap for tx in order):
                return
            key = (sum(t.welfare for t in taken), tuple(sorted(t.id for t in taken)))
            if best is None or key < best[0:2]:
                best = (key[0], key[1], list(taken))
            return
        tx = order[idx]
        if used + tx.q <= cap:
            taken.append(tx)
            rec(idx + 1, taken, used + tx.q)
            taken.pop()
        rec(idx + 1, taken, used)

    rec(0, [], 0)
    return best[2] if best else []


def select_block(
    pending: Sequence[Transaction],
    price: float,
    hard_cap: float,
    order: SelectionOrder = SelectionOrder.VALUE_DESC,
) -> list:
    """Pick a maximal block from `pending` (all must be eligible: v >= price).

    VALUE_DESC packs by descending value, FIFO by arrival order, and
    ADVERSARIAL returns the minimum-welfare maximal block (exhaustive for
    up to 20 eligible transactions, greedy ascending-value beyond that).
    """
    for tx in pending:
        if tx.v < price:
            raise ValueError(f"tx {tx.id} is not eligible at price {price}")
    if order is SelectionOrder.VALUE_DESC:
        ranked = sorted(pending, key=lambda tx: (-tx.v, tx.r, tx.id))
        return _greedy_fill(ranked, hard_cap)
    if order is SelectionOrder.FIFO:
        return _greedy_fill(list(pending), hard_cap)
    if order is SelectionOrder.ADVERSARIAL:
        if len(pending) <= _EXHAUSTIVE_LIMIT:
            return _enumerate_min_welfare(pending, hard_cap)
        ranked = sorted(pending, key=lambda tx: (tx.v, tx.r, tx.id))
        return _greedy_fill(ranked, hard_cap)
    raise ValueError(f"unknown selection order {order!r}")


def update_price(price: float, scheduled: float, B: float, eta: float, p_min: float) -> float:
    """One base-fee step; the floor p_min keeps the price positive."""
    if B <= 0:
        raise ValueError("target capacity must be positive")
    if price <= 0:
        raise ValueError("price must be positive")
    return max(p_min, price * math.exp(eta * (scheduled - B) / B))


@dataclass(frozen=True)
class BlockRecord:
    t: int
    price: float
    scheduled_volume: int
    included_ids: tuple
    n_included: int
    cumulative_welfare: float
    dropped: int = 0


@dataclass(frozen=True)
class BaseFeeTrace:
    """Per-block log of one market run."""

    blocks: tuple
    instance: OfflineInstance
    eta: float
    p_min: float

    @property
    def prices(self) -> list:
        return [b.price for b in self.blocks]

    @property
    def volumes(self) -> list:
        return [b.scheduled_volume for b in self.blocks]

    @property
    def sw_alg(self) -> float:
        """Welfare collected by the online mechanism."""
        return self.blocks[-1].cumulative_welfare if self.blocks else 0.0

    @property
    def has_empty_block(self) -> bool:
        return any(b.n_included == 0 for b in self.blocks)

    def write_csv(self, out: Union[str, IO]) -> None:
        def _write(fh):
            w = csv.writer(fh)
            w.writerow(
                ["t", "price", "scheduled_volume", "cumulative_welfare", "n_included", "dropped"]
            )
            for b in self.blocks:
                w.writerow(
                    [b.t, repr(b.price), b.scheduled_volume,
                     repr(float(b.cumulative_welfare)), b.n_included, b.dropped]
                )

        if isinstance(out, str):
            with open(out, "w", newline="") as fh:
                _write(fh)
        else:
            _write(out)


def run_eip1559(
    instance: OfflineInstance,
    p1: float,
    eta: float = 0.125,
    p_min: float = 0.01,
    order: SelectionOrder = SelectionOrder.VALUE_DESC,
) -> BaseFeeTrace:
    """Simulate the base-fee market over the instance horizon.

    Pending transactions persist until included (patient bidders); the
    returned trace carries prices, volumes and cumulative welfare.
    """
    if p1 <= 0:
        raise ValueError("initial price must be positive")
    arrivals_by_block: dict = {}
    for tx in instance.transactions:
        arrivals_by_block.setdefault(tx.r, []).append(tx)
    pending: list = []
    blocks = []
    price = max(p1, p_min)
    welfare = 0.0
    for t in range(1, instance.T + 1):
        pending.extend(arrivals_by_block.get(t, ()))
        eligible = [tx for tx in pending if tx.v >= price]
        included = select_block(eligible, price, instance.hard_cap, order)
        inc_ids = {tx.id for tx in included}
        pending = [tx for tx in pending if tx.id not in inc_ids]
        volume = sum(tx.q for tx in included)
        welfare += sum(tx.welfare for tx in included)
        blocks.append(
            BlockRecord(
                t=t,
                price=price,
                scheduled_volume=volume,
                included_ids=tuple(sorted(inc_ids)),
                n_included=len(included),
                cumulative_welfare=welfare,
            )
        )
        price = update_price(price, volume, instance.B, eta, p_min)
    return BaseFeeTrace(tuple(blocks), instance, eta, p_min)


def verify_maximality(trace: BaseFeeTrace) -> list:
    """Re-scan each block: no eligible, un-included transaction may fit the
    residual capacity.  Returns violating (t, tx_id) pairs (empty = pass)."""
    inst = trace.instance
    included_at = {}
    for b in trace.blocks:
        for tid in b.included_ids:
            included_at[tid] = b.t
    violations = []
    for b in trace.blocks:
        residual = inst.hard_cap - b.scheduled_volume
        for tx in inst.transactions:
            live = tx.r <= b.t and included_at.get(tx.id, inst.T + 1) > b.t
            if live and tx.v >= b.price and tx.q <= residual:
                violations.append((b.t, tx.id))
    return violations


# --- instance (de)serialization ---------------------------------------------


def instance_to_json(instance: OfflineInstance) -> dict:
    return {
        "T": instance.T,
        "B": instance.B,
        "hard_cap": instance.hard_cap,
        "transactions": [
            {"id": tx.id, "r": tx.r, "q": tx.q, "v": tx.v} for tx in instance.transactions
        ],
    }


def instance_from_json(doc: dict) -> OfflineInstance:
    txs = tuple(
        Transaction(id=str(d["id"]), r=int(d["r"]), q=int(d["q"]), v=d["v"])
        for d in doc.get("transactions", [])
    )
    return OfflineInstance(
        transactions=txs,
        T=int(doc["T"]),
        B=doc["B"],
        hard_cap=doc.get("hard_cap"),
    )


def load_instance(path: str) -> OfflineInstance:
    with open(path) as fh:
        return instance_from_json(json.load(fh))


def dump_instance(instance: OfflineInstance, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_json(instance), fh, indent=2, sort_keys=True)
        fh.write("\n")
