"""Per-node transaction DAG with conflict sets, vouchers, and finalization.

Each node keeps its own DAG.  Transactions carrying the same conflict_key
belong to one conflict set, of which exactly one member is preferred at a
time.  A voucher marks a transaction that won a broker-majority query at
this node; confidence of a transaction is the number of vouched
transactions that can reach it (itself included via the length-0 path).

Finalization uses the classic two-branch rule: a strongly preferred
transaction is final once its conflict set is a singleton with counter at
least beta1, or once its confidence reaches beta2.  A finalized decision
latches: the preferred member of a finalized conflict set is never
displaced afterwards.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

from .core import BlizzardError, NodeId, TxId


class UnknownTx(BlizzardError):
    pass


class UnknownParent(BlizzardError):
    def __init__(self, parent_id):
        super().__init__(f"unknown parent transaction: {parent_id}")
        self.parent_id = parent_id


class DuplicateTx(BlizzardError):
    pass


class EmptyDag(BlizzardError):
    pass


@dataclass(frozen=True)
class Transaction:
    """An immutable transaction record.

    Two transactions conflict iff they share conflict_key but have
    distinct ids; a correct issuer never produces such a pair.
    """

    id: TxId
    parents: tuple[TxId, ...]
    issuer: NodeId
    conflict_key: str


class ConflictSet:
    """Mutually conflicting transactions plus preference bookkeeping."""

    __slots__ = ("members", "pref", "last", "counter")

    def __init__(self, first: TxId):
        self.members: set[TxId] = {first}
        self.pref: TxId = first
        self.last: TxId = first
        self.counter: int = 0

    def __repr__(self):
        return (f"ConflictSet(members={sorted(self.members)}, pref={self.pref}, "
                f"last={self.last}, counter={self.counter})")


class NodeDag:
    """One node's view of the transaction DAG.

    Owned by exactly one node state machine; never mutated concurrently.
    beta1/beta2 may be left unset when finalization is not exercised.
    """

    def __init__(self, beta1: Optional[int] = None, beta2: Optional[int] = None):
        self.beta1 = beta1
        self.beta2 = beta2
        self.txs: dict[TxId, Transaction] = {}
        self.queried: set[TxId] = set()
        self.vouchers: dict[TxId, int] = {}
        self.conflict_sets: dict[str, ConflictSet] = {}
        self.finalized: set[TxId] = set()
        self._children: dict[TxId, list[TxId]] = {}
        self._depth: dict[TxId, int] = {}
        self._order: list[TxId] = []

    # -- structure -----------------------------------------------------

    def __contains__(self, tx_id: TxId) -> bool:
        return tx_id in self.txs

    def __len__(self) -> int:
        return len(self.txs)

    def _require(self, tx_id: TxId) -> Transaction:
        try:
            return self.txs[tx_id]
        except KeyError:
            raise UnknownTx(f"unknown transaction: {tx_id}") from None

    def add_transaction(self, tx: Transaction) -> None:
        if tx.id in self.txs:
            raise DuplicateTx(f"transaction already known: {tx.id}")
        for pid in tx.parents:
            if pid not in self.txs:
                raise UnknownParent(pid)
        self.txs[tx.id] = tx
        self.vouchers[tx.id] = 0
        self._children[tx.id] = []
        for pid in tx.parents:
            self._children[pid].append(tx.id)
        self._depth[tx.id] = 1 + max((self._depth[p] for p in tx.parents), default=-1)
        self._order.append(tx.id)
        cs = self.conflict_sets.get(tx.conflict_key)
        if cs is None:
            self.conflict_sets[tx.conflict_key] = ConflictSet(tx.id)
        else:
            cs.members.add(tx.id)

    def conflict_set_of(self, tx_id: TxId) -> ConflictSet:
        tx = self._require(tx_id)
        return self.conflict_sets[tx.conflict_key]

    def ancestors(self, tx_id: TxId, include_self: bool = True) -> set[TxId]:
        """All transactions reachable through parent edges."""
        self._require(tx_id)
        seen = {tx_id}
        stack = [tx_id]
        while stack:
            for pid in self.txs[stack.pop()].parents:
                if pid not in seen:
                    seen.add(pid)
                    stack.append(pid)
        if not include_self:
            seen.discard(tx_id)
        return seen

    def descendants(self, tx_id: TxId, include_self: bool = True) -> set[TxId]:
        """All transactions from which a path leads back to tx_id."""
        self._require(tx_id)
        seen = {tx_id}
        queue = deque([tx_id])
        while queue:
            for cid in self._children[queue.popleft()]:
                if cid not in seen:
                    seen.add(cid)
                    queue.append(cid)
        if not include_self:
            seen.discard(tx_id)
        return seen

    def depth(self, tx_id: TxId) -> int:
        self._require(tx_id)
        return self._depth[tx_id]

    # -- queries -------------------------------------------------------

    def is_strongly_preferred(self, tx_id: TxId) -> bool:
        """True iff the tx and every ancestor lead their conflict sets."""
        for aid in self.ancestors(tx_id):
            tx = self.txs[aid]
            if self.conflict_sets[tx.conflict_key].pref != aid:
                return False
        return True

    def confidence(self, tx_id: TxId) -> int:
        """Vouched transactions with a path to tx_id, tx_id included."""
        return sum(self.vouchers[d] for d in self.descendants(tx_id))

    def is_finalized(self, tx_id: TxId) -> bool:
        self._require(tx_id)
        if self.beta1 is None or self.beta2 is None:
            raise BlizzardError("beta1/beta2 unset; finalization unavailable")
        if tx_id in self.finalized:
            return True
        if not self.is_strongly_preferred(tx_id):
            return False
        cs = self.conflict_set_of(tx_id)
        done = (len(cs.members) == 1 and cs.counter >= self.beta1) or \
            self.confidence(tx_id) >= self.beta2
        if done:
            self.finalized.add(tx_id)
        return done

    # -- voting --------------------------------------------------------

    def record_voucher(self, tx_id: TxId) -> None:
        """Mark tx as voucher-winning and update its ancestor closure.

        For every conflict set touched by the closure: the preferred
        member is re-chosen by confidence (ties keep the incumbent, and a
        set whose preference is already finalized never flips), and the
        consecutive counter tracks repeat votes through the same member.
        """
        self._require(tx_id)
        self.vouchers[tx_id] = 1
        for aid in self.ancestors(tx_id):
            tx = self.txs[aid]
            cs = self.conflict_sets[tx.conflict_key]
            if len(cs.members) > 1 and cs.pref not in self.finalized:
                best = cs.pref
                best_conf = self.confidence(cs.pref)
                for member in sorted(cs.members):
                    if member == cs.pref:
                        continue
                    conf = self.confidence(member)
                    if conf > best_conf:
                        best, best_conf = member, conf
                cs.pref = best
            if aid == cs.last:
                cs.counter += 1
            else:
                cs.last = aid
                cs.counter = 1

    # -- parent selection ----------------------------------------------

    def select_parents(self, policy: str, fanout: int = 1, rng=None) -> list[TxId]:
        """Choose parents for a new transaction.

        chain            the single most recently added strongly preferred tx
        random-frontier  up to `fanout` strongly preferred childless txs,
                         sampled uniformly (requires rng)

        When the frontier holds no strongly preferred tip (every tip sits
        on the losing side of a conflict), fall back to the deepest
        finalized transaction so a re-issued transaction can re-anchor.
        """
        if not self.txs:
            raise EmptyDag("cannot select parents from an empty DAG")
        if policy == "chain":
            for tx_id in reversed(self._order):
                if self.is_strongly_preferred(tx_id):
                    return [tx_id]
            return self._fallback_parent()
        if policy == "random-frontier":
            tips = [t for t in self._order
                    if not self._children[t] and self.is_strongly_preferred(t)]
            if not tips:
                return self._fallback_parent()
            if len(tips) <= fanout:
                return list(tips)
            if rng is None:
                raise ValueError("random-frontier policy requires an rng")
            idx = rng.choice(len(tips), size=fanout, replace=False)
            return [tips[i] for i in sorted(idx)]
        raise ValueError(f"unknown parent-selection policy: {policy}")

    def _fallback_parent(self) -> list[TxId]:
        candidates = []
        if self.beta1 is not None and self.beta2 is not None:
            candidates = [t for t in self._order if self.is_finalized(t)]
        if not candidates:
            candidates = [t for t in self._order if self.is_strongly_preferred(t)]
        if not candidates:
            raise EmptyDag("no usable parent candidate in DAG")
        return [max(candidates, key=lambda t: (self._depth[t], t))]

    # -- fixtures ------------------------------------------------------

    def dump_records(self) -> list[dict]:
        """One diagnostic record per transaction, in insertion order."""
        out = []
        for tx_id in self._order:
            tx = self.txs[tx_id]
            out.append({
                "id": tx.id,
                "parents": list(tx.parents),
                "conflict_key": tx.conflict_key,
                "voucher": self.vouchers[tx.id],
                "pref": self.conflict_sets[tx.conflict_key].pref == tx.id,
                "confidence": self.confidence(tx.id),
            })
        return out

    def dump_jsonl(self) -> str:
        return "\n".join(json.dumps(rec, sort_keys=True) for rec in self.dump_records())


def load_jsonl(text: str) -> list[dict]:
    """Parse a DAG dump back into records (structure fixtures only)."""
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def genesis(tx_id: TxId = "genesis", issuer: NodeId = 0) -> Transaction:
    return Transaction(id=tx_id, parents=(), issuer=issuer, conflict_key=tx_id)


def make_tx(tx_id: TxId, parents: Iterable[TxId], issuer: NodeId = 0,
            conflict_key: Optional[str] = None) -> Transaction:
    return Transaction(id=tx_id, parents=tuple(parents), issuer=issuer,
                       conflict_key=conflict_key if conflict_key is not None else tx_id)
