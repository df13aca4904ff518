"""Brute-force linearizability oracle.

Enumerates linearizations (topological orders of happens-before) and tests
SeqPQ membership on each. Ground truth for desk-scale validation of the
polynomial checkers and the monitors; intentionally exponential and capped.
"""

from __future__ import annotations

from .model import Execution, happens_before, require_valid
from .seqspec import (
    EMPTY_STATE,
    SeqOp,
    Word,
    empty_remove_seq,
    lts_successors,
    matched_max_priority_seq,
    unmatched_max_priority_seq,
)

DEFAULT_CAP = 12


class BoundExceeded(RuntimeError):
    """Operation count exceeds the configured combinatorial guard."""


def _op_symbols(e: Execution) -> dict[str, SeqOp]:
    return {
        op.op_id: SeqOp(op.method, op.value, op.priority, op.empty)
        for op in e.operations.values()
    }


def _succs_preds(e: Execution):
    hb = happens_before(e)
    preds: dict[str, set[str]] = {oid: set() for oid in e.operations}
    for a, b in hb:
        preds[b].add(a)
    return preds


def enumerate_linearizations(e: Execution, cap: int = DEFAULT_CAP):
    """Yield every topological order of happens-before exactly once.

    Each item is a tuple of op_ids.
    """
    require_valid(e)
    if len(e.operations) > cap:
        raise BoundExceeded(f"{len(e.operations)} operations exceed cap {cap}")
    preds = _succs_preds(e)
    order_ids = sorted(e.operations, key=lambda oid: e.operations[oid].call_index)

    def rec(scheduled: list[str], remaining: set[str]):
        if not remaining:
            yield tuple(scheduled)
            return
        done = set(scheduled)
        for oid in order_ids:
            if oid in remaining and preds[oid] <= done:
                scheduled.append(oid)
                remaining.remove(oid)
                yield from rec(scheduled, remaining)
                remaining.add(oid)
                scheduled.pop()

    yield from rec([], set(e.operations))


def linearization_word(e: Execution, lin: tuple[str, ...]) -> Word:
    syms = _op_symbols(e)
    return tuple(syms[oid] for oid in lin)


def is_linearizable_bruteforce(
    e: Execution, cap: int = DEFAULT_CAP
) -> tuple[bool, tuple[str, ...] | None]:
    """(True, witness linearization) iff some linearization is in SeqPQ.

    The DFS runs the LTS incrementally and prunes refused prefixes (sound:
    SeqPQ is prefix-closed); visited (remaining ops, queue state) pairs are
    memoized.
    """
    require_valid(e)
    if len(e.operations) > cap:
        raise BoundExceeded(f"{len(e.operations)} operations exceed cap {cap}")
    preds = _succs_preds(e)
    syms = _op_symbols(e)
    order_ids = sorted(e.operations, key=lambda oid: e.operations[oid].call_index)
    seen: set = set()

    def rec(scheduled: list[str], remaining: frozenset[str], state):
        if not remaining:
            return tuple(scheduled)
        key = (remaining, state)
        if key in seen:
            return None
        seen.add(key)
        done = set(scheduled)
        for oid in order_ids:
            if oid in remaining and preds[oid] <= done:
                for state2 in lts_successors(state, syms[oid], e.order):
                    scheduled.append(oid)
                    hit = rec(scheduled, remaining - {oid}, state2)
                    scheduled.pop()
                    if hit is not None:
                        return hit
        return None

    witness = rec([], frozenset(e.operations), EMPTY_STATE)
    return (witness is not None, witness)


GAMMA_EMPTY = "empty-remove"
GAMMA_UNMATCHED = "unmatched-max-priority"
GAMMA_MATCHED = "matched-max-priority"


def gamma_conc_oracle(e: Execution, gamma: str, alpha, cap: int = DEFAULT_CAP) -> bool:
    """True iff some linearization s of e satisfies Γ-Seq(s, alpha).

    alpha is an op_id for the empty-remove predicate and a value for the
    two max-priority predicates. Only the single-step predicate is tested;
    the recursive remainder is not (matching Check-PQ-Conc-NonRec).
    """
    for lin in enumerate_linearizations(e, cap=cap):
        word = linearization_word(e, lin)
        if gamma == GAMMA_EMPTY:
            idx = {oid: k for k, oid in enumerate(lin)}
            if alpha in idx and empty_remove_seq(word, idx[alpha]):
                return True
        elif gamma == GAMMA_UNMATCHED:
            if unmatched_max_priority_seq(word, alpha, e.order):
                return True
        elif gamma == GAMMA_MATCHED:
            if matched_max_priority_seq(word, alpha, e.order):
                return True
        else:
            raise ValueError(f"unknown gamma {gamma!r}")
    return False
