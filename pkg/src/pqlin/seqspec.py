"""Sequential priority-queue specification.

Two independent routes decide membership of a sequential word:

* ``lts_member`` runs the labelled transition system directly (state =
  per-priority FIFO sequences; a remove needs its value oldest at some
  priority with every strictly smaller priority empty; rm(empty) needs
  everything empty).
* ``check_pq_seq`` is the recursive validator that peels one operation
  (or one put/rm pair) per step, guided by word predicates.

Both operate on words of SeqOp symbols; a sequential execution (every
call immediately followed by its return) converts via ``word_of``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .model import (
    CALL,
    PUT,
    RET,
    RM,
    Action,
    Execution,
    InputError,
    PriorityOrder,
    empty_value,
)


@dataclass(frozen=True, eq=True)
class SeqOp:
    method: str  # PUT | RM
    value: str
    priority: str | None = None
    empty: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "_h", hash((self.method, self.value, self.priority, self.empty))
        )

    def __hash__(self):  # hot in cached recursion; precomputed
        return self._h

    def __repr__(self):
        if self.empty:
            return "rm(empty)"
        if self.method == PUT:
            return f"put({self.value},{self.priority})"
        return f"rm({self.value})"


def put(value: str, priority: str) -> SeqOp:
    return SeqOp(PUT, value, priority)


def rm(value: str) -> SeqOp:
    return SeqOp(RM, value)


def rm_empty(tag: str = "e0") -> SeqOp:
    return SeqOp(RM, empty_value(tag), empty=True)


Word = tuple[SeqOp, ...]


@dataclass(frozen=True)
class PQState:
    """Mapping priority -> value sequence (oldest first); empty entries elided."""

    per_priority: frozenset[tuple[str, tuple[str, ...]]] = frozenset()

    def seq(self, p: str) -> tuple[str, ...]:
        for q, vs in self.per_priority:
            if q == p:
                return vs
        return ()

    def push(self, p: str, v: str) -> "PQState":
        rest = {(q, vs) for q, vs in self.per_priority if q != p}
        rest.add((p, self.seq(p) + (v,)))
        return PQState(frozenset(rest))

    def pop_oldest(self, p: str) -> "PQState":
        vs = self.seq(p)
        rest = {(q, ws) for q, ws in self.per_priority if q != p}
        if vs[1:]:
            rest.add((p, vs[1:]))
        return PQState(frozenset(rest))

    def is_empty(self) -> bool:
        return not self.per_priority

    def nonempty_priorities(self) -> set[str]:
        return {q for q, _ in self.per_priority}


EMPTY_STATE = PQState()


def lts_successors(q: PQState, op: SeqOp, order: PriorityOrder) -> list[PQState]:
    """All successor states (more than one only for repeated values)."""
    if op.method == PUT:
        return [q.push(op.priority, op.value)]
    if op.empty:
        return [q] if q.is_empty() else []
    succs = []
    busy = q.nonempty_priorities()
    for p in sorted(busy):
        if q.seq(p)[0] == op.value and not any(
            order.lt(p2, p) for p2 in busy if p2 != p
        ):
            succs.append(q.pop_oldest(p))
    return succs


def lts_step(q: PQState, op: SeqOp, order: PriorityOrder) -> PQState | None:
    """One transition; None signals refusal (the op is not enabled)."""
    succs = lts_successors(q, op, order)
    return succs[0] if succs else None


def lts_member(word, order: PriorityOrder) -> bool:
    """True iff the word is a trace of the LTS from the all-empty state."""
    word = tuple(word)

    def run(q: PQState, i: int) -> bool:
        if i == len(word):
            return True
        return any(run(q2, i + 1) for q2 in lts_successors(q, word[i], order))

    return run(EMPTY_STATE, 0)


def word_of(e: Execution) -> Word:
    """SeqOp word of a sequential execution; rejects non-sequential input."""
    if len(e.actions) % 2:
        raise InputError("non-sequential execution: odd action count")
    out = []
    for i in range(0, len(e.actions), 2):
        c, r = e.actions[i], e.actions[i + 1]
        if c.kind != CALL or r.kind != RET or c.op_id != r.op_id:
            raise InputError(f"non-sequential execution at action {i}")
        out.append(SeqOp(c.method, c.value, c.priority, c.empty))
    return tuple(out)


def execution_of(word, order: PriorityOrder, prefix: str = "o") -> Execution:
    """Sequential execution realizing a word (fresh op ids)."""
    actions = []
    for k, op in enumerate(word):
        oid = f"{prefix}{k}"
        value = empty_value(oid) if op.empty else op.value
        for kind in (CALL, RET):
            actions.append(
                Action(oid, kind, op.method, value, op.priority, op.empty)
            )
    return Execution(actions=tuple(actions), order=order)


# ---------------------------------------------------------------------------
# Word predicates for the recursive validator
# ---------------------------------------------------------------------------


def priorities(word) -> set[str]:
    """Priorities occurring in put symbols."""
    return {s.priority for s in word if s.method == PUT}


def unmatched_priorities(word) -> set[str]:
    """Priorities of puts whose value is never removed in the word."""
    removed = {s.value for s in word if s.method == RM and not s.empty}
    return {s.priority for s in word if s.method == PUT and s.value not in removed}


def matched_prec(word, p: str, order: PriorityOrder) -> bool:
    """Every value put with priority strictly below p is removed in the word."""
    removed = {s.value for s in word if s.method == RM and not s.empty}
    return all(
        s.value in removed
        for s in word
        if s.method == PUT and order.lt(s.priority, p)
    )


def _matched_upto(word, p: str, order: PriorityOrder) -> bool:
    # Like matched_prec but with <=: equal-priority values count too. The
    # removal of the last-added p-value needs priority p's own bucket empty,
    # so the u·v segment must also match its other p-values.
    removed = {s.value for s in word if s.method == RM and not s.empty}
    return all(
        s.value in removed
        for s in word
        if s.method == PUT and order.leq(s.priority, p)
    )


def matched(word) -> bool:
    """Every put in the word has a matching remove in the word."""
    removed = {s.value for s in word if s.method == RM and not s.empty}
    return all(s.value in removed for s in word if s.method == PUT)


def has_empty_removes(word) -> bool:
    return any(s.empty for s in word)


def has_unmatched_max_priority(word, order: PriorityOrder) -> bool:
    """Some priority maximal within priorities(word) has an unmatched put."""
    pres = priorities(word)
    return bool(order.maximal(pres) & unmatched_priorities(word))


def _lt_some(order: PriorityOrder, p: str, ps) -> bool:
    return any(order.lt(p, q) for q in ps)


def _leq_some(order: PriorityOrder, p: str, ps) -> bool:
    return any(order.leq(p, q) for q in ps)


def empty_remove_seq(word, i: int) -> bool:
    """word = u · word[i] · v with word[i] an rm(empty) and matched(u)."""
    if not word[i].empty:
        return False
    return matched(word[:i])


def unmatched_max_priority_seq(word, x: str, order: PriorityOrder) -> bool:
    """word = u·put(x,p)·v, x never removed, p maximal, p not put in v."""
    pos = [i for i, s in enumerate(word) if s.method == PUT and s.value == x]
    if len(pos) != 1:
        return False
    if any(s.method == RM and s.value == x for s in word):
        return False
    i = pos[0]
    p = word[i].priority
    rest = word[:i] + word[i + 1 :]
    return not _lt_some(order, p, priorities(rest)) and p not in priorities(word[i + 1 :])


def matched_max_priority_seq(word, x: str, order: PriorityOrder) -> bool:
    """word = u·put(x,p)·v·rm(x)·w with the §3.1 side conditions."""
    put_pos = [i for i, s in enumerate(word) if s.method == PUT and s.value == x]
    rm_pos = [i for i, s in enumerate(word) if s.method == RM and s.value == x]
    if len(put_pos) != 1 or len(rm_pos) != 1:
        return False
    i, j = put_pos[0], rm_pos[0]
    if not i < j:
        return False
    p = word[i].priority
    u, v, w = word[:i], word[i + 1 : j], word[j + 1 :]
    rest = u + v + w
    if _lt_some(order, p, priorities(rest)):
        return False
    if _leq_some(order, p, unmatched_priorities(rest)):
        return False
    if not _matched_upto(u + v, p, order):
        return False
    if p in priorities(v + w):
        return False
    return True


def _values_sane(word) -> bool:
    """False for a value removed twice or removed with no put anywhere.

    Such removes are always LTS-refused (a differentiated value is present
    at most once, ever), but the branch predicates would silently erase
    them via word \\ x, so they are rejected up front.
    """
    puts = set()
    rms = set()
    for s in word:
        if s.empty:
            continue
        if s.method == PUT:
            puts.add(s.value)
        elif s.value in rms:
            return False
        else:
            rms.add(s.value)
    return rms <= puts


def _word_without_value(word, x: str) -> Word:
    return tuple(s for s in word if s.empty or s.value != x)


def _word_without_index(word, i: int) -> Word:
    return word[:i] + word[i + 1 :]


def check_pq_seq(word, order: PriorityOrder) -> bool:
    """Recursive membership test for sequential, data-differentiated words.

    Candidate iteration is by earliest put (or rm(empty)) position; the
    verdict does not depend on the choice.
    """
    word = tuple(word)
    puts = set()
    rms = set()
    sane = True
    for s in word:
        if s.empty:
            continue
        if s.method == PUT:
            if s.value in puts:
                raise InputError("word is not data-differentiated")
            puts.add(s.value)
        elif s.value in rms:
            sane = False
        else:
            rms.add(s.value)
    if not sane or not rms <= puts:
        return False
    return _check_rec(word, order)


@lru_cache(maxsize=1 << 20)
def _check_rec(word: Word, order: PriorityOrder) -> bool:
    # One pass of bookkeeping per call; candidate scans are index arithmetic
    # over it. Values are differentiated and sane here (at most one put and
    # one rm each), so single indices suffice.
    if not word:
        return True
    put_at: dict[str, int] = {}
    rm_at: dict[str, int] = {}
    empties: list[int] = []
    for i, s in enumerate(word):
        if s.empty:
            empties.append(i)
        elif s.method == PUT:
            put_at[s.value] = i
        else:
            rm_at[s.value] = i

    if empties:
        for i in empties:
            if all(rm_at.get(v, len(word)) < i for v, k in put_at.items() if k < i):
                return _check_rec(_word_without_index(word, i), order)
        return False

    prios = {word[k].priority for k in put_at.values()}
    unmatched = {word[k].priority for v, k in put_at.items() if v not in rm_at}
    if order.maximal(prios) & unmatched:
        for x, i in put_at.items():
            if x in rm_at:
                continue
            p = word[i].priority
            others = {word[k].priority for y, k in put_at.items() if y != x}
            if any(order.lt(p, q) for q in others):
                continue
            if any(word[k].priority == p for y, k in put_at.items() if y != x and k > i):
                continue
            return _check_rec(_word_without_value(word, x), order)
        return False

    for x, i in put_at.items():
        j = rm_at.get(x)
        if j is None or j < i:
            continue
        p = word[i].priority
        ok = True
        for y, k in put_at.items():
            if y == x:
                continue
            q = word[k].priority
            jy = rm_at.get(y)
            if order.lt(p, q):
                ok = False
                break
            if jy is None and order.leq(p, q):
                ok = False  # unmatched value at priority >= p
                break
            if order.leq(q, p) and k < j and not (jy is not None and jy < j):
                ok = False  # u·v leaves a <=p value unmatched before rm(x)
                break
            if q == p and k > i:
                ok = False  # x is not the last p-value added
                break
        if ok:
            return _check_rec(_word_without_value(word, x), order)
    return False
