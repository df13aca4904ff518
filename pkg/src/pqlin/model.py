"""Trace data model: actions, operations, priority orders, happens-before.

An execution is a flat sequence of call/return actions over ``put``/``rm``
operations. Removes that observed an empty queue carry a fresh synthetic
value (one per operation) so that projections and monitors can address
individual empty-removes; on the wire they are marked ``empty: true``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping

CALL = "call"
RET = "ret"
PUT = "put"
RM = "rm"


class InputError(ValueError):
    """Raised for malformed traces, orders, or preconditions on inputs."""


def empty_value(op_id: str) -> str:
    """Synthetic per-operation value carried by an rm(empty)."""
    return f"$empty:{op_id}"


@dataclass(frozen=True)
class PriorityOrder:
    """Finite strict partial order over opaque priority identifiers.

    ``less_than`` is stored transitively closed; incomparability is the
    absence of both (p, q) and (q, p).
    """

    priorities: frozenset[str]
    less_than: frozenset[tuple[str, str]]

    @classmethod
    def from_pairs(
        cls, priorities: Iterable[str], pairs: Iterable[tuple[str, str]]
    ) -> "PriorityOrder":
        """Build an order from generator pairs, closing transitively."""
        prios = frozenset(priorities)
        rel = set()
        for p, q in pairs:
            if p not in prios or q not in prios:
                raise InputError(f"unknown priority in pair ({p}, {q})")
            rel.add((p, q))
        changed = True
        while changed:
            changed = False
            for p, q in list(rel):
                for q2, s in list(rel):
                    if q == q2 and (p, s) not in rel:
                        rel.add((p, s))
                        changed = True
        for p in prios:
            if (p, p) in rel:
                raise InputError(f"priority order has a cycle through {p}")
        return cls(priorities=prios, less_than=frozenset(rel))

    def lt(self, p: str, q: str) -> bool:
        return (p, q) in self.less_than

    def leq(self, p: str, q: str) -> bool:
        return p == q or (p, q) in self.less_than

    def maximal(self, among: Iterable[str]) -> set[str]:
        """Priorities in ``among`` with no strictly larger one in ``among``."""
        pool = set(among)
        return {p for p in pool if not any(self.lt(p, q) for q in pool)}

    def to_json(self) -> dict:
        return {
            "format": 1,
            "priorities": sorted(self.priorities),
            "less_than": sorted([p, q] for p, q in self.less_than),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PriorityOrder":
        try:
            return cls.from_pairs(obj["priorities"], [tuple(x) for x in obj["less_than"]])
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed priority-order object: {exc}") from exc


@dataclass(frozen=True)
class Action:
    op_id: str
    kind: str  # CALL | RET
    method: str  # PUT | RM
    value: str
    priority: str | None = None  # put actions only
    empty: bool = False  # rm(empty) marker

    def __post_init__(self):
        if self.kind not in (CALL, RET) or self.method not in (PUT, RM):
            raise InputError(f"bad action kind/method: {self.kind}/{self.method}")
        if self.method == PUT and self.priority is None:
            raise InputError(f"put action {self.op_id} lacks a priority")
        if self.method == RM and self.priority is not None:
            raise InputError(f"rm action {self.op_id} carries a priority")
        if self.empty and self.method != RM:
            raise InputError(f"empty flag on a put action {self.op_id}")


@dataclass(frozen=True)
class Operation:
    op_id: str
    method: str
    value: str
    priority: str | None
    empty: bool
    call_index: int
    return_index: int | None

    @property
    def pending(self) -> bool:
        return self.return_index is None


@dataclass(frozen=True)
class Execution:
    actions: tuple[Action, ...]
    order: PriorityOrder

    @cached_property
    def operations(self) -> dict[str, Operation]:
        """Operations keyed by op_id, derived from call/return indices.

        Well-formedness is not assumed here; validate() reports problems.
        A duplicated call/return keeps the first occurrence.
        """
        ops: dict[str, Operation] = {}
        for i, act in enumerate(self.actions):
            if act.kind == CALL:
                if act.op_id not in ops:
                    ops[act.op_id] = Operation(
                        act.op_id, act.method, act.value, act.priority, act.empty, i, None
                    )
            else:
                op = ops.get(act.op_id)
                if op is not None and op.return_index is None:
                    ops[act.op_id] = replace(op, return_index=i)
        return ops

    def values(self) -> set[str]:
        """All values occurring in actions (empty-remove synthetics included)."""
        return {a.value for a in self.actions}

    def priorities_used(self) -> set[str]:
        return {a.priority for a in self.actions if a.priority is not None}

    def __len__(self) -> int:
        return len(self.actions)


def validate(e: Execution) -> list[str]:
    """All well-formedness failures; checkers require an empty list."""
    violations: list[str] = []
    seen_calls: dict[str, Action] = {}
    returned: set[str] = set()
    for i, act in enumerate(e.actions):
        if act.kind == CALL:
            if act.op_id in seen_calls:
                violations.append(f"duplicated op_id: second call for {act.op_id} at {i}")
            else:
                seen_calls[act.op_id] = act
        else:
            call = seen_calls.get(act.op_id)
            if call is None:
                violations.append(f"unmatched return: {act.op_id} at {i} has no prior call")
            elif act.op_id in returned:
                violations.append(f"duplicated op_id: second return for {act.op_id} at {i}")
            else:
                returned.add(act.op_id)
                if (call.method, call.value, call.priority, call.empty) != (
                    act.method,
                    act.value,
                    act.priority,
                    act.empty,
                ):
                    violations.append(f"mismatched call/return payload for {act.op_id}")
        if act.priority is not None and act.priority not in e.order.priorities:
            violations.append(f"unknown priority {act.priority} at {i}")
        if act.empty and act.value != empty_value(act.op_id):
            violations.append(f"malformed rm(empty) value for {act.op_id}")
        if not act.empty and act.value.startswith("$empty:"):
            violations.append(f"reserved empty value on non-empty action {act.op_id}")
    for op_id in seen_calls:
        if op_id not in returned:
            violations.append(f"pending operation: {op_id}")
    return violations


def require_valid(e: Execution) -> None:
    problems = validate(e)
    if problems:
        raise InputError("; ".join(problems))


def happens_before(e: Execution) -> set[tuple[str, str]]:
    """(o1, o2) iff o1's return occurs before o2's call. Rejects pending ops."""
    require_valid(e)
    rel = set()
    ops = list(e.operations.values())
    for o1 in ops:
        for o2 in ops:
            if o1.op_id != o2.op_id and o1.return_index < o2.call_index:
                rel.add((o1.op_id, o2.op_id))
    return rel


def project_values(e: Execution, keep: Iterable[str]) -> Execution:
    """Subsequence of e keeping exactly actions whose value is in ``keep``."""
    kset = set(keep)
    return Execution(
        actions=tuple(a for a in e.actions if a.value in kset),
        order=e.order,
    )


def project_priority_downset(e: Execution, p: str) -> Execution:
    """Keep values whose priority q satisfies q = p or q ≺ p.

    p must be maximal among the priorities occurring in e. Empty-removes
    are dropped (their values carry no priority).
    """
    used = e.priorities_used()
    if p not in used or p not in e.order.maximal(used):
        raise InputError(f"priority {p} is not maximal in the execution")
    keep = set()
    for op in e.operations.values():
        if op.method == PUT and e.order.leq(op.priority, p):
            keep.add(op.value)
    # rm-only values have no priority; they stay only if some put named them,
    # which is already covered by the loop above.
    return project_values(e, keep)


def rename(e: Execution, r: Mapping[str, str]) -> Execution:
    """Replace every value x by r(x); priorities unchanged. r must be total."""
    missing = e.values() - set(r)
    if missing:
        raise InputError(f"renaming not total; missing {sorted(missing)}")
    actions = tuple(replace(a, value=r[a.value]) for a in e.actions)
    flagged = {a.value for a in actions if a.empty}
    plain = {a.value for a in actions if not a.empty}
    if flagged & plain:
        raise InputError("renaming merges empty-flagged and plain values")
    return Execution(actions=actions, order=e.order)


def is_data_differentiated(e: Execution) -> bool:
    """True iff no value occurs in two distinct put call actions."""
    seen = set()
    for a in e.actions:
        if a.kind == CALL and a.method == PUT:
            if a.value in seen:
                return False
            seen.add(a.value)
    return True


# ---------------------------------------------------------------------------
# Wire formats: JSONL traces, JSON priority orders
# ---------------------------------------------------------------------------


def action_to_json(a: Action) -> dict:
    obj: dict = {"op": a.op_id, "kind": a.kind, "method": a.method}
    if a.empty:
        obj["empty"] = True
    else:
        obj["value"] = a.value
    if a.priority is not None:
        obj["priority"] = a.priority
    return obj


def action_from_json(obj: dict) -> Action:
    try:
        op_id = obj["op"]
        kind = obj["kind"]
        method = obj["method"]
    except KeyError as exc:
        raise InputError(f"trace line missing field {exc}") from exc
    empty = bool(obj.get("empty", False))
    if empty:
        value = empty_value(op_id)  # canonical synthetic, one per operation
    else:
        if "value" not in obj:
            raise InputError(f"trace line for {op_id} lacks a value")
        value = obj["value"]
    return Action(
        op_id=op_id,
        kind=kind,
        method=method,
        value=value,
        priority=obj.get("priority"),
        empty=empty,
    )


def load_trace(path: str, order: PriorityOrder) -> Execution:
    actions = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: not JSON: {exc}") from exc
            try:
                actions.append(action_from_json(obj))
            except InputError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
    return Execution(actions=tuple(actions), order=order)


def dump_trace(e: Execution, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in e.actions:
            fh.write(json.dumps(action_to_json(a), sort_keys=True) + "\n")


def load_order(path: str) -> PriorityOrder:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not JSON: {exc}") from exc
    return PriorityOrder.from_json(obj)
