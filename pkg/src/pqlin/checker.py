"""Polynomial linearizability characterizations and the top-level verdict.

The verdict pipeline for a differentiated execution:

1. per-priority FIFO patterns (four shapes; a standing precondition for
   everything below),
2. for every rm(empty), a cycle through it in its left-right constraint
   graph,
3. for every matched value x, a cycle through x in the left-right
   constraint graph of the projection {x} + strictly-smaller values,
4. for every priority class with two or more matched values, a put-before
   pair whose rightmost gap-point ends before the earlier value's calls.

Step 2-4 are the witness-directed equivalent of checking every value
projection with the non-recursive single-step test (edge sets and
put-before paths only grow, and gap sets only shrink, as values are added
to a projection, so maximal projections decide). The subset-enumeration
form is also implemented (mode="exhaustive") and cross-checked in tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

from .model import (
    PUT,
    RM,
    Execution,
    InputError,
    Operation,
    is_data_differentiated,
    project_values,
    require_valid,
)

PROJ_BOUND = 12


# ---------------------------------------------------------------------------
# Evidence and verdicts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FifoEvidence:
    kind = "fifo"
    pattern: int  # 1..4, Appendix D.1 numbering
    values: tuple[str, ...]
    priority: str | None = None

    def to_json(self):
        return {
            "kind": "fifo",
            "pattern": self.pattern,
            "values": list(self.values),
            "priority": self.priority,
        }


@dataclass(frozen=True)
class CycleEvidence:
    kind = "cycle"
    value: str  # the maximal-priority value the cycle goes through
    cycle: tuple[str, ...]

    def to_json(self):
        return {"kind": "cycle", "value": self.value, "cycle": list(self.cycle)}


@dataclass(frozen=True)
class EmptyCycleEvidence:
    kind = "empty_cycle"
    op_id: str  # the rm(empty) operation
    cycle: tuple[str, ...]

    def to_json(self):
        return {"kind": "empty_cycle", "op": self.op_id, "cycle": list(self.cycle)}


@dataclass(frozen=True)
class PbGapEvidence:
    kind = "pb_gap"
    x: str  # value whose remove has no late enough gap-point
    y: str  # value put-before x whose calls outrun the gap
    priority: str
    rightmost_gap: int
    pb_path: tuple[str, ...]

    def to_json(self):
        return {
            "kind": "pb_gap",
            "x": self.x,
            "y": self.y,
            "priority": self.priority,
            "rightmost_gap": self.rightmost_gap,
            "pb_path": list(self.pb_path),
        }


Evidence = FifoEvidence | CycleEvidence | EmptyCycleEvidence | PbGapEvidence


@dataclass(frozen=True)
class Verdict:
    linearizable: bool
    evidence: Evidence | None = None
    projection: tuple[str, ...] | None = None

    def to_json(self):
        return {
            "linearizable": self.linearizable,
            "evidence": None if self.evidence is None else self.evidence.to_json(),
            "projection": None if self.projection is None else sorted(self.projection),
        }


LINEARIZABLE = Verdict(True)


# ---------------------------------------------------------------------------
# Value bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Val:
    value: str
    put: Operation | None
    rms: tuple[Operation, ...]

    @property
    def rm(self) -> Operation | None:
        return self.rms[0] if self.rms else None

    @property
    def priority(self) -> str | None:
        return self.put.priority if self.put else None


def _value_map(e: Execution) -> dict[str, _Val]:
    puts: dict[str, Operation] = {}
    rms: dict[str, list[Operation]] = {}
    for op in e.operations.values():
        if op.empty:
            continue
        if op.method == PUT:
            puts.setdefault(op.value, op)
        else:
            rms.setdefault(op.value, []).append(op)
    out = {}
    for v in set(puts) | set(rms):
        ops = sorted(rms.get(v, []), key=lambda o: o.call_index)
        out[v] = _Val(v, puts.get(v), tuple(ops))
    return out


def _empties(e: Execution) -> list[Operation]:
    out = [op for op in e.operations.values() if op.empty]
    out.sort(key=lambda o: o.call_index)
    return out


def _hb(a: Operation, b: Operation) -> bool:
    return a.return_index < b.call_index


# ---------------------------------------------------------------------------
# Per-priority FIFO patterns (Appendix D.1)
# ---------------------------------------------------------------------------


def fifo_violations(e: Execution) -> list[FifoEvidence]:
    """Every instance of the four single-priority FIFO violation shapes."""
    vals = _value_map(e)
    found = []
    for v, rec in sorted(vals.items()):
        if rec.put is None:
            found.append(FifoEvidence(pattern=2, values=(v,)))
            continue
        if len(rec.rms) > 1:
            found.append(FifoEvidence(pattern=3, values=(v,), priority=rec.priority))
        for r in rec.rms:
            if _hb(r, rec.put):
                found.append(FifoEvidence(pattern=1, values=(v,), priority=rec.priority))
                break
    by_prio: dict[str, list[_Val]] = {}
    for rec in vals.values():
        if rec.put is not None:
            by_prio.setdefault(rec.priority, []).append(rec)
    for p, recs in sorted(by_prio.items()):
        recs.sort(key=lambda r: r.put.call_index)
        for a, b in combinations(recs, 2):
            for first, second in ((a, b), (b, a)):
                if _hb(first.put, second.put) and second.rm is not None:
                    if first.rm is None or _hb(second.rm, first.rm):
                        found.append(
                            FifoEvidence(
                                pattern=4,
                                values=(first.value, second.value),
                                priority=p,
                            )
                        )
    return found


# ---------------------------------------------------------------------------
# Left-right constraint graphs (Def. 5 and the rm(empty) variant)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintGraph:
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str, str]]  # (src, dst, reason tag)

    def successors(self, n: str) -> set[str]:
        return {b for a, b, _ in self.edges if a == n}

    def cycle_through(self, n: str) -> tuple[str, ...] | None:
        """Nodes (n, v1, .., vk) with n -> v1 -> .. -> vk -> n, or None."""
        parent: dict[str, str | None] = {}
        queue: list[str] = []
        for s in sorted(self.successors(n)):
            if s == n:
                return (n,)
            parent.setdefault(s, None)
            queue.append(s)
        while queue:
            cur = queue.pop(0)
            for nxt in sorted(self.successors(cur)):
                if nxt == n:
                    path = [cur]
                    while parent[path[-1]] is not None:
                        path.append(parent[path[-1]])
                    return (n,) + tuple(reversed(path))
                if nxt not in parent:
                    parent[nxt] = cur
                    queue.append(nxt)
        return None


def left_right_constraint(e: Execution, x: str) -> ConstraintGraph:
    """Def. 5 graph for the unique maximal-priority value x.

    Preconditions: e differentiated, no rm(empty), one maximal priority,
    x its only value, x matched.
    """
    vals = _value_map(e)
    if _empties(e):
        raise InputError("left-right constraint is defined without rm(empty)")
    if x not in vals or vals[x].put is None or vals[x].rm is None:
        raise InputError(f"value {x} is not matched in the execution")
    p = vals[x].priority
    used = {rec.priority for rec in vals.values() if rec.put is not None}
    if e.order.maximal(used) != {p}:
        raise InputError(f"priority of {x} is not the unique maximal priority")
    if any(rec.priority == p and v != x for v, rec in vals.items() if rec.put):
        raise InputError(f"{x} is not the only maximal-priority value")
    xput, xrm = vals[x].put, vals[x].rm
    edges = set()
    others = {v: rec for v, rec in vals.items() if v != x}
    for d, rec in others.items():
        if rec.put is not None and (_hb(rec.put, xput) or _hb(rec.put, xrm)):
            edges.add((d, x, "put-before-max"))
        if rec.rm is None:
            edges.add((x, d, "never-removed"))
        elif _hb(xrm, rec.rm):
            edges.add((x, d, "rm-before-rm"))
    for d1, r1 in others.items():
        if r1.put is None:
            continue
        for d2, r2 in others.items():
            if d1 != d2 and r2.rm is not None and _hb(r1.put, r2.rm):
                edges.add((d1, d2, "put-before-rm"))
    return ConstraintGraph(frozenset(vals) | {x}, frozenset(edges))


def check_matched_gt(e: Execution, x: str) -> bool:
    """Lemma 7: linearizable for this case iff no cycle through x."""
    graph = left_right_constraint(e, x)
    return graph.cycle_through(x) is None


def empty_remove_constraint(e: Execution, op_id: str) -> ConstraintGraph:
    """Appendix D.7 graph for the rm(empty) operation op_id."""
    ops = e.operations
    if op_id not in ops or not ops[op_id].empty:
        raise InputError(f"{op_id} is not an rm(empty) of the execution")
    o = ops[op_id]
    node = o.value  # the synthetic value doubles as the graph node
    vals = _value_map(e)
    edges = set()
    for d, rec in vals.items():
        if rec.put is not None and _hb(rec.put, o):
            edges.add((d, node, "put-before-empty"))
        if rec.rm is None:
            edges.add((node, d, "never-removed"))
        elif _hb(o, rec.rm):
            edges.add((node, d, "empty-before-rm"))
    for d1, r1 in vals.items():
        if r1.put is None:
            continue
        for d2, r2 in vals.items():
            if d1 != d2 and r2.rm is not None and _hb(r1.put, r2.rm):
                edges.add((d1, d2, "put-before-rm"))
    return ConstraintGraph(frozenset(vals) | {node}, frozenset(edges))


def check_empty_remove(e: Execution, op_id: str) -> bool:
    """True iff the rm(empty) constraint graph has no cycle through op_id."""
    graph = empty_remove_constraint(e, op_id)
    node = e.operations[op_id].value
    return graph.cycle_through(node) is None


# ---------------------------------------------------------------------------
# Gap points and the put-before order (Def. 6, §4.1.2)
# ---------------------------------------------------------------------------


def gap_points(e: Execution, x: str) -> list[int]:
    """Indices where rm(x) could take effect (Def. 6).

    A smaller-priority value d blocks the half-open index range
    [ret(put,d), call(rm,d)) -- the removal of d may take effect at its
    call, so that slot is not blocked (see the decisions notes on the
    closed-interval reading).
    """
    vals = _value_map(e)
    if x not in vals or vals[x].put is None or vals[x].rm is None:
        raise InputError(f"value {x} lacks a put or rm")
    rec = vals[x]
    p = rec.priority
    lo = max(rec.put.call_index, rec.rm.call_index)
    hi = rec.rm.return_index
    blocked = [False] * len(e.actions)
    for d, drec in vals.items():
        if d == x or drec.put is None or not e.order.lt(drec.priority, p):
            continue
        start = drec.put.return_index
        end = drec.rm.call_index if drec.rm is not None else len(e.actions)
        for i in range(start, end):
            blocked[i] = True
    return [i for i in range(lo, hi) if not blocked[i]]


@dataclass(frozen=True)
class PbEdge:
    src: str
    dst: str
    case: str  # "A" put<hb put | "B" rm<hb rm | "C" rm<hb put


def pb_order(e: Execution) -> tuple[frozenset[PbEdge], set[tuple[str, str]]]:
    """Put-before edges among maximal-priority values, plus their closure."""
    vals = _value_map(e)
    used = {rec.priority for rec in vals.values() if rec.put is not None}
    maxes = e.order.maximal(used)
    if len(maxes) != 1:
        raise InputError("put-before order needs a single maximal priority")
    (p,) = maxes
    mvals = {v: rec for v, rec in vals.items() if rec.put is not None and rec.priority == p}
    edges = set()
    for a, ra in mvals.items():
        for b, rb in mvals.items():
            if a == b:
                continue
            if _hb(ra.put, rb.put):
                edges.add(PbEdge(a, b, "A"))
            if ra.rm is not None and rb.rm is not None and _hb(ra.rm, rb.rm):
                edges.add(PbEdge(a, b, "B"))
            if ra.rm is not None and _hb(ra.rm, rb.put):
                edges.add(PbEdge(a, b, "C"))
    closure = {(ed.src, ed.dst) for ed in edges}
    changed = True
    while changed:
        changed = False
        for a, b in list(closure):
            for b2, c in list(closure):
                if b == b2 and (a, c) not in closure:
                    closure.add((a, c))
                    changed = True
    return frozenset(edges), closure


def _pb_path(edges: frozenset[PbEdge], src: str, dst: str) -> tuple[str, ...]:
    succ: dict[str, set[str]] = {}
    for ed in edges:
        succ.setdefault(ed.src, set()).add(ed.dst)
    parent = {src: None}
    queue = [src]
    while queue:
        cur = queue.pop(0)
        if cur == dst:
            path = [cur]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return tuple(reversed(path))
        for nxt in sorted(succ.get(cur, ())):
            if nxt not in parent:
                parent[nxt] = cur
                queue.append(nxt)
    raise InputError(f"no pb path {src} -> {dst}")


def _matched_eq_violation(e: Execution) -> PbGapEvidence | None:
    """Lemma 8 on a single-maximal-priority execution, or None.

    A pair (y, x) violates when y <pb* x and the rightmost gap-point of x
    is strictly before call(put,y) or call(rm,y). Values without any
    gap-point are fully covered and belong to the Def. 5 cycle check.
    """
    vals = _value_map(e)
    used = {rec.priority for rec in vals.values() if rec.put is not None}
    maxes = e.order.maximal(used)
    if len(maxes) != 1:
        raise InputError("Lemma 8 check needs a single maximal priority")
    (p,) = maxes
    edges, closure = pb_order(e)
    mvals = {
        v: rec
        for v, rec in vals.items()
        if rec.put is not None and rec.priority == p and rec.rm is not None
    }
    for x in sorted(mvals):
        gaps = gap_points(e, x)
        if not gaps:
            continue
        rightmost = gaps[-1]
        for y in sorted(mvals):
            if y == x or (y, x) not in closure:
                continue
            ry = mvals[y]
            if rightmost < ry.put.call_index or rightmost < ry.rm.call_index:
                return PbGapEvidence(
                    x=x,
                    y=y,
                    priority=p,
                    rightmost_gap=rightmost,
                    pb_path=_pb_path(edges, y, x),
                )
    return None


def check_matched_eq(e: Execution) -> bool:
    """Lemma 8 branch value for a >=2-maximal-value projection."""
    return _matched_eq_violation(e) is None


def check_unmatched(e: Execution) -> bool:
    """Appendix D.5/D.6: always linearizable under the preconditions."""
    vals = _value_map(e)
    used = {rec.priority for rec in vals.values() if rec.put is not None}
    maxes = e.order.maximal(used)
    if len(maxes) != 1:
        raise InputError("check_unmatched needs a single maximal priority")
    (p,) = maxes
    if all(rec.rm is not None for rec in vals.values() if rec.priority == p):
        raise InputError("no unmatched put at the maximal priority")
    if fifo_violations(e):
        raise InputError("check_unmatched requires FIFO-clean input")
    return True


# ---------------------------------------------------------------------------
# Non-recursive single-step test and the assembled verdict
# ---------------------------------------------------------------------------


def _unmatched_branch(e: Execution) -> tuple[bool, Evidence | None]:
    # A candidate is an unmatched put x at a maximal priority whose put can
    # be linearized after every other put of that priority: no put(x) <hb
    # put(z) for a same-priority z. Failing that for all candidates always
    # leaves an unmatched-before-matched pair, i.e. a FIFO pattern 4.
    vals = _value_map(e)
    used = {rec.priority for rec in vals.values() if rec.put is not None}
    for p in sorted(e.order.maximal(used)):
        mates = [rec for rec in vals.values() if rec.put is not None and rec.priority == p]
        unmatched = [rec for rec in mates if rec.rm is None]
        if not unmatched:
            continue
        for rec in sorted(unmatched, key=lambda r: r.put.call_index):
            if not any(_hb(rec.put, other.put) for other in mates if other is not rec):
                return True, None
    for p in sorted(e.order.maximal(used)):
        mates = [rec for rec in vals.values() if rec.put is not None and rec.priority == p]
        for x in mates:
            if x.rm is not None:
                continue
            for y in mates:
                if y.rm is not None and _hb(x.put, y.put):
                    return False, FifoEvidence(4, (x.value, y.value), priority=p)
    return False, None


def _matched_branch(e: Execution) -> tuple[bool, Evidence | None]:
    vals = _value_map(e)
    used = {rec.priority for rec in vals.values() if rec.put is not None}
    if not used:
        # only removes of never-put values remain; nothing can host them
        some = sorted(vals)[0]
        return False, FifoEvidence(2, (some,))
    first_bad: Evidence | None = None
    for p in sorted(e.order.maximal(used)):
        keep = {
            v
            for v, rec in vals.items()
            if rec.put is not None and e.order.leq(rec.priority, p)
        }
        ep = project_values(e, keep)
        pvals = [rec for rec in _value_map(ep).values() if rec.priority == p]
        if len(pvals) == 1:
            x = pvals[0].value
            graph = left_right_constraint(ep, x)
            cyc = graph.cycle_through(x)
            if cyc is None:
                return True, None
            if first_bad is None:
                first_bad = CycleEvidence(value=x, cycle=cyc)
        else:
            bad = _matched_eq_violation(ep)
            if bad is None:
                return True, None
            if first_bad is None:
                first_bad = bad
    return False, first_bad


def check_pq_conc_nonrec(e: Execution) -> tuple[bool, Evidence | None]:
    """Single-step branch test: Algorithm 1 with recursive calls as true.

    The branch is selected by the Has-* predicates in order; each branch is
    decided by the corresponding characterization after reduction to a
    single maximal priority.
    """
    if not e.actions:
        return True, None
    empties = _empties(e)
    if empties:
        bad = None
        for o in empties:
            graph = empty_remove_constraint(e, o.op_id)
            cyc = graph.cycle_through(o.value)
            if cyc is None:
                return True, None
            if bad is None:
                bad = EmptyCycleEvidence(op_id=o.op_id, cycle=cyc)
        return False, bad
    vals = _value_map(e)
    used = {rec.priority for rec in vals.values() if rec.put is not None}
    unmatched_max = {
        rec.priority
        for rec in vals.values()
        if rec.put is not None and rec.rm is None
    } & e.order.maximal(used)
    if unmatched_max:
        return _unmatched_branch(e)
    return _matched_branch(e)


def _witness_verdict(e: Execution) -> Verdict:
    fifo = fifo_violations(e)
    if fifo:
        bad = fifo[0]
        return Verdict(False, bad, projection=bad.values)
    vals = _value_map(e)
    for o in _empties(e):
        graph = empty_remove_constraint(e, o.op_id)
        cyc = graph.cycle_through(o.value)
        if cyc is not None:
            return Verdict(False, EmptyCycleEvidence(o.op_id, cyc), projection=cyc)
    matched = sorted(
        (rec for rec in vals.values() if rec.put is not None and rec.rm is not None),
        key=lambda r: r.put.call_index,
    )
    for rec in matched:
        p = rec.priority
        keep = {rec.value} | {
            v
            for v, r2 in vals.items()
            if r2.put is not None and e.order.lt(r2.priority, p)
        }
        sub = project_values(e, keep)
        cyc = left_right_constraint(sub, rec.value).cycle_through(rec.value)
        if cyc is not None:
            return Verdict(False, CycleEvidence(rec.value, cyc), projection=cyc)
    by_prio: dict[str, list[_Val]] = {}
    for rec in vals.values():
        if rec.put is not None and rec.rm is not None:
            by_prio.setdefault(rec.priority, []).append(rec)
    for p in sorted(by_prio):
        group = by_prio[p]
        if len(group) < 2:
            continue
        keep = {rec.value for rec in group} | {
            v
            for v, r2 in vals.items()
            if r2.put is not None and e.order.lt(r2.priority, p)
        }
        ep = project_values(e, keep)
        bad = _matched_eq_violation(ep)
        if bad is not None:
            proj = set(bad.pb_path) | {
                v for v, r2 in _value_map(ep).items() if e.order.lt(r2.priority, p)
            }
            return Verdict(False, bad, projection=tuple(sorted(proj)))
    return LINEARIZABLE


def _exhaustive_verdict(e: Execution, proj_bound: int) -> Verdict:
    from .oracle import BoundExceeded  # local import to avoid a cycle

    fifo = fifo_violations(e)
    if fifo:
        bad = fifo[0]
        return Verdict(False, bad, projection=bad.values)
    values = sorted(e.values())
    if len(values) > proj_bound:
        raise BoundExceeded(
            f"{len(values)} values exceed projection bound {proj_bound}"
        )
    for r in range(len(values) + 1):
        for keep in combinations(values, r):
            sub = project_values(e, keep)
            ok, evidence = check_pq_conc_nonrec(sub)
            if not ok:
                return Verdict(False, evidence, projection=keep)
    return LINEARIZABLE


def check_execution(
    e: Execution, mode: str = "witness", proj_bound: int = PROJ_BOUND
) -> Verdict:
    """Top-level linearizability verdict for a differentiated execution.

    mode "witness" (default) runs the polynomial witness-directed checks;
    "exhaustive" enumerates every value-subset projection through the
    non-recursive single-step test (projection count capped by
    proj_bound). Both modes agree; see the module docstring.
    """
    require_valid(e)
    if not is_data_differentiated(e):
        raise InputError("execution is not data-differentiated")
    if mode == "witness":
        return _witness_verdict(e)
    if mode == "exhaustive":
        return _exhaustive_verdict(e, proj_bound)
    raise ValueError(f"unknown mode {mode!r}")
