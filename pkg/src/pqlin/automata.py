"""Register-automata monitors for priority-queue linearizability violations.

The monitor class: finite control plus one priority register, guessed at
the initial state. Transition labels read call/return actions over a fixed
role alphabet {a, b, a1, d, e, top, empty}; put-call labels carry a guard
(=r, <r, or true) against the register.

Families:

* fifo (A_SinPri 1-4): the four per-priority FIFO violation shapes,
* matched_gt (A_l-lar 1-4): a maximal value covered by a smaller-priority
  chain, one automaton per ordering of the value's four actions,
* matched_eq (A_1-eq): a put-before pair whose gap window is covered; two
  automata for the direct put-put link and three generated sub-families
  (14 + 6 + 6 ordering cases) for the two-step links,
* empty (A3_SeqPQ): an rm(empty) covered by a chain.

The covering machinery is uniform: one chain put must return before the
window opens (arming), ret-put / call-rm of the chain alternate inside the
window (so some chain interval always spans the current slot), and at most
one chain remove is called after the window closes. Acceptance of a
renamed word therefore witnesses an interval cover, and conversely the
greedy chain of any covered instance drives a run; tests pin both
directions against the graph characterizations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from .model import CALL, PUT, RET, RM, Execution, InputError, PriorityOrder, project_values
from .checker import (
    _matched_eq_violation,
    fifo_violations,
    left_right_constraint,
    empty_remove_constraint,
)

ROLES = ("a", "b", "a1", "d", "e", "top", "empty")

GUARD_TRUE = "true"
GUARD_EQ = "=r"
GUARD_LT = "<r"

REG_GUESS = "r=*"


@dataclass(frozen=True)
class Label:
    action: str  # "call_put" | "ret_put" | "call_rm" | "ret_rm"
    role: str
    guard: str = GUARD_TRUE

    def __post_init__(self):
        if self.role not in ROLES:
            raise InputError(f"unknown role {self.role}")
        if self.guard != GUARD_TRUE and self.action != "call_put":
            raise InputError("guards are allowed on put calls only")


def call_put(role: str, guard: str = GUARD_TRUE) -> Label:
    return Label("call_put", role, guard)


def ret_put(role: str) -> Label:
    return Label("ret_put", role)


def call_rm(role: str) -> Label:
    return Label("call_rm", role)


def ret_rm(role: str) -> Label:
    return Label("ret_rm", role)


# base self-loop alphabet: unconstrained values and empty-removes
C_BASE = frozenset(
    {
        call_put("top"),
        ret_put("top"),
        call_rm("top"),
        ret_rm("top"),
        call_rm("empty"),
        ret_rm("empty"),
    }
)


@dataclass(frozen=True)
class RegisterAutomaton:
    name: str
    states: frozenset[str]
    initial: str
    accepting: frozenset[str]
    transitions: frozenset[tuple[str, Label | str, str]]  # label or REG_GUESS
    roles_one: frozenset[str]  # roles bound to exactly one value
    roles_many: frozenset[str]  # roles shared by any number of values
    uses_register: bool
    case: str = ""

    def __post_init__(self):
        for src, label, dst in self.transitions:
            if label == REG_GUESS and src != self.initial:
                raise InputError("register guess must leave the initial state")

    def arrows_from(self, state: str) -> list[tuple[Label, str]]:
        return [(l, d) for s, l, d in self.transitions if s == state and l != REG_GUESS]

    def to_json(self) -> dict:
        trans = sorted(
            (
                src,
                label if isinstance(label, str) else
                {"action": label.action, "role": label.role, "guard": label.guard},
                dst,
            )
            for src, label, dst in self.transitions
        )
        return {
            "name": self.name,
            "case": self.case,
            "initial": self.initial,
            "states": sorted(self.states),
            "accepting": sorted(self.accepting),
            "transitions": trans,
            "roles": {
                "one": sorted(self.roles_one),
                "many": sorted(self.roles_many),
            },
        }


def _label_matches(
    label: Label, action, role: str, register: str | None, order: PriorityOrder
) -> bool:
    kind = ("call_" if action.kind == CALL else "ret_") + action.method
    if label.action != kind or label.role != role:
        return False
    if label.guard == GUARD_TRUE:
        return True
    if register is None or action.priority is None:
        return False
    if label.guard == GUARD_EQ:
        return action.priority == register
    return order.lt(action.priority, register)


def _initial_states(aut: RegisterAutomaton) -> set[str]:
    closure = {aut.initial}
    closure.update(d for s, l, d in aut.transitions if s == aut.initial and l == REG_GUESS)
    return closure


def accepts(aut: RegisterAutomaton, word: Execution, order: PriorityOrder) -> bool:
    """True iff some run over the renamed word ends in an accepting state.

    ``word`` is an execution whose values are role names (empty-flagged
    actions play the ``empty`` role). The register is resolved by
    enumerating the priorities occurring in the word.
    """
    candidates: Iterable[str | None]
    if aut.uses_register:
        candidates = sorted({a.priority for a in word.actions if a.priority is not None})
    else:
        candidates = [None]
    for reg in candidates:
        states = _initial_states(aut)
        for action in word.actions:
            role = "empty" if action.empty else action.value
            states = {
                dst
                for st in states
                for label, dst in aut.arrows_from(st)
                if _label_matches(label, action, role, reg, order)
            }
            if not states:
                break
        if states & aut.accepting:
            return True
    return False


# ---------------------------------------------------------------------------
# Covering-window compiler
# ---------------------------------------------------------------------------


@dataclass
class CoverSpec:
    """One monitor: explicit events around a covered window.

    events: one-shot labels in order; cover_start/cover_end index into it.
    The chain role's put-calls loop until the window closes, its put-returns
    drive arming/spare transitions, its rm-calls consume spares inside the
    window, and one tail rm-call may follow the window (before event
    ``tail_before`` when set). Labels in ``loose`` become self-loops once
    their event index is consumed.
    """

    name: str
    events: list[Label]
    cover_start: int
    cover_end: int
    chain_role: str
    chain_guard: str = GUARD_TRUE
    tail_before: int | None = None
    loose: list[tuple[int, Label]] = field(default_factory=list)
    uses_register: bool = True
    roles_one: frozenset[str] = frozenset()
    case: str = ""


def compile_cover_monitor(spec: CoverSpec) -> RegisterAutomaton:
    ev = spec.events
    start_k, end_k = spec.cover_start, spec.cover_end
    n = len(ev)
    chain_put = call_put(spec.chain_role, spec.chain_guard)
    chain_ret_put = ret_put(spec.chain_role)
    chain_call_rm = call_rm(spec.chain_role)
    chain_ret_rm = ret_rm(spec.chain_role)

    def pre(k, armed):
        return f"p{k}{'A' if armed else 'U'}"

    def win(k, spare):
        return f"w{k}{'S' if spare else 'N'}"

    def post(k, tail):
        return f"q{k}{'T' if tail else 'N'}"

    states: set[str] = set()
    trans: set[tuple[str, Label | str, str]] = set()

    def state_at(k, armed=False, spare=False, tail=False) -> str:
        if k <= start_k:
            return pre(k, armed)
        if k <= end_k:
            return win(k, spare)
        return post(k, tail)

    def loops_for(k) -> set[Label]:
        loops = set(C_BASE)
        if k <= end_k:
            loops.add(chain_put)
        if k > start_k:
            loops.add(chain_ret_rm)
        for idx, label in spec.loose:
            if k > idx:
                loops.add(label)
        return loops

    # pre-window region
    for k in range(start_k + 1):
        for armed in (False, True):
            st = pre(k, armed)
            states.add(st)
            for lab in loops_for(k):
                trans.add((st, lab, st))
        trans.add((pre(k, False), chain_ret_put, pre(k, True)))
        if k < start_k:
            for armed in (False, True):
                trans.add((pre(k, armed), ev[k], pre(k + 1, armed)))
    trans.add((pre(start_k, True), ev[start_k], state_at(start_k + 1)))

    # window region
    for k in range(start_k + 1, end_k + 1):
        for spare in (False, True):
            st = win(k, spare)
            states.add(st)
            for lab in loops_for(k):
                trans.add((st, lab, st))
        trans.add((win(k, False), chain_ret_put, win(k, True)))
        trans.add((win(k, True), chain_call_rm, win(k, False)))
        if k < end_k:
            for spare in (False, True):
                trans.add((win(k, spare), ev[k], win(k + 1, spare)))
    trans.add((win(end_k, False), ev[end_k], state_at(end_k + 1)))

    # post-window region
    tail_limit = spec.tail_before if spec.tail_before is not None else n
    for k in range(end_k + 1, n + 1):
        for tail in (False, True):
            st = post(k, tail)
            states.add(st)
            for lab in loops_for(k):
                trans.add((st, lab, st))
        if k <= tail_limit:
            trans.add((post(k, False), chain_call_rm, post(k, True)))
        if k < n:
            for tail in (False, True):
                trans.add((post(k, tail), ev[k], post(k + 1, tail)))

    initial = pre(0, False)
    if spec.uses_register:
        guess_entry = "init"
        states.add(guess_entry)
        trans.add((guess_entry, REG_GUESS, initial))
        start_state = guess_entry
    else:
        start_state = initial
    accepting = {post(n, False), post(n, True)}
    return RegisterAutomaton(
        name=spec.name,
        states=frozenset(states),
        initial=start_state,
        accepting=frozenset(accepting),
        transitions=frozenset(trans),
        roles_one=spec.roles_one,
        roles_many=frozenset({spec.chain_role, "top"}),
        uses_register=spec.uses_register,
        case=spec.case,
    )


# ---------------------------------------------------------------------------
# FIFO monitors (A_SinPri 1-4)
# ---------------------------------------------------------------------------


def _chain_automaton(
    name: str,
    phases: list[set[Label]],
    events: list[Label],
    roles_one: frozenset[str],
    roles_many: frozenset[str],
    uses_register: bool,
    case: str,
) -> RegisterAutomaton:
    """Linear automaton: phase loops separated by one-shot events."""
    assert len(phases) == len(events) + 1
    states = {f"s{k}" for k in range(len(phases))}
    trans: set[tuple[str, Label | str, str]] = set()
    for k, loops in enumerate(phases):
        for lab in loops:
            trans.add((f"s{k}", lab, f"s{k}"))
    for k, evt in enumerate(events):
        trans.add((f"s{k}", evt, f"s{k+1}"))
    initial = "s0"
    if uses_register:
        states.add("init")
        trans.add(("init", REG_GUESS, "s0"))
        initial = "init"
    return RegisterAutomaton(
        name=name,
        states=frozenset(states),
        initial=initial,
        accepting=frozenset({f"s{len(events)}"}),
        transitions=frozenset(trans),
        roles_one=roles_one,
        roles_many=roles_many,
        uses_register=uses_register,
        case=case,
    )


def build_fifo() -> dict[str, RegisterAutomaton]:
    """The four FIFO-per-priority monitors of Appendix D.1."""
    filler = {
        call_put("a"),
        ret_put("a"),
        call_rm("a"),
        ret_rm("a"),
        call_rm("empty"),
        ret_rm("empty"),
    }
    c1 = filler | {call_rm("b")}
    c2 = c1 | {ret_rm("b")}
    c3 = c2 | {ret_put("b")}
    sinpri1 = _chain_automaton(
        "sinpri1",
        [c1, c2, c3],
        [ret_rm("b"), call_put("b")],
        roles_one=frozenset({"b"}),
        roles_many=frozenset({"a"}),
        uses_register=False,
        case="rm(b) returns before put(b) is called",
    )
    sinpri2 = _chain_automaton(
        "sinpri2",
        [filler, filler | {call_rm("b"), ret_rm("b")}],
        [call_rm("b")],
        roles_one=frozenset({"b"}),
        roles_many=frozenset({"a"}),
        uses_register=False,
        case="rm(b) with no put(b) anywhere",
    )
    with_put = filler | {call_put("b"), ret_put("b"), call_rm("b")}
    sinpri3 = _chain_automaton(
        "sinpri3",
        [with_put, with_put, with_put | {ret_rm("b")}],
        [ret_rm("b"), ret_rm("b")],
        roles_one=frozenset({"b"}),
        roles_many=frozenset({"a"}),
        uses_register=False,
        case="two removes return value b",
    )
    c = {
        call_put("d"),
        ret_put("d"),
        call_rm("d"),
        ret_rm("d"),
        call_rm("empty"),
        ret_rm("empty"),
    }
    c1 = c | {call_rm("b"), ret_put("b")}
    c2 = c | {ret_put("b"), call_rm("a"), ret_rm("a")}
    sinpri4 = _chain_automaton(
        "sinpri4",
        [c, c, c, c1, c2],
        [call_put("a", GUARD_EQ), ret_put("a"), call_put("b", GUARD_EQ), ret_rm("b")],
        roles_one=frozenset({"a", "b"}),
        roles_many=frozenset({"d"}),
        uses_register=True,
        case="put(a) hb put(b) at one priority, rm(b) returns with rm(a) absent or later",
    )
    return {a.name: a for a in (sinpri1, sinpri2, sinpri3, sinpri4)}


# ---------------------------------------------------------------------------
# MatchedMaxPriority^> monitors (A_l-lar 1-4)
# ---------------------------------------------------------------------------

_B_ORDERS = {
    1: ("cp", "rp", "cr", "rr"),
    2: ("cp", "cr", "rp", "rr"),
    3: ("cr", "cp", "rp", "rr"),
    4: ("cr", "cp", "rr", "rp"),
}

_B_LABEL = {
    "cp": call_put("b", GUARD_EQ),
    "rp": ret_put("b"),
    "cr": call_rm("b"),
    "rr": ret_rm("b"),
}


def build_matched_gt() -> dict[str, RegisterAutomaton]:
    """One covered-value monitor per ordering of the b actions."""
    out = {}
    for idx, b_order in _B_ORDERS.items():
        events = [_B_LABEL[tag] for tag in b_order]
        # window opens at the later of call(put,b) / call(rm,b)
        start = max(b_order.index("cp"), b_order.index("cr"))
        end = b_order.index("rr")
        spec = CoverSpec(
            name=f"l_lar{idx}",
            events=events,
            cover_start=start,
            cover_end=end,
            chain_role="a",
            chain_guard=GUARD_LT,
            tail_before=None,
            roles_one=frozenset({"b"}),
            case="b actions ordered " + "<".join(b_order),
        )
        out[spec.name] = compile_cover_monitor(spec)
    return out


# ---------------------------------------------------------------------------
# MatchedMaxPriority^= monitors (A_1-eq families)
# ---------------------------------------------------------------------------


def _eq_direct(idx: int, b_first: str) -> CoverSpec:
    # a <pb^A b with cp_b/cr_b in either order; cover call(rm,a)..ret(rm,b),
    # one chain rm before ret(rm,a); ret(put,b) position is irrelevant.
    events = [call_put("a", GUARD_EQ), ret_put("a")]
    if b_first == "put":
        events += [call_put("b", GUARD_EQ), call_rm("b")]
        cp_b_idx = 2
    else:
        events += [call_rm("b"), call_put("b", GUARD_EQ)]
        cp_b_idx = 3
    events += [call_rm("a"), ret_rm("b"), ret_rm("a")]
    return CoverSpec(
        name=f"eq{idx}",
        events=events,
        cover_start=5,
        cover_end=6,
        chain_role="d",
        chain_guard=GUARD_LT,
        tail_before=7,
        loose=[(cp_b_idx, ret_put("b"))],
        roles_one=frozenset({"a", "b"}),
        case=f"a <pbA b, {'put' if b_first == 'put' else 'rm'}(b) called first",
    )


def _eq_chain_specs(enum: int) -> list[CoverSpec]:
    """Sub-family for a <pbA a1 <pbB b (enums 3-5 differ in cr_a1 position).

    Anchors carry every action of a, a1, b except the three ignorable
    returns and the two put calls, whose placements generate the cases
    (14 for enum 3, 6 each for enums 4 and 5, following the D.4 listing).
    """
    if enum == 3:
        anchors = ["cr_a1", "rp_a", "cp_a1", "rr_a1", "cr_b", "cr_a", "rr_b", "rr_a"]
    elif enum == 4:
        anchors = ["rp_a", "cr_a1", "cp_a1", "rr_a1", "cr_b", "cr_a", "rr_b", "rr_a"]
    else:
        anchors = ["rp_a", "cp_a1", "cr_a1", "rr_a1", "cr_b", "cr_a", "rr_b", "rr_a"]
    rp_a_pos = anchors.index("rp_a")
    cr_a_pos = anchors.index("cr_a")
    # region r means "insert before anchors[r]"; the put call of a must
    # precede its return, the put call of b must precede the rm(a) call
    specs = []
    for cp_b_r in range(cr_a_pos, -1, -1):
        for cp_a_r in range(rp_a_pos + 1):
            specs.extend(_eq_chain_expand(enum, anchors, cp_a_r, cp_b_r))
    return specs


_EQ_LABEL = {
    "cp_a": call_put("a", GUARD_EQ),
    "rp_a": ret_put("a"),
    "cr_a": call_rm("a"),
    "rr_a": ret_rm("a"),
    "cp_a1": call_put("a1", GUARD_EQ),
    "cr_a1": call_rm("a1"),
    "rr_a1": ret_rm("a1"),
    "cp_b": call_put("b", GUARD_EQ),
    "cr_b": call_rm("b"),
    "rr_b": ret_rm("b"),
}


def _eq_chain_expand(enum, anchors, cp_a_r, cp_b_r) -> list[CoverSpec]:
    orders: list[list[str]]
    if cp_a_r == cp_b_r:
        orders = [["cp_a", "cp_b"], ["cp_b", "cp_a"]]
    else:
        orders = [[]]
    out = []
    for extra in orders:
        names = []
        for r, anchor in enumerate(anchors):
            if cp_a_r == r and cp_b_r == r:
                names.extend(extra)
            elif cp_a_r == r:
                names.append("cp_a")
            elif cp_b_r == r:
                names.append("cp_b")
            names.append(anchor)
        events = [_EQ_LABEL[nm] for nm in names]
        start = names.index("cr_a")
        end = names.index("rr_b")
        tail_before = names.index("rr_a")
        loose = [
            (names.index("cp_a1"), ret_put("a1")),
            (names.index("cp_b"), ret_put("b")),
        ]
        case = f"enum{enum}:" + "<".join(names)
        out.append(
            CoverSpec(
                name=f"eq{enum}_" + "_".join(
                    f"{nm}{r}" for nm, r in (("a", cp_a_r), ("b", cp_b_r))
                )
                + (f"_{extra[0]}" if len(extra) == 2 else ""),
                events=events,
                cover_start=start,
                cover_end=end,
                chain_role="d",
                chain_guard=GUARD_LT,
                tail_before=tail_before,
                loose=loose,
                roles_one=frozenset({"a", "b", "a1"}),
                case=case,
            )
        )
    return out


def build_matched_eq() -> dict[str, RegisterAutomaton]:
    out = {}
    for spec in (_eq_direct(1, "put"), _eq_direct(2, "rm")):
        out[spec.name] = compile_cover_monitor(spec)
    for enum in (3, 4, 5):
        for spec in _eq_chain_specs(enum):
            out[spec.name] = compile_cover_monitor(spec)
    return out


# ---------------------------------------------------------------------------
# EmptyRemove monitor (A3_SeqPQ)
# ---------------------------------------------------------------------------


def build_empty() -> dict[str, RegisterAutomaton]:
    spec = CoverSpec(
        name="empty3",
        events=[call_rm("empty"), ret_rm("empty")],
        cover_start=0,
        cover_end=1,
        chain_role="b",
        chain_guard=GUARD_TRUE,
        tail_before=None,
        uses_register=False,
        roles_one=frozenset(),
        case="rm(empty) covered by a chain of stored values",
    )
    return {spec.name: compile_cover_monitor(spec)}


def build_all() -> dict[str, RegisterAutomaton]:
    out: dict[str, RegisterAutomaton] = {}
    out.update(build_fifo())
    out.update(build_matched_gt())
    out.update(build_matched_eq())
    out.update(build_empty())
    return out


# ---------------------------------------------------------------------------
# Role-assignment product search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonitorHit:
    monitor: str
    assignment: dict[str, str]
    register: str | None

    def to_json(self):
        return {
            "monitor": self.monitor,
            "assignment": dict(sorted(self.assignment.items())),
            "register": self.register,
        }


def _family(name: str) -> str:
    if name.startswith("sinpri"):
        return "fifo"
    if name.startswith("l_lar"):
        return "matched_gt"
    if name.startswith("eq"):
        return "matched_eq"
    return "empty"


def _search(aut: RegisterAutomaton, e: Execution, reg: str | None):
    """Role assignments under which the automaton accepts e; yields dicts."""
    assignable = sorted(aut.roles_one) + sorted(aut.roles_many - {"empty"})
    frontier: dict[tuple[str, tuple], None] = {
        (st, ()): None for st in _initial_states(aut)
    }
    for action in e.actions:
        nxt: dict[tuple[str, tuple], None] = {}
        for st, asg_items in frontier:
            asg = dict(asg_items)
            if action.empty:
                roles = ["empty"]
            elif action.value in asg:
                roles = [asg[action.value]]
            else:
                taken = set(asg.values())
                roles = [
                    r
                    for r in assignable
                    if not (r in aut.roles_one and r in taken)
                ]
            for role in roles:
                asg2 = asg if action.empty or action.value in asg else {
                    **asg,
                    action.value: role,
                }
                for label, dst in aut.arrows_from(st):
                    if _label_matches(label, action, role, reg, e.order):
                        nxt[(dst, tuple(sorted(asg2.items())))] = None
        frontier = nxt
        if not frontier:
            return
    for st, asg_items in frontier:
        if st in aut.accepting:
            yield dict(asg_items)


def _verify_hit(e: Execution, aut: RegisterAutomaton, asg: dict[str, str]) -> bool:
    """Re-check an accepted renaming against the graph characterizations."""
    fam = _family(aut.name)
    by_role: dict[str, set[str]] = {}
    for value, role in asg.items():
        by_role.setdefault(role, set()).add(value)
    try:
        if fam == "fifo":
            keep = by_role.get("a", set()) | by_role.get("b", set())
            return bool(fifo_violations(project_values(e, keep)))
        if fam == "matched_gt":
            (x,) = by_role["b"]
            sub = project_values(e, by_role.get("a", set()) | {x})
            return left_right_constraint(sub, x).cycle_through(x) is not None
        if fam == "matched_eq":
            keep = set()
            for r in ("a", "b", "a1", "d"):
                keep |= by_role.get(r, set())
            return _matched_eq_violation(project_values(e, keep)) is not None
        # empty family: some covered rm(empty) among the chain values
        chain = by_role.get("b", set())
        sub = project_values(e, chain | {v for v in e.values() if v.startswith("$empty:")})
        for op in sub.operations.values():
            if op.empty and empty_remove_constraint(sub, op.op_id).cycle_through(op.value):
                return True
        return False
    except (InputError, KeyError, ValueError):
        return False


_FAMILY_ORDER = ("fifo", "matched_gt", "matched_eq", "empty")


def monitor_hit(
    e: Execution,
    monitors: dict[str, RegisterAutomaton] | None = None,
) -> MonitorHit | None:
    """First verified monitor acceptance over role assignments and registers.

    Roles are assigned to values nondeterministically at first occurrence
    and tracked in the product state; the register ranges over the
    priorities occurring in the execution. Raw acceptances are re-validated
    against the graph characterizations before being reported (nested
    rm(empty) windows can satisfy the label sequence without any single
    operation being covered).
    """
    if monitors is None:
        monitors = build_all()
    grouped: dict[str, list[RegisterAutomaton]] = {}
    for aut in monitors.values():
        grouped.setdefault(_family(aut.name), []).append(aut)
    for fam in _FAMILY_ORDER:
        for aut in sorted(grouped.get(fam, []), key=lambda a: a.name):
            regs: list[str | None]
            if aut.uses_register:
                regs = sorted(e.priorities_used())
            else:
                regs = [None]
            for reg in regs:
                for asg in _search(aut, e, reg):
                    if _verify_hit(e, aut, asg):
                        return MonitorHit(aut.name, asg, reg)
    return None
