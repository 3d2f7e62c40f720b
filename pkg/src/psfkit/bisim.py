"""Equivalence checking on labeled transition systems.

Strong bisimulation is decided by signature-based partition refinement over
the disjoint union of the two systems, with successful termination as an
observable predicate.  Weak equivalence saturates first (tau*.a.tau* plus
reflexive tau closure) and then runs the strong algorithm; the rooted
variant adds the root condition of observational congruence: an initial tau
move must be answered by at least one real tau.

A negative verdict carries a distinguishing experiment extracted from the
refinement history; replaying it ends with one side unable to match.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .semantics import Lts
from .terms import PsfError, Tau


class BisimInputError(PsfError):
    pass


@dataclass
class WitnessNode:
    """One spoiler move; every possible response is refuted by a sub-witness.

    An empty response list means the other side has no matching move at all.
    State ids refer to the disjoint union the checker worked on (A first,
    then B shifted by A's state count).
    """

    side: str  # "left" | "right"
    label: str
    target: int = -1
    responses: list[tuple[int, "WitnessNode"]] = field(default_factory=list)
    kind: str = "move"  # "move" | "termination" | "root-tau"

    def principal_path(self) -> list[str]:
        out = [f"{self.side}: {self.label}"]
        if self.responses:
            out.extend(self.responses[0][1].principal_path())
        else:
            other = "right" if self.side == "left" else "left"
            if self.kind == "termination":
                out.append(f"{other}: cannot terminate")
            elif self.kind == "root-tau":
                out.append(f"{other}: cannot answer with a real tau")
            else:
                out.append(f"{other}: cannot match")
        return out

    def script(self) -> str:
        return "\n".join(self.principal_path())


@dataclass
class BisimResult:
    equivalent: bool
    witness: Optional[WitnessNode] = None

    def __bool__(self) -> bool:
        return self.equivalent


# ---------------------------------------------------------------------------
# partition refinement


class _Union:
    """Disjoint union of two LTSs with per-state successor tables."""

    def __init__(self, a: Lts, b: Lts):
        self.offset = a.num_states
        self.n = a.num_states + b.num_states
        self.succ: list[dict[str, set[int]]] = [dict() for _ in range(self.n)]
        self.terminating: set[int] = set(a.terminating) | {self.offset + s for s in b.terminating}
        for f, l, t in a.transitions:
            self.succ[f].setdefault(str(l), set()).add(t)
        for f, l, t in b.transitions:
            self.succ[self.offset + f].setdefault(str(l), set()).add(self.offset + t)
        self.init_a = a.initial
        self.init_b = self.offset + b.initial


def _refine(u: _Union) -> tuple[list[int], list[list[int]]]:
    """Partition refinement; returns final block ids and the per-round history."""
    block = [1 if s in u.terminating else 0 for s in range(u.n)]
    history = [list(block)]
    while True:
        signatures: dict[tuple, int] = {}
        new_block = [0] * u.n
        for s in range(u.n):
            sig = (
                block[s],
                frozenset((label, block[t]) for label, ts in u.succ[s].items() for t in ts),
            )
            if sig not in signatures:
                signatures[sig] = len(signatures)
            new_block[s] = signatures[sig]
        if new_block == block:
            return block, history
        block = new_block
        history.append(list(block))


def _check_not_truncated(*ltss: Lts) -> None:
    for l in ltss:
        if l.truncated:
            raise BisimInputError("refusing to compare a truncated LTS; raise max-states")


# ---------------------------------------------------------------------------
# witnesses


def _split_stage(history: list[list[int]], p: int, q: int) -> int:
    for i, blocks in enumerate(history):
        if blocks[p] != blocks[q]:
            return i
    return len(history)


def _distinguish(u: _Union, history: list[list[int]], p: int, q: int, p_is_left: bool) -> WitnessNode:
    """Build a distinguishing experiment for states known inequivalent."""
    stage = _split_stage(history, p, q)
    if stage == 0:
        # separated by the termination predicate
        term = p in u.terminating
        side = ("left" if p_is_left else "right") if term else ("right" if p_is_left else "left")
        return WitnessNode(side=side, label="<terminate>", kind="termination")
    prev = history[stage - 1]
    # find a move of p (or q) into a prev-block the other cannot reach
    for mover, other, mover_left in ((p, q, p_is_left), (q, p, not p_is_left)):
        for label, targets in sorted(u.succ[mover].items()):
            for t in sorted(targets):
                responses = sorted(u.succ[other].get(label, ()))
                if all(prev[r] != prev[t] for r in responses):
                    side = "left" if mover_left else "right"
                    subs = [(r, _distinguish(u, history, t, r, mover_left)) for r in responses]
                    return WitnessNode(side=side, label=label, target=t, responses=subs)
    raise AssertionError("states reported inequivalent but no splitter found")


def replay_witness(u: _Union, w: WitnessNode, p: int, q: int) -> bool:
    """Check the experiment: every response chain ends with a failed match."""
    if w.kind == "termination":
        return (p in u.terminating) != (q in u.terminating)
    mover, other = (p, q) if w.side == "left" else (q, p)
    if w.target not in u.succ[mover].get(w.label, set()):
        return False
    responses = sorted(u.succ[other].get(w.label, ()))
    recorded = {r: sub for r, sub in w.responses}
    for r in responses:
        sub = recorded.get(r)
        if sub is None:
            return False  # an unrefuted response exists
        if w.side == "left":
            ok = replay_witness(u, sub, w.target, r)
        else:
            ok = replay_witness(u, sub, r, w.target)
        if not ok:
            return False
    return True


# ---------------------------------------------------------------------------
# public checkers


def strong_bisim(a: Lts, b: Lts) -> BisimResult:
    """Step-for-step matching equivalence; symmetric in its arguments."""
    _check_not_truncated(a, b)
    u = _Union(a, b)
    block, history = _refine(u)
    if block[u.init_a] == block[u.init_b]:
        return BisimResult(True)
    return BisimResult(False, _distinguish(u, history, u.init_a, u.init_b, True))


def tau_saturate(a: Lts) -> Lts:
    """Weak-transition closure: tau*.a.tau* steps plus reflexive tau steps.

    The state set is unchanged; termination spreads backwards over tau.
    """
    n = a.num_states
    tau_succ: list[set[int]] = [set() for _ in range(n)]
    labeled: dict[str, list[tuple[int, int]]] = {}
    label_obj: dict[str, object] = {}
    for f, l, t in a.transitions:
        if l is Tau or str(l) == "tau":
            tau_succ[f].add(t)
        else:
            labeled.setdefault(str(l), []).append((f, t))
            label_obj[str(l)] = l
    closure = _reflexive_transitive(tau_succ, n)
    new_edges: set[tuple[int, str, int]] = set()
    for s in range(n):
        for t in closure[s]:
            new_edges.add((s, "tau", t))
    for lstr, pairs in labeled.items():
        for f, t in pairs:
            for pre in range(n):
                if f in closure[pre]:
                    for post in closure[t]:
                        new_edges.add((pre, lstr, post))
    terminating = {s for s in range(n) if closure[s] & a.terminating}
    transitions = []
    for f, lstr, t in sorted(new_edges, key=lambda e: (e[0], e[1], e[2])):
        transitions.append((f, label_obj.get(lstr, Tau), t))
    return Lts(list(a.states), transitions, a.initial, terminating, a.truncated)


def _reflexive_transitive(succ: list[set[int]], n: int) -> list[set[int]]:
    closure = [set(s) | {i} for i, s in enumerate(succ)]
    changed = True
    while changed:
        changed = False
        for i in range(n):
            extra = set()
            for j in closure[i]:
                extra |= closure[j]
            if not extra <= closure[i]:
                closure[i] |= extra
                changed = True
    return closure


def weak_bisim(a: Lts, b: Lts) -> BisimResult:
    _check_not_truncated(a, b)
    return strong_bisim(tau_saturate(a), tau_saturate(b))


def rooted_weak_bisim(a: Lts, b: Lts) -> BisimResult:
    """Observational congruence: weak bisimulation plus the root condition."""
    _check_not_truncated(a, b)
    sa, sb = tau_saturate(a), tau_saturate(b)
    u = _Union(sa, sb)
    block, history = _refine(u)
    if block[u.init_a] != block[u.init_b]:
        return BisimResult(False, _distinguish(u, history, u.init_a, u.init_b, True))

    # root condition, using original first moves answered by weak moves that
    # contain at least one real transition
    def root_violation(orig: Lts, orig_other: Lts, sat_other: Lts, left: bool) -> Optional[WitnessNode]:
        off_self = 0 if left else u.offset
        off_other = u.offset if left else 0
        other_tau_plus = _tau_plus(orig_other, sat_other)
        for f, l, t in orig.transitions:
            if f != orig.initial:
                continue
            lstr = str(l)
            if lstr == "tau":
                answers = other_tau_plus
            else:
                answers = {
                    tt for ff, ll, tt in (sat_other.transitions) if ff == sat_other.initial and str(ll) == lstr
                }
            if not any(block[a_ + off_other] == block[t + off_self] for a_ in answers):
                side = "left" if left else "right"
                return WitnessNode(side=side, label=lstr, kind="root-tau" if lstr == "tau" else "move")
        return None

    w = root_violation(a, b, sb, True)
    if w is None:
        w = root_violation(b, a, sa, False)
    if w is None:
        return BisimResult(True)
    return BisimResult(False, w)


def _tau_plus(orig: Lts, saturated: Lts) -> set[int]:
    """States reachable from the initial state by at least one tau."""
    out: set[int] = set()
    sat_tau = {}
    for f, l, t in saturated.transitions:
        if str(l) == "tau":
            sat_tau.setdefault(f, set()).add(t)
    for f, l, t in orig.transitions:
        if f == orig.initial and str(l) == "tau":
            out.add(t)
            out |= sat_tau.get(t, set())
    return out


def minimize(a: Lts, kind: str = "strong") -> Lts:
    """Quotient by bisimilarity classes; `kind` is "strong" or "weak"."""
    _check_not_truncated(a)
    if kind not in ("strong", "weak"):
        raise ValueError(f"unknown minimization kind {kind!r}")
    base = a if kind == "strong" else tau_saturate(a)
    empty = Lts([], [], 0, set(), False)
    u = _Union(base, empty)
    block, _ = _refine(u)
    reps: dict[int, int] = {}
    order: list[int] = []
    for s in range(base.num_states):
        if block[s] not in reps:
            reps[block[s]] = len(order)
            order.append(s)
    states = [base.states[s] for s in order]
    new_id = {s: reps[block[s]] for s in range(base.num_states)}
    seen = set()
    transitions = []
    for f, l, t in base.transitions:
        if kind == "weak" and str(l) == "tau" and new_id[f] == new_id[t]:
            continue  # reflexive tau introduced by saturation
        edge = (new_id[f], str(l), new_id[t])
        if edge not in seen:
            seen.add(edge)
            transitions.append((new_id[f], l, new_id[t]))
    terminating = {new_id[s] for s in base.terminating}
    return Lts(states, transitions, new_id[base.initial], terminating, a.truncated)


def make_union(a: Lts, b: Lts) -> _Union:
    return _Union(a, b)


def replay(a: Lts, b: Lts, witness: WitnessNode, kind: str = "strong") -> bool:
    """Replay a witness against the pair it was produced for."""
    if kind in ("weak", "rweak"):
        a, b = tau_saturate(a), tau_saturate(b)
    u = _Union(a, b)
    if witness.kind == "root-tau":
        # the recorded side has an initial tau the other cannot answer with tau+
        orig = a if witness.side == "left" else b
        return any(f == orig.initial and str(l) == "tau" for f, l, _ in orig.transitions)
    return replay_witness(u, witness, u.init_a, u.init_b)
