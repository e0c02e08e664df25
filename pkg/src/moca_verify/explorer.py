"""State-space exploration over program threads and shadow-threads.

``explore`` runs a non-chronological depth-first search with source sets and
sleep sets.  Schedulable units are the program threads plus one shadow-thread
per (thread, object); because one unit steps at a time, the reduction
algorithm applies unchanged.  Two events conflict when they are

* two shared-store updates (shadow-writes or atomic rmws) of one object,
* a shared-store update and a foreign thread's read of the same object,
* two same-object write issues (their program order decides
  release-sequence membership), or
* two placed sc events of different threads (their relative order feeds
  the sc total order).

When an executed event races with an earlier conflicting event not already
ordered by the causal relation, an alternative starting unit is inserted
into the backtrack set of the state before the earlier event; sleep sets
suppress re-exploring commuting choices.  The incremental coherence filter
interacts with both mechanisms: pruned candidates still feed race detection,
insertions must land on units schedulable at the target node, and a violated
ordering rule proposes the flush unit it names as a direct repair.

Every maximal surviving sequence is recorded, keyed by a canonical trace id
(a stable hash of the executed events, the reads-from edges, the per-object
store orders, and the happens-before edges; sequences interleaving only
independent events agree on all of these).  ``enumerate_all`` is the
brute-force oracle: it walks every coherent interleaving without any
reduction and must produce the same trace-id set.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

from .ir import (
    Act,
    Event,
    MO,
    Program,
    QualifiedRef,
    SharedRef,
    UndefinedName,
    eval_expr,
    shadow_unit,
)
from .engine import ExecState, Sequence, initial_state
from .relations import RelationSet, compute_relations
from .coherence import check_moca, check_c11_oracle, check_step
from .transform import early_write_transform


class ExplorationBudgetExceeded(Exception):
    pass


class EnumerationCapExceeded(Exception):
    def __init__(self, estimate: int, cap: int):
        self.estimate = estimate
        self.cap = cap
        super().__init__(f"program has ~{estimate} schedulable events, cap is {cap}")


# ---------------------------------------------------------------------------
# Conflicts
# ---------------------------------------------------------------------------

def _is_store_update(e: Event) -> bool:
    return e.act in (Act.SHADOW, Act.RMW)


def _is_sc_placement(e: Event) -> bool:
    return e.ord is MO.SC and e.act in (Act.READ, Act.FENCE, Act.RMW, Act.SHADOW)


def _parent_thread(e: Event) -> str:
    """Program thread an event acts for (shadow-writes act for their
    originating write's thread)."""
    if e.act is Act.SHADOW:
        return e.thr[e.thr.index("(") + 1:-1]
    return e.thr


def conflicts(a: Event, b: Event) -> bool:
    """Order-sensitive event pairs for the reduction.

    A thread's own flush commutes with its own reads of that object: the
    deterministic rf resolution prefers the thread's latest write either way.
    Same-object write issues conflict because their program order decides
    release-sequence membership (a foreign release-class store continues the
    sequence), which feeds dependency-ordered-before and the coherence rules.
    """
    if a.thr == b.thr:
        return False
    if _is_store_update(a) and _is_store_update(b) and (a.objects & b.objects):
        return True
    if (a.is_write_like and b.is_write_like
            and a.obj_written == b.obj_written):
        return True
    for upd, other in ((a, b), (b, a)):
        if (_is_store_update(upd) and other.is_read_like
                and upd.obj_written == other.obj_read
                and _parent_thread(upd) != _parent_thread(other)):
            return True
    if (_is_sc_placement(a) and _is_sc_placement(b)
            and _parent_thread(a) != _parent_thread(b)):
        return True
    return False


# ---------------------------------------------------------------------------
# Trace identity
# ---------------------------------------------------------------------------

def _event_name(e: Event) -> str:
    return f"{e.thr}#{e.idx}:{e.act.value}:{','.join(e.obj)}:{e.ord.value}"


def canonical_trace_id(seq: Sequence, rels: RelationSet) -> str:
    """Stable id of the equivalence class of ``seq``.

    Hashes the executed events, the reads-from edges, the per-object store
    order, and the happens-before edge set: sequences interleaving only
    independent events agree on all four, while differing rf, store order,
    or synchronization structure changes the id.
    """
    events = sorted(_event_name(e) for e in seq.events)
    rf = sorted(f"{_event_name(w)}->{_event_name(r)}" for r, w in seq.rf.items())
    mo: dict[str, list[str]] = {}
    for e in seq.events:
        if e.act is Act.SHADOW:
            mo.setdefault(e.obj[0], []).append(_event_name(seq.origin_of[e]))
        elif e.act is Act.RMW:
            mo.setdefault(e.obj_written, []).append(_event_name(e))
    hb = sorted(f"{_event_name(a)}->{_event_name(b)}" for a, b in rels.hb_pairs())
    payload = json.dumps({"events": events, "rf": rf, "mo": mo, "hb": hb},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Race and assertion reporting
# ---------------------------------------------------------------------------

def detect_na_races(seq: Sequence, rels: RelationSet) -> list[tuple[Event, Event]]:
    """Pairs of non-atomic same-object accesses from different program
    threads, at least one a write, unordered by non-racing happens-before."""
    accesses = [e for e in seq.events
                if e.ord is MO.NA and not e.is_init
                and e.act in (Act.READ, Act.WRITE, Act.RMW)]
    races: list[tuple[Event, Event]] = []
    for i, a in enumerate(accesses):
        for b in accesses[i + 1:]:
            if a.thr == b.thr:
                continue
            if not (a.objects & b.objects):
                continue
            if not (a.is_write_like or b.is_write_like):
                continue
            if rels.mhb(a, b) or rels.mhb(b, a):
                continue
            races.append((a, b) if a.key < b.key else (b, a))
    races.sort(key=lambda p: (p[0].key, p[1].key))
    return races


@dataclass
class AssertOutcome:
    violations: list[int] = field(default_factory=list)   # indices into program.asserts
    diagnostics: list[str] = field(default_factory=list)


def check_asserts(program: Program, final: ExecState) -> AssertOutcome:
    """Evaluate each 'assert never' predicate on final shared and local
    values; a true predicate is a violation."""
    out = AssertOutcome()
    locals_by_thread = final.final_locals()
    for i, a in enumerate(program.asserts):
        try:
            value = _eval_assert(a.expr, final, locals_by_thread)
        except UndefinedName as ue:
            out.diagnostics.append(f"assert {i}: undefined reference {ue.name}")
            continue
        if value != 0:
            out.violations.append(i)
    return out


def _eval_assert(expr, final: ExecState, locals_by_thread) -> int:
    def resolve(ref) -> int:
        if isinstance(ref, SharedRef):
            return final.shr[ref.obj]
        if isinstance(ref, QualifiedRef):
            env = locals_by_thread.get(ref.thread)
            if env is None or ref.local not in env:
                raise UndefinedName(f"{ref.thread}.{ref.local}")
            return env[ref.local]
        raise UndefinedName(str(ref))

    # bare names: shared object if declared, else a unique thread local
    env: dict[str, int] = {}
    from .ir import LocalRef, BinOp, UnOp

    def rewrite(e):
        if isinstance(e, LocalRef):
            if e.name in final.program.objects:
                return SharedRef(e.name)
            owners = [t for t, ls in locals_by_thread.items() if e.name in ls]
            if len(owners) == 1:
                return QualifiedRef(owners[0], e.name)
            raise UndefinedName(e.name)
        if isinstance(e, UnOp):
            return UnOp(e.op, rewrite(e.operand))
        if isinstance(e, BinOp):
            return BinOp(e.op, rewrite(e.left), rewrite(e.right))
        return e

    return eval_expr(rewrite(expr), env, resolve)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class TraceSummary:
    trace_id: str
    schedule: list[str]
    final_shared: dict[str, int]
    final_locals: dict[str, dict[str, int]]
    rf: list[tuple[str, str]]
    racy: bool


@dataclass
class ExplorationReport:
    program: str
    sequences_explored: int = 0
    distinct_traces: int = 0
    non_mca_sequences: int = 0
    violations: list[dict] = field(default_factory=list)
    na_races: list[dict] = field(default_factory=list)
    racy_sequence_count: int = 0
    traces: list[TraceSummary] = field(default_factory=list)
    assert_diagnostics: list[str] = field(default_factory=list)
    budget_exhausted: bool = False
    c11_oracle_failures: int = 0

    @property
    def trace_ids(self) -> set[str]:
        return {t.trace_id for t in self.traces}

    def to_json(self) -> dict:
        return {
            "schema": "moca-verify-report/1",
            "program": self.program,
            "sequences_explored": self.sequences_explored,
            "distinct_traces": self.distinct_traces,
            "non_mca_sequences": self.non_mca_sequences,
            "violations": self.violations,
            "na_races": self.na_races,
            "racy_sequence_count": self.racy_sequence_count,
            "budget_exhausted": self.budget_exhausted,
            "c11_oracle_failures": self.c11_oracle_failures,
            "traces": [
                {
                    "trace_id": t.trace_id,
                    "schedule": t.schedule,
                    "final_shared": t.final_shared,
                    "final_locals": t.final_locals,
                    "rf": [list(edge) for edge in t.rf],
                    "racy": t.racy,
                }
                for t in self.traces
            ],
        }


# ---------------------------------------------------------------------------
# Source-set DFS
# ---------------------------------------------------------------------------

class _Node:
    __slots__ = ("state", "backtrack", "done", "sleep", "candidates")

    def __init__(self, state: ExecState, sleep: set[str], candidates: set[str]):
        self.state = state
        self.backtrack: set[str] = set()
        self.done: set[str] = set()
        self.sleep = sleep
        self.candidates = candidates


class _Explorer:
    def __init__(self, program: Program, max_seqs: int, max_depth: int,
                 run_c11_oracle: bool = True):
        self.program = program
        self.max_seqs = max_seqs
        self.max_depth = max_depth
        self.run_c11_oracle = run_c11_oracle
        self.unit_order = {t.name: i for i, t in enumerate(program.threads)}
        self.report = ExplorationReport(program=program.name)
        self._seen_ids: set[str] = set()
        self.nodes: list[_Node] = []

    def unit_key(self, unit: str) -> tuple:
        if unit in self.unit_order:
            return (0, self.unit_order[unit], unit)
        return (1, unit)

    # -- candidate filtering ---------------------------------------------------

    def _candidates(self, state: ExecState) -> tuple[dict[str, ExecState], set[str]]:
        """Enabled units surviving the incremental coherence filter, mapped to
        their successor states, plus recovery units for pruned ones.

        Pruned candidates still feed race detection: a pruned event's
        reversible races are the schedule changes that can realize its
        equivalence class coherently.  In addition, a violated ordering rule
        names the write whose shared-store update is overdue; scheduling that
        write's flush unit here is the direct repair, so it is proposed as a
        backtrack alternative.
        """
        out: dict[str, ExecState] = {}
        recoveries: set[str] = set()
        for unit in state.enabled_units():
            child = state.step(unit)
            verdict = check_step(child.rels)
            if verdict is None:
                out[unit] = child
                continue
            self._find_races(child, child.rels.events[-1])
            rule, witness = verdict
            overdue = self._overdue_write(child, rule, witness)
            if overdue is not None and overdue not in child.rels.flush_pos:
                recoveries.add(shadow_unit(overdue.thr, overdue.obj_written))
        return out, recoveries

    @staticmethod
    def _overdue_write(child: ExecState, rule: str, witness) -> Optional[Event]:
        if rule in ("shmo1", "shmo3"):
            return witness[0]
        if rule == "shmo2":
            return child.rels.rf.get(witness[0])
        if rule == "shrmo":
            return witness[1]
        return None

    # -- race detection ----------------------------------------------------------

    def _find_races(self, state: ExecState, executed: Event) -> None:
        rels = state.rels
        pos_e = rels.pos[executed]
        mask_e = rels.cd_mask[executed]
        for d in rels.events[rels.init_len:pos_e]:
            if d.thr == executed.thr or not conflicts(d, executed):
                continue
            pos_d = rels.pos[d]
            if (mask_e >> pos_d) & 1:
                # reversible race: no intermediate event on a causal path
                immediate = True
                for x in rels.events[pos_d + 1:pos_e]:
                    px = rels.pos[x]
                    if (mask_e >> px) & 1 and (rels.cd_mask[x] >> pos_d) & 1:
                        immediate = False
                        break
                if not immediate:
                    continue
            self._insert_backtrack(state, d, executed)

    def _insert_backtrack(self, state: ExecState, d: Event, executed: Event) -> None:
        rels = state.rels
        pos_d = rels.pos[d]
        node_index = pos_d - rels.init_len
        if node_index < 0 or node_index >= len(self.nodes):
            return
        node = self.nodes[node_index]
        # v = the events after d that are not causally after d, then the
        # executed event itself
        v = [x for x in rels.events[pos_d + 1:rels.pos[executed]]
             if not (rels.cd_mask[x] >> pos_d) & 1]
        v.append(executed)
        v_bits = 0
        for x in v:
            v_bits |= 1 << rels.pos[x]
        initials: set[str] = set()
        claimed: set[str] = set()
        for x in v:
            if x.thr in claimed:
                continue
            claimed.add(x.thr)
            if not (rels.cd_mask[x] & v_bits):
                initials.add(x.thr)
        if not initials:
            return
        # only entries that can actually run from the node satisfy the
        # insertion: sleeping units never run there, and units whose next
        # event the coherence filter rejected cannot be scheduled at all
        runnable = (initials & node.candidates) - node.sleep
        if (node.backtrack & node.candidates - node.sleep) & initials:
            return
        if runnable:
            node.backtrack.add(min(runnable, key=self.unit_key))
        elif not node.backtrack & initials:
            node.backtrack.add(min(initials, key=self.unit_key))

    # -- recording ----------------------------------------------------------------

    def _record_maximal(self, state: ExecState) -> None:
        self.report.sequences_explored += 1
        seq = state.sequence()
        rels = compute_relations(seq)
        verdict = check_moca(seq, rels)
        if not verdict.ok:
            self.report.non_mca_sequences += 1
        if self.run_c11_oracle and not check_c11_oracle(seq, rels).ok:
            self.report.c11_oracle_failures += 1
        trace_id = canonical_trace_id(seq, rels)
        schedule = state.schedule_so_far()
        races = detect_na_races(seq, rels)
        if races:
            self.report.racy_sequence_count += 1
            for a, b in races:
                self.report.na_races.append({
                    "events": [a.pretty(), b.pretty()],
                    "schedule": schedule,
                    "trace_id": trace_id,
                })
        asserts = check_asserts(self.program, state)
        self.report.assert_diagnostics.extend(asserts.diagnostics)
        for idx in asserts.violations:
            self.report.violations.append({
                "assert": self.program.asserts[idx].text,
                "index": idx,
                "schedule": schedule,
                "final_shared": dict(state.shr),
                "trace_id": trace_id,
            })
        if trace_id not in self._seen_ids:
            self._seen_ids.add(trace_id)
            self.report.traces.append(TraceSummary(
                trace_id=trace_id,
                schedule=schedule,
                final_shared=dict(state.shr),
                final_locals=state.final_locals(),
                rf=sorted((_event_name(w), _event_name(r)) for r, w in seq.rf.items()
                          if not r.is_init),
                racy=bool(races),
            ))
        if self.report.sequences_explored >= self.max_seqs:
            raise ExplorationBudgetExceeded()

    # -- DFS ------------------------------------------------------------------

    def run(self) -> ExplorationReport:
        try:
            self._explore(initial_state(self.program), set())
        except ExplorationBudgetExceeded:
            self.report.budget_exhausted = True
        self.report.distinct_traces = len(self._seen_ids)
        self.report.traces.sort(key=lambda t: t.schedule)
        return self.report

    def _explore(self, state: ExecState, sleep: set[str]) -> None:
        if len(self.nodes) > self.max_depth:
            self.report.budget_exhausted = True
            return
        if state.is_terminal():
            self._record_maximal(state)
            return
        candidates, recoveries = self._candidates(state)
        available = [u for u in candidates if u not in sleep]
        if not available:
            return  # sleep-set blocked or fully pruned: redundant or incoherent
        node = _Node(state, sleep, set(candidates))
        node.backtrack.add(min(available, key=self.unit_key))
        node.backtrack.update(u for u in recoveries if u in candidates)
        self.nodes.append(node)
        try:
            while True:
                todo = [u for u in node.backtrack - node.done - node.sleep
                        if u in candidates]
                node.done.update(u for u in node.backtrack - node.done
                                 if u not in candidates)
                if not todo:
                    break
                unit = min(todo, key=self.unit_key)
                node.done.add(unit)
                child = candidates[unit]
                executed = child.rels.events[-1]
                self._find_races(child, executed)
                child_sleep = set()
                for q in node.sleep:
                    if q in candidates:
                        other = candidates[q].rels.events[-1]
                        if not conflicts(executed, other):
                            child_sleep.add(q)
                self._explore(child, child_sleep)
                node.sleep.add(unit)
        finally:
            self.nodes.pop()


def explore(program: Program, *, max_seqs: int = 1_000_000,
            max_depth: int = 10_000, use_early_write: bool = True,
            run_c11_oracle: bool = True) -> ExplorationReport:
    """Explore the state space of ``program`` (after the early-write
    transformation unless disabled) and report traces, assertion violations,
    and non-atomic races."""
    target = early_write_transform(program) if use_early_write else program
    return _Explorer(target, max_seqs, max_depth, run_c11_oracle).run()


# ---------------------------------------------------------------------------
# Brute-force enumeration oracle
# ---------------------------------------------------------------------------

def _estimate_events(program: Program) -> int:
    from .ir import Cas, Fadd, Fence, IfBlock, Load, Store

    def block_cost(body) -> int:
        n = 0
        for s in body:
            if isinstance(s, (Load, Fence, Fadd, Cas)):
                n += 1
            elif isinstance(s, Store):
                n += 2  # issue + flush
            elif isinstance(s, IfBlock):
                n += max(block_cost(s.then_body), block_cost(s.else_body))
        return n

    return sum(block_cost(t.body) for t in program.threads)


def enumerate_all(program: Program, *, cap: int = 12, use_early_write: bool = True,
                  prefilter: bool = True) -> dict[str, list[str]]:
    """Every interleaving of program and shadow events respecting
    enabledness, filtered by the coherence rules; no reduction.

    Returns {trace_id: witness schedule}.  With ``prefilter`` the coherence
    rules prune prefixes as the explorer does; without it, full interleavings
    are generated and filtered post-hoc (the two agree by construction and
    are compared in tests).
    """
    target = early_write_transform(program) if use_early_write else program
    estimate = _estimate_events(target)
    if estimate > cap:
        raise EnumerationCapExceeded(estimate, cap)

    results: dict[str, list[str]] = {}

    def dfs(state: ExecState) -> None:
        units = state.enabled_units()
        if not units:
            seq = state.sequence()
            rels = compute_relations(seq)
            if check_moca(seq, rels).ok:
                tid = canonical_trace_id(seq, rels)
                results.setdefault(tid, state.schedule_so_far())
            return
        for unit in units:
            child = state.step(unit)
            if prefilter and check_step(child.rels) is not None:
                continue
            dfs(child)

    dfs(initial_state(target))
    return results
