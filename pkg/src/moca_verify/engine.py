"""Operational semantics with delayed store visibility.

A store executes in two parts: the issuing write event (visible to its own
thread only) and a later shadow-write event that updates the shared store.
Shadow-writes belong to per-(thread, object) shadow-threads and interleave
with program events, so reordering of a write with later events of its thread
manifests as plain interleaving.  A successful rmw reads, writes, and updates
the shared store in one atomic transition; it never queues a shadow-write.

Reads resolve deterministically from the interleaving: a read takes its value
from the write whose shadow-write most recently updated the shared store,
unless a later write of the same object from the reader's own thread sits
between that update and the read, in which case it reads that pending write.

Initialization is a virtual ``init`` thread whose non-atomic writes and
shadow-writes occupy a fixed prefix of every sequence (in object order) and
are minimal elements of every relation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterator, Optional

from .ir import (
    Act,
    Cas,
    ContractViolation,
    Event,
    Fadd,
    Fence,
    IfBlock,
    INIT_THREAD,
    Load,
    LocalAssign,
    MO,
    Program,
    Stmt,
    Store,
    eval_expr,
    is_shadow_unit,
    shadow_unit,
)
from .relations import LiveRelations


class ReplayError(Exception):
    def __init__(self, step_index: int, unit: str, reason: str):
        self.step_index = step_index
        self.unit = unit
        self.reason = reason
        super().__init__(f"step {step_index}: cannot schedule {unit!r}: {reason}")


@dataclass(frozen=True)
class Pending:
    """A peeked next event for one schedulable unit, with effects resolved."""

    unit: str
    event: Event
    rf_source: Optional[Event] = None    # for read-like events
    read_value: Optional[int] = None
    write_value: Optional[int] = None    # for write-like events
    stmt: Optional[Stmt] = None
    rf_own_pending: bool = False         # read satisfied by a not-yet-flushed own write


@dataclass
class Sequence:
    """An executed event sequence with its deterministic rf assignment."""

    events: list[Event]
    rf: dict[Event, Event]
    value_of: dict[Event, int]
    pos: dict[Event, int]
    shadow_of: dict[Event, Event]   # write/rmw -> shadow event (rmw maps to itself)
    origin_of: dict[Event, Event]   # shadow event -> originating write
    init_len: int

    def prefix_before(self, e: Event) -> list[Event]:
        return self.events[: self.pos[e]]

    def order(self, a: Event, b: Event) -> bool:
        return self.pos[a] < self.pos[b]


class ExecState:
    """Shared store, per-thread locals and cursors, and pending-write queues.

    States are cloneable snapshots; ``step`` is functional (clone + apply) so
    independent exploration branches never share mutable state.
    """

    def __init__(self, program: Program):
        self.program = program
        self.shr: dict[str, int] = dict(program.objects)
        self.lcl: dict[str, dict[str, int]] = {t.name: {} for t in program.threads}
        # cursor per thread: stack of (statement list, next index)
        self.cursors: dict[str, list[tuple[list[Stmt], int]]] = {
            t.name: [(t.body, 0)] for t in program.threads
        }
        self.pending: dict[str, deque[Event]] = {}
        self.unit_counts: dict[str, int] = {}
        self.rels = LiveRelations()
        self._seed_init_events()
        for t in program.threads:
            self._normalize(t.name)

    # -- construction helpers ------------------------------------------------

    def _seed_init_events(self) -> None:
        for i, (obj, val) in enumerate(sorted(self.program.objects.items())):
            w = Event(thr=INIT_THREAD, act=Act.WRITE, obj=(obj,), ord=MO.NA, idx=i)
            sh = Event(thr=shadow_unit(INIT_THREAD, obj), act=Act.SHADOW,
                       obj=(obj,), ord=MO.NA, idx=0)
            self.rels.append_init_write(w, val)
            self.rels.append_init_flush(sh, w)
        self.rels.seal_init()

    def clone(self) -> "ExecState":
        other = object.__new__(ExecState)
        other.program = self.program
        other.shr = dict(self.shr)
        other.lcl = {t: dict(env) for t, env in self.lcl.items()}
        other.cursors = {t: list(frames) for t, frames in self.cursors.items()}
        other.pending = {u: deque(q) for u, q in self.pending.items()}
        other.unit_counts = dict(self.unit_counts)
        other.rels = self.rels.clone()
        return other

    # -- cursor normalization --------------------------------------------------

    def _normalize(self, thread: str) -> None:
        """Advance past local assignments and resolved branches so the cursor
        rests on the next event statement (or thread end).  Branch conditions
        read locals only, so this is always immediately computable."""
        frames = self.cursors[thread]
        env = self.lcl[thread]
        while frames:
            body, i = frames[-1]
            if i >= len(body):
                frames.pop()
                continue
            stmt = body[i]
            if isinstance(stmt, LocalAssign):
                env[stmt.local] = eval_expr(stmt.value, env)
                frames[-1] = (body, i + 1)
                continue
            if isinstance(stmt, IfBlock):
                frames[-1] = (body, i + 1)
                branch = stmt.then_body if eval_expr(stmt.cond, env) != 0 else stmt.else_body
                if branch:
                    frames.append((branch, 0))
                continue
            return

    def _current_stmt(self, thread: str) -> Optional[Stmt]:
        frames = self.cursors[thread]
        if not frames:
            return None
        body, i = frames[-1]
        return body[i]

    # -- enabledness -----------------------------------------------------------

    def enabled_units(self) -> list[str]:
        units = [t.name for t in self.program.threads if self.cursors[t.name]]
        units.extend(sorted(u for u, q in self.pending.items() if q))
        return units

    def enabled_events(self) -> set[Event]:
        return {self.peek(u).event for u in self.enabled_units()}

    def is_terminal(self) -> bool:
        return not self.enabled_units()

    # -- reads-from resolution ---------------------------------------------------

    def latest_visible_write(self, obj: str) -> Event:
        """The write whose shadow-write most recently updated ``obj``."""
        return self.rels.obj_flush_order[obj][-1]

    def _resolve_rf(self, thread: str, obj: str) -> tuple[Event, bool]:
        """Deterministic source for a read of ``obj`` by ``thread``.

        Returns (source write, own_pending) where own_pending marks the case
        of reading a same-thread write whose shadow-write has not flushed.
        """
        lw = self.latest_visible_write(obj)
        lw_flush_pos = self.rels.flush_pos[lw]
        own = self.rels.last_obj_write_of_thread(thread, obj)
        if own is not None and self.rels.pos[own] > lw_flush_pos:
            return own, self.rels.flush_pos.get(own) is None
        return lw, False

    # -- peeking -------------------------------------------------------------

    def peek(self, unit: str) -> Pending:
        if is_shadow_unit(unit):
            q = self.pending.get(unit)
            if not q:
                raise ReplayError(len(self.rels.events), unit, "empty shadow queue")
            w = q[0]
            ev = Event(thr=unit, act=Act.SHADOW, obj=(w.obj_written,), ord=w.ord,
                       idx=self.unit_counts.get(unit, 0), stmt=w.stmt)
            return Pending(unit=unit, event=ev, write_value=self.rels.value_of[w])
        if unit not in self.lcl:
            raise ReplayError(len(self.rels.events), unit, "unknown unit")
        stmt = self._current_stmt(unit)
        if stmt is None:
            raise ReplayError(len(self.rels.events), unit, "thread finished")
        env = self.lcl[unit]
        idx = self.unit_counts.get(unit, 0)
        if isinstance(stmt, Load):
            src, own_pending = self._resolve_rf(unit, stmt.obj)
            val = self.rels.value_of[src]
            ev = Event(thr=unit, act=Act.READ, obj=(stmt.obj,), ord=stmt.mo,
                       idx=idx, stmt=stmt)
            return Pending(unit=unit, event=ev, rf_source=src, read_value=val,
                           stmt=stmt, rf_own_pending=own_pending)
        if isinstance(stmt, Store):
            val = eval_expr(stmt.value, env)
            ev = Event(thr=unit, act=Act.WRITE, obj=(stmt.obj,), ord=stmt.mo,
                       idx=idx, stmt=stmt)
            return Pending(unit=unit, event=ev, write_value=val, stmt=stmt)
        if isinstance(stmt, Fadd):
            src, own_pending = self._resolve_rf(unit, stmt.obj)
            old = self.rels.value_of[src]
            new = old + eval_expr(stmt.delta, env)
            ev = Event(thr=unit, act=Act.RMW, obj=(stmt.obj, stmt.obj), ord=stmt.mo,
                       idx=idx, stmt=stmt)
            return Pending(unit=unit, event=ev, rf_source=src, read_value=old,
                           write_value=new, stmt=stmt, rf_own_pending=own_pending)
        if isinstance(stmt, Cas):
            src, own_pending = self._resolve_rf(unit, stmt.obj)
            old = self.rels.value_of[src]
            if old == eval_expr(stmt.expect, env):
                ev = Event(thr=unit, act=Act.RMW, obj=(stmt.obj, stmt.obj),
                           ord=stmt.mo, idx=idx, stmt=stmt)
                return Pending(unit=unit, event=ev, rf_source=src, read_value=old,
                               write_value=eval_expr(stmt.desired, env), stmt=stmt,
                               rf_own_pending=own_pending)
            ev = Event(thr=unit, act=Act.READ, obj=(stmt.obj,), ord=stmt.mo,
                       idx=idx, stmt=stmt)
            return Pending(unit=unit, event=ev, rf_source=src, read_value=old,
                           stmt=stmt, rf_own_pending=own_pending)
        if isinstance(stmt, Fence):
            ev = Event(thr=unit, act=Act.FENCE, obj=(), ord=stmt.mo, idx=idx, stmt=stmt)
            return Pending(unit=unit, event=ev, stmt=stmt)
        raise ReplayError(len(self.rels.events), unit, f"unexpected statement {stmt!r}")

    # -- stepping ------------------------------------------------------------

    def step(self, unit: str) -> "ExecState":
        """Execute the next event of ``unit``; returns the successor state."""
        if unit not in self.enabled_units():
            raise ReplayError(len(self.rels.events), unit, "not enabled")
        nxt = self.clone()
        nxt._apply(nxt.peek(unit))
        return nxt

    def _apply(self, p: Pending) -> None:
        ev = p.event
        self.unit_counts[ev.thr] = ev.idx + 1
        if ev.act is Act.SHADOW:
            w = self.pending[ev.thr].popleft()
            self.shr[ev.obj[0]] = self.rels.value_of[w]
            self.rels.append_flush(ev, w)
        elif ev.act is Act.READ:
            self.rels.append_read(ev, p.rf_source, p.read_value)
            self.lcl[ev.thr][p.stmt.local] = p.read_value
            self._advance(ev.thr)
        elif ev.act is Act.WRITE:
            self.rels.append_write(ev, p.write_value)
            unit = shadow_unit(ev.thr, ev.obj[0])
            self.pending.setdefault(unit, deque()).append(ev)
            self._advance(ev.thr)
        elif ev.act is Act.RMW:
            self.rels.append_rmw(ev, p.rf_source, p.read_value, p.write_value)
            self.shr[ev.obj_written] = p.write_value
            self.lcl[ev.thr][p.stmt.local] = p.read_value
            self._advance(ev.thr)
        elif ev.act is Act.FENCE:
            self.rels.append_fence(ev)
            self._advance(ev.thr)
        self._check_store_consistency()

    def _advance(self, thread: str) -> None:
        frames = self.cursors[thread]
        body, i = frames[-1]
        frames[-1] = (body, i + 1)
        self._normalize(thread)

    def _check_store_consistency(self) -> None:
        # shr must equal init values overwritten by flushes in sequence order
        for obj in self.program.objects:
            expect = self.rels.value_of[self.latest_visible_write(obj)]
            if self.shr[obj] != expect:
                raise AssertionError(
                    f"store inconsistency on {obj}: shr={self.shr[obj]} expected {expect}")

    # -- views ---------------------------------------------------------------

    def sequence(self) -> Sequence:
        r = self.rels
        return Sequence(
            events=list(r.events),
            rf=dict(r.rf),
            value_of=dict(r.value_of),
            pos=dict(r.pos),
            shadow_of=dict(r.flush_event),
            origin_of=dict(r.origin_of),
            init_len=r.init_len,
        )

    def schedule_so_far(self) -> list[str]:
        return [e.thr for e in self.rels.events[self.rels.init_len:]]

    def final_locals(self) -> dict[str, dict[str, int]]:
        return {t: dict(env) for t, env in self.lcl.items()}


# ---------------------------------------------------------------------------
# Driver API
# ---------------------------------------------------------------------------

def initial_state(program: Program) -> ExecState:
    return ExecState(program)


def enabled(state: ExecState) -> set[Event]:
    return state.enabled_events()


def step(state: ExecState, event: Event) -> ExecState:
    """Execute ``event``; it must be enabled in ``state``."""
    for unit in state.enabled_units():
        if state.peek(unit).event == event:
            return state.step(unit)
    raise ContractViolation(f"event not enabled: {event}")


def lw(state: ExecState, obj: str) -> Event:
    """Write corresponding to the latest shadow-write of ``obj``."""
    return state.latest_visible_write(obj)


def resolve_rf(state: ExecState, thread: str, obj: str) -> Event:
    return state._resolve_rf(thread, obj)[0]


def run_sequence(program: Program, schedule: list[str]) -> ExecState:
    """Deterministic replay: identical schedules yield identical states."""
    state = initial_state(program)
    for i, unit in enumerate(schedule):
        if unit not in state.enabled_units():
            raise ReplayError(i, unit, "not enabled at this point")
        state = state.step(unit)
    return state


def walk_trace(program: Program, schedule: list[str]) -> Iterator[tuple[Event, dict[str, int]]]:
    """Yield (event, shared-store snapshot) after each replayed step."""
    state = initial_state(program)
    for i, unit in enumerate(schedule):
        if unit not in state.enabled_units():
            raise ReplayError(i, unit, "not enabled at this point")
        state = state.step(unit)
        yield state.rels.events[-1], dict(state.shr)
