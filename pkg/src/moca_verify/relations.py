"""Happens-before and coherence relations over executed sequences.

Two implementations are kept deliberately separate:

* ``LiveRelations`` grows incrementally as the engine appends events.  Every
  synchronization edge attaches to the newly appended event, so predecessor
  sets are stable under extension and are stored as position bitmasks (one
  int per event), giving O(1) ordering queries and O(n^2) total state.

* ``compute_relations`` rebuilds everything from scratch from a finished
  ``Sequence`` and is the reference the incremental path is tested against.

Relations computed: per-unit program order (program threads, shadow-threads,
and the init prefix), synchronizes-with (release write read by an acquire
read, plus the three fence synchronization shapes), dependency-ordered-before
(via release sequences), their inter-thread closure, happens-before, the
non-racing restriction of happens-before, per-object modification order
induced by shadow-write order, and the total order on sc events.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, TYPE_CHECKING

from .ir import Act, ContractViolation, Event, MO, at_least

if TYPE_CHECKING:
    from .engine import Sequence


def _is_cutting(w: Event, head: Event) -> bool:
    """A release sequence is cut by a foreign-thread non-rmw write strictly
    weaker than release."""
    return (w.thr != head.thr and w.act is not Act.RMW
            and w.ord in (MO.NA, MO.RLX))


def release_sequence_members(issue_order: Iterable[Event], head: Event) -> list[Event]:
    """Writes of head's object forming the release sequence headed by `head`,
    in issue order."""
    if not (head.is_write_like and at_least(head.ord, MO.REL)):
        raise ContractViolation("release sequence head must be a release-class write")
    members = [head]
    seen_head = False
    for w in issue_order:
        if w == head:
            seen_head = True
            continue
        if not seen_head:
            continue
        if _is_cutting(w, head):
            break
        members.append(w)
    return members


# ---------------------------------------------------------------------------
# sc total order
# ---------------------------------------------------------------------------

@dataclass
class ScOrder:
    """Tournament over sc events: same-thread pairs follow program order,
    cross-thread pairs follow placement order (writes place at their
    shadow-write, rmws at their own atomic update)."""

    nodes: list[Event]                      # logical sc events
    placement: dict[Event, int]             # logical event -> placement position
    order: Optional[list[Event]] = None     # topological order when acyclic
    cycle_witness: Optional[tuple[Event, Event]] = None

    def edge(self, a: Event, b: Event) -> bool:
        """True iff a is ordered before b."""
        if a.thr == b.thr:
            return a.idx < b.idx
        return self.placement[a] < self.placement[b]

    def pairs(self) -> Iterable[tuple[Event, Event]]:
        for i, a in enumerate(self.nodes):
            for b in self.nodes[i + 1:]:
                yield (a, b) if self.edge(a, b) else (b, a)


def build_sc_order(placed: list[tuple[Event, int]]) -> ScOrder:
    sc = ScOrder(nodes=[e for e, _ in placed], placement={e: p for e, p in placed})
    indeg = {e: 0 for e in sc.nodes}
    for a, b in sc.pairs():
        indeg[b] += 1
    order: list[Event] = []
    remaining = set(sc.nodes)
    while remaining:
        roots = [e for e in remaining if indeg[e] == 0]
        if not roots:
            # any remaining pair on the cycle serves as a witness
            rem = sorted(remaining, key=lambda e: sc.placement[e])
            sc.cycle_witness = (rem[0], rem[1])
            return sc
        roots.sort(key=lambda e: sc.placement[e])
        e = roots[0]
        remaining.remove(e)
        order.append(e)
        for x in remaining:
            a, b = (e, x) if sc.edge(e, x) else (x, e)
            if a is e:
                indeg[x] -= 1
    sc.order = order
    return sc


# ---------------------------------------------------------------------------
# Incremental relations
# ---------------------------------------------------------------------------

class LiveRelations:
    """Append-only relation state carried by an execution state.

    ``hb_mask[e]`` holds the positions of e's strict happens-before
    predecessors; ``cd_mask[e]`` the predecessors in the causal order used by
    the exploration algorithm (happens-before plus reads-from, issue-to-flush,
    per-object flush order, read-before-later-flush, and the sc placement
    chain).
    """

    __slots__ = (
        "events", "pos", "init_len", "init_mask", "value_of", "rf", "readers",
        "flush_event", "flush_pos", "origin_of", "obj_flush_order",
        "obj_issue_order", "obj_reads", "thread_obj_writes", "thread_reads",
        "rel_fences", "hb_mask", "cd_mask", "sw_edges", "dob_edges",
        "sc_placed", "unit_last",
    )

    def __init__(self) -> None:
        self.events: list[Event] = []
        self.pos: dict[Event, int] = {}
        self.init_len = 0
        self.init_mask = 0
        self.value_of: dict[Event, int] = {}
        self.rf: dict[Event, Event] = {}
        self.readers: dict[Event, list[Event]] = {}
        self.flush_event: dict[Event, Event] = {}
        self.flush_pos: dict[Event, int] = {}
        self.origin_of: dict[Event, Event] = {}
        self.obj_flush_order: dict[str, list[Event]] = {}
        self.obj_issue_order: dict[str, list[Event]] = {}
        self.obj_reads: dict[str, list[Event]] = {}
        self.thread_obj_writes: dict[tuple[str, str], list[Event]] = {}
        self.thread_reads: dict[str, list[Event]] = {}
        self.rel_fences: dict[str, list[Event]] = {}
        self.hb_mask: dict[Event, int] = {}
        self.cd_mask: dict[Event, int] = {}
        self.sw_edges: set[tuple[Event, Event]] = set()
        self.dob_edges: set[tuple[Event, Event]] = set()
        self.sc_placed: list[tuple[Event, int]] = []  # (logical event, placement pos)
        self.unit_last: dict[str, Event] = {}

    def clone(self) -> "LiveRelations":
        other = object.__new__(LiveRelations)
        other.events = list(self.events)
        other.pos = dict(self.pos)
        other.init_len = self.init_len
        other.init_mask = self.init_mask
        other.value_of = dict(self.value_of)
        other.rf = dict(self.rf)
        other.readers = {k: list(v) for k, v in self.readers.items()}
        other.flush_event = dict(self.flush_event)
        other.flush_pos = dict(self.flush_pos)
        other.origin_of = dict(self.origin_of)
        other.obj_flush_order = {k: list(v) for k, v in self.obj_flush_order.items()}
        other.obj_issue_order = {k: list(v) for k, v in self.obj_issue_order.items()}
        other.obj_reads = {k: list(v) for k, v in self.obj_reads.items()}
        other.thread_obj_writes = {k: list(v) for k, v in self.thread_obj_writes.items()}
        other.thread_reads = {k: list(v) for k, v in self.thread_reads.items()}
        other.rel_fences = {k: list(v) for k, v in self.rel_fences.items()}
        other.hb_mask = dict(self.hb_mask)
        other.cd_mask = dict(self.cd_mask)
        other.sw_edges = set(self.sw_edges)
        other.dob_edges = set(self.dob_edges)
        other.sc_placed = list(self.sc_placed)
        other.unit_last = dict(self.unit_last)
        return other

    # -- queries --------------------------------------------------------------

    def hb(self, a: Event, b: Event) -> bool:
        return bool(self.hb_mask[b] >> self.pos[a] & 1)

    def mhb(self, a: Event, b: Event) -> bool:
        return self.hb(a, b) and (a, b) not in self.sw_edges and (a, b) not in self.dob_edges

    def cd(self, a: Event, b: Event) -> bool:
        return bool(self.cd_mask[b] >> self.pos[a] & 1)

    def last_obj_write_of_thread(self, thread: str, obj: str) -> Optional[Event]:
        ws = self.thread_obj_writes.get((thread, obj))
        return ws[-1] if ws else None

    def program_events(self) -> list[Event]:
        return [e for e in self.events if e.act is not Act.SHADOW]

    # -- low-level append -------------------------------------------------------

    def _register(self, e: Event, hb_direct: list[Event], cd_direct: list[Event]) -> int:
        p = len(self.events)
        self.events.append(e)
        self.pos[e] = p
        hb = 0
        for d in hb_direct:
            hb |= self.hb_mask[d] | (1 << self.pos[d])
        if self.init_len and not e.is_init:
            hb |= self.init_mask
        cd = hb
        for d in cd_direct:
            cd |= self.cd_mask[d] | (1 << self.pos[d])
        self.hb_mask[e] = hb
        self.cd_mask[e] = cd
        self.unit_last[e.thr] = e
        return p

    def _po_pred(self, e: Event) -> list[Event]:
        last = self.unit_last.get(e.thr)
        return [last] if last is not None else []

    def _place_sc(self, logical: Event, placement_pos: int) -> list[Event]:
        """Record an sc placement (reads/fences/rmws at their own position,
        writes at their flush) and return the causal predecessors it induces.

        Cross-thread placement order feeds the sc total order, so placements
        of different threads are order-sensitive and must be causally
        ordered; same-thread pairs follow program order regardless of
        placement order and stay independent.
        """
        preds = [self.events[pos] for prev, pos in self.sc_placed
                 if prev.thr != logical.thr]
        self.sc_placed.append((logical, placement_pos))
        return preds

    # -- init prefix -----------------------------------------------------------

    def append_init_write(self, w: Event, value: int) -> None:
        self._register(w, self._po_pred(w), [])
        self.value_of[w] = value
        obj = w.obj[0]
        self.obj_issue_order[obj] = [w]
        self.obj_flush_order[obj] = []
        self.obj_reads[obj] = []
        self.thread_obj_writes.setdefault((w.thr, obj), []).append(w)

    def append_init_flush(self, sh: Event, w: Event) -> None:
        self._register(sh, self._po_pred(sh), [w])
        obj = w.obj[0]
        self.value_of[sh] = self.value_of[w]
        self.origin_of[sh] = w
        self.flush_event[w] = sh
        self.flush_pos[w] = self.pos[sh]
        self.obj_flush_order[obj].append(w)

    def seal_init(self) -> None:
        self.init_len = len(self.events)
        self.init_mask = (1 << self.init_len) - 1

    # -- program events ---------------------------------------------------------

    def _sync_preds_for_read(self, e: Event, src: Event) -> list[Event]:
        """sw and dob sources attaching to an acquire-class read (or the
        read half of an rmw)."""
        preds: list[Event] = []
        if not at_least(e.ord, MO.ACQ):
            return preds
        if src.is_write_like and at_least(src.ord, MO.REL):
            self.sw_edges.add((src, e))
            preds.append(src)
        # release fence sequenced before the source write
        for f in self.rel_fences.get(src.thr, ()):
            if self.pos[f] < self.pos[src]:
                self.sw_edges.add((f, e))
                preds.append(f)
        # release-sequence heads whose sequence contains the source
        obj = e.obj_read
        for head in self.obj_issue_order.get(obj, ()):
            if head == src:
                continue
            if not (head.is_write_like and at_least(head.ord, MO.REL)):
                continue
            if self.pos[head] > self.pos[src]:
                continue
            if src in release_sequence_members(self.obj_issue_order[obj], head):
                self.dob_edges.add((head, e))
                preds.append(head)
        return preds

    def append_read(self, e: Event, src: Event, value: int) -> None:
        obj = e.obj_read
        sync = self._sync_preds_for_read(e, src)
        cd: list[Event] = [src]
        # a foreign source binds the read to that source's flush; a read of
        # the thread's own write commutes with the write's flush
        if src.thr != e.thr:
            cd.append(self.flush_event[src])
        if e.ord is MO.SC:
            cd.extend(self._place_sc(e, len(self.events)))
        self._register(e, self._po_pred(e) + sync, cd)
        self.value_of[e] = value
        self.rf[e] = src
        self.readers.setdefault(src, []).append(e)
        self.obj_reads[obj].append(e)
        self.thread_reads.setdefault(e.thr, []).append(e)

    def append_write(self, e: Event, value: int) -> None:
        obj = e.obj_written
        # same-object issue order decides release-sequence membership
        cd = [self.obj_issue_order[obj][-1]]
        self._register(e, self._po_pred(e), cd)
        self.value_of[e] = value
        self.obj_issue_order[obj].append(e)
        self.thread_obj_writes.setdefault((e.thr, obj), []).append(e)

    def append_rmw(self, e: Event, src: Event, old: int, new: int) -> None:
        obj = e.obj_read
        sync = self._sync_preds_for_read(e, src)
        cd: list[Event] = [src, self.obj_issue_order[obj][-1]]
        if src.thr != e.thr:
            cd.append(self.flush_event[src])
        flushed = self.obj_flush_order[obj]
        if flushed:
            cd.append(self.flush_event[flushed[-1]])
        # the atomic update orders after earlier reads of other threads
        cd.extend(r for r in self.obj_reads[obj] if r.thr != e.thr)
        if e.ord is MO.SC:
            cd.extend(self._place_sc(e, len(self.events)))
        self._register(e, self._po_pred(e) + sync, cd)
        self.value_of[e] = new
        self.rf[e] = src
        self.readers.setdefault(src, []).append(e)
        self.obj_reads[obj].append(e)
        self.thread_reads.setdefault(e.thr, []).append(e)
        self.obj_issue_order[obj].append(e)
        self.thread_obj_writes.setdefault((e.thr, obj), []).append(e)
        self.obj_flush_order[obj].append(e)
        self.flush_event[e] = e
        self.flush_pos[e] = self.pos[e]

    def append_fence(self, e: Event) -> None:
        sync: list[Event] = []
        if at_least(e.ord, MO.ACQ):
            for r in self.thread_reads.get(e.thr, ()):
                src = self.rf[r]
                if src.is_write_like and at_least(src.ord, MO.REL):
                    self.sw_edges.add((src, e))
                    sync.append(src)
                for f in self.rel_fences.get(src.thr, ()):
                    if self.pos[f] < self.pos[src]:
                        self.sw_edges.add((f, e))
                        sync.append(f)
        cd: list[Event] = []
        if e.ord is MO.SC:
            cd.extend(self._place_sc(e, len(self.events)))
        self._register(e, self._po_pred(e) + sync, cd)
        if at_least(e.ord, MO.REL):
            self.rel_fences.setdefault(e.thr, []).append(e)

    def append_flush(self, e: Event, w: Event) -> None:
        obj = e.obj[0]
        cd: list[Event] = [w]
        flushed = self.obj_flush_order[obj]
        if flushed:
            cd.append(self.flush_event[flushed[-1]])
        # a foreign read never moves after a later flush of its object; the
        # flushing thread's own reads commute with it
        cd.extend(r for r in self.obj_reads[obj] if r.thr != w.thr)
        if w.ord is MO.SC:
            cd.extend(self._place_sc(w, len(self.events)))
        self._register(e, self._po_pred(e), cd)
        self.value_of[e] = self.value_of[w]
        self.origin_of[e] = w
        self.flush_event[w] = e
        self.flush_pos[w] = self.pos[e]
        self.obj_flush_order[obj].append(w)

    # -- derived views ----------------------------------------------------------

    def mo(self) -> dict[str, list[Event]]:
        return {obj: list(ws) for obj, ws in self.obj_flush_order.items()}

    def sc_order(self) -> ScOrder:
        return build_sc_order(self.sc_placed)


# ---------------------------------------------------------------------------
# Post-hoc reference
# ---------------------------------------------------------------------------

@dataclass
class RelationSet:
    """Relations of one finished sequence, rebuilt from scratch."""

    events: list[Event]
    pos: dict[Event, int]
    rf: dict[Event, Event]
    sw: set[tuple[Event, Event]]
    dob: set[tuple[Event, Event]]
    ithb: dict[Event, frozenset[Event]]     # successors
    mo: dict[str, list[Event]]
    sc: ScOrder
    init_len: int
    value_of: dict[Event, int] = field(default_factory=dict)

    def po(self, a: Event, b: Event) -> bool:
        return a.thr == b.thr and a.idx < b.idx

    def hb(self, a: Event, b: Event) -> bool:
        if a == b:
            return False
        if a.is_init and not b.is_init:
            return True
        return self.po(a, b) or b in self.ithb.get(a, frozenset())

    def mhb(self, a: Event, b: Event) -> bool:
        return self.hb(a, b) and (a, b) not in self.sw and (a, b) not in self.dob

    def mo_index(self, obj: str, w: Event) -> int:
        return self.mo[obj].index(w)

    def mo_before(self, a: Event, b: Event) -> bool:
        obj = a.obj_written
        if obj is None or obj != b.obj_written:
            return False
        order = self.mo.get(obj, [])
        if a not in order or b not in order:
            return False
        return order.index(a) < order.index(b)

    def hb_pairs(self) -> set[tuple[Event, Event]]:
        out = set()
        for a in self.events:
            for b in self.events:
                if a != b and self.hb(a, b):
                    out.add((a, b))
        return out


def release_sequence(seq: "Sequence", head: Event) -> list[Event]:
    """Release sequence headed by ``head`` within ``seq`` (issue order)."""
    obj = head.obj_written
    issue = [e for e in seq.events
             if e.is_write_like and e.obj_written == obj]
    return release_sequence_members(issue, head)


def compute_relations(seq: "Sequence") -> RelationSet:
    events = seq.events
    pos = seq.pos
    rf = seq.rf
    for r in (e for e in events if e.is_read_like):
        if r not in rf:
            raise ContractViolation(f"unresolved read in sequence: {r}")

    writes = [e for e in events if e.is_write_like]
    reads = [e for e in events if e.is_read_like]
    fences = [e for e in events if e.act is Act.FENCE]

    # synchronizes-with: release write read by acquire read, plus fences
    sw: set[tuple[Event, Event]] = set()
    for r in reads:
        w = rf[r]
        rel_fences_before_w = [f for f in fences
                               if f.thr == w.thr and f.idx < w.idx
                               and at_least(f.ord, MO.REL)]
        acq_fences_after_r = [f for f in fences
                              if f.thr == r.thr and f.idx > r.idx
                              and at_least(f.ord, MO.ACQ)]
        if at_least(r.ord, MO.ACQ):
            if w.is_write_like and at_least(w.ord, MO.REL):
                sw.add((w, r))
            for f in rel_fences_before_w:
                sw.add((f, r))
        for fa in acq_fences_after_r:
            if w.is_write_like and at_least(w.ord, MO.REL):
                sw.add((w, fa))
            for fr in rel_fences_before_w:
                sw.add((fr, fa))

    # dependency-ordered-before via release sequences
    dob: set[tuple[Event, Event]] = set()
    issue_by_obj: dict[str, list[Event]] = {}
    for w in writes:
        issue_by_obj.setdefault(w.obj_written, []).append(w)
    for r in reads:
        if not at_least(r.ord, MO.ACQ):
            continue
        src = rf[r]
        obj = r.obj_read
        for head in issue_by_obj.get(obj, ()):
            if head == src or pos[head] > pos[src]:
                continue
            if not at_least(head.ord, MO.REL):
                continue
            if src in release_sequence_members(issue_by_obj[obj], head):
                dob.add((head, r))

    # inter-thread closure: reachability over unit-successor + sync edges,
    # counting paths with at least one sync edge
    succ: dict[Event, list[tuple[Event, bool]]] = {e: [] for e in events}
    by_unit: dict[str, list[Event]] = {}
    for e in events:
        by_unit.setdefault(e.thr, []).append(e)
    for unit_events in by_unit.values():
        unit_events.sort(key=lambda e: e.idx)
        for a, b in zip(unit_events, unit_events[1:]):
            succ[a].append((b, False))
    for a, b in sw | dob:
        succ[a].append((b, True))

    ithb: dict[Event, frozenset[Event]] = {}
    for start in events:
        reached: set[tuple[Event, bool]] = set()
        stack: list[tuple[Event, bool]] = [(start, False)]
        via_sync: set[Event] = set()
        while stack:
            node, sync = stack.pop()
            for nxt, edge_sync in succ[node]:
                st = (nxt, sync or edge_sync)
                if st in reached:
                    continue
                reached.add(st)
                if st[1]:
                    via_sync.add(nxt)
                stack.append(st)
        ithb[start] = frozenset(via_sync)

    # modification order per object: init write first, then flush order
    mo: dict[str, list[Event]] = {}
    for e in events:
        if e.act is Act.SHADOW:
            mo.setdefault(e.obj[0], []).append(seq.origin_of[e])
        elif e.act is Act.RMW:
            mo.setdefault(e.obj_written, []).append(e)

    # sc total order over placed sc program events
    placed: list[tuple[Event, int]] = []
    for e in events:
        if e.ord is not MO.SC:
            continue
        if e.act in (Act.READ, Act.FENCE, Act.RMW):
            placed.append((e, pos[e]))
        elif e.act is Act.WRITE and e in seq.shadow_of:
            placed.append((e, pos[seq.shadow_of[e]]))
    placed.sort(key=lambda t: t[1])

    return RelationSet(
        events=list(events), pos=dict(pos), rf=dict(rf), sw=sw, dob=dob,
        ithb=ithb, mo=mo, sc=build_sc_order(placed), init_len=seq.init_len,
        value_of=dict(seq.value_of),
    )
