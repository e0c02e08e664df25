from __future__ import annotations

import pytest

from moca_verify import parse_program, run_sequence
from moca_verify.engine import (
    ReplayError,
    enabled,
    initial_state,
    lw,
    resolve_rf,
    step,
    walk_trace,
)
from moca_verify.ir import Act

W_RWR_SCHEDULE = ["T1", "sth_x(T1)", "T2", "T2", "T2", "sth_x(T2)"]


class TestWorkedExample:
    """Two-thread single-object run: issue, flush, read, overwrite, re-read."""

    def test_memory_snapshots(self, w_rwr):
        snapshots = [snap["x"] for _, snap in walk_trace(w_rwr, W_RWR_SCHEDULE)]
        assert snapshots == [0, 1, 1, 1, 1, 2]

    def test_flush_updates_store(self, w_rwr):
        st = initial_state(w_rwr).step("T1")
        assert st.shr["x"] == 0  # issued but not visible
        st = st.step("sth_x(T1)")
        assert st.shr["x"] == 1

    def test_latest_visible_write(self, w_rwr):
        st = initial_state(w_rwr).step("T1").step("sth_x(T1)")
        assert lw(st, "x").key == ("T1", 0)
        st = st.step("T2").step("T2")  # read, then overwrite issued
        assert lw(st, "x").key == ("T1", 0)  # overwrite not flushed yet

    def test_read_own_unflushed_write(self, w_rwr):
        st = run_sequence(w_rwr, ["T1", "sth_x(T1)", "T2", "T2"])
        src = resolve_rf(st, "T2", "x")
        assert src.key == ("T2", 1)  # later same-thread write overrides

    def test_rf_assignment(self, w_rwr):
        st = run_sequence(w_rwr, W_RWR_SCHEDULE)
        rf = {r.key: w.key for r, w in st.sequence().rf.items() if not r.is_init}
        assert rf == {("T2", 0): ("T1", 0), ("T2", 2): ("T2", 1)}
        assert st.shr["x"] == 2

    def test_read_from_init(self, w_rwr):
        st = initial_state(w_rwr)
        assert lw(st, "x").thr == "init"
        src = resolve_rf(st, "T2", "x")
        assert src.thr == "init"
        st = st.step("T2")
        assert st.lcl["T2"]["b"] == 0


class TestEnabled:
    def test_initial_two_threads(self, mp):
        st = initial_state(mp)
        evs = enabled(st)
        assert {e.thr for e in evs} == {"T1", "T2"}
        assert all(e.act is not Act.SHADOW for e in evs)

    def test_shadow_enabled_after_store(self, mp):
        st = initial_state(mp).step("T1")
        units = st.enabled_units()
        assert "sth_x(T1)" in units and "T1" in units and "T2" in units

    def test_terminal_empty(self, mp):
        st = run_sequence(mp, ["T1", "T1", "sth_x(T1)", "sth_f(T1)", "T2", "T2"])
        assert st.enabled_units() == []
        assert enabled(st) == set()

    def test_fence_changes_nothing_but_sequence(self):
        p = parse_program(
            "program f\ninit x = 0\nthread T1:\n  fence(sc)\n  store(x, 1, rlx)\n")
        st = initial_state(p)
        before = dict(st.shr)
        st2 = st.step("T1")
        assert st2.shr == before
        assert st2.rels.events[-1].act is Act.FENCE


class TestReplay:
    def test_determinism(self, mp):
        sched = ["T1", "T2", "T1", "sth_f(T1)", "T2", "sth_x(T1)"]
        a = run_sequence(mp, sched)
        b = run_sequence(mp, sched)
        assert a.shr == b.shr and a.lcl == b.lcl
        assert [e.pretty() for e in a.rels.events] == [e.pretty() for e in b.rels.events]

    def test_bad_schedule_names_step(self, mp):
        with pytest.raises(ReplayError) as exc:
            run_sequence(mp, ["T1", "sth_f(T1)"])  # f not issued yet
        assert exc.value.step_index == 1

    def test_step_requires_enabled_event(self, mp):
        st = initial_state(mp)
        done = run_sequence(mp, ["T1", "T1", "sth_x(T1)", "sth_f(T1)", "T2", "T2"])
        stale = done.rels.events[-1]
        from moca_verify.ir import ContractViolation
        with pytest.raises(ContractViolation):
            step(st, stale)

    def test_mp_sequential_schedule_reads_both(self, mp):
        # fully sequential: T1 runs and flushes, then T2 observes everything
        st = run_sequence(mp, ["T1", "T1", "sth_x(T1)", "sth_f(T1)", "T2", "T2"])
        assert st.lcl["T2"] == {"r": 1, "s": 1}


class TestRmw:
    def test_fadd_atomic_flush(self):
        p = parse_program(
            "program a\ninit c = 0\nthread T1:\n  r1 = fadd(c, 5, acq_rel)\n")
        st = initial_state(p).step("T1")
        assert st.shr["c"] == 5          # visible immediately
        assert st.lcl["T1"]["r1"] == 0   # local receives the old value
        assert st.enabled_units() == []  # no shadow queued

    def test_failed_cas_is_plain_read(self):
        p = parse_program(
            "program c\ninit l = 7\nthread T1:\n  r = cas(l, 0, 1, sc)\n")
        st = initial_state(p).step("T1")
        ev = st.rels.events[-1]
        assert ev.act is Act.READ
        assert st.shr["l"] == 7
        assert st.lcl["T1"]["r"] == 7

    def test_successful_cas(self):
        p = parse_program(
            "program c\ninit l = 0\nthread T1:\n  r = cas(l, 0, 9, sc)\n")
        st = initial_state(p).step("T1")
        ev = st.rels.events[-1]
        assert ev.act is Act.RMW
        assert st.shr["l"] == 9
        assert st.lcl["T1"]["r"] == 0


class TestStoreConsistency:
    def test_shared_store_matches_flushes(self, w_rwr):
        # invariant is machine-checked inside step; walk a few interleavings
        st = initial_state(w_rwr)
        for unit in ["T2", "T1", "T2", "sth_x(T2)", "T2", "sth_x(T1)"]:
            st = st.step(unit)
        assert st.shr["x"] == 1  # T1's flush landed last

    def test_branches_follow_locals(self):
        p = parse_program("""
program b
init x = 1, y = 0
thread T1:
  r = load(x, rlx)
  if (r == 1):
    store(y, 10, rlx)
  else:
    store(y, 20, rlx)
""")
        st = run_sequence(p, ["T1", "T1", "sth_y(T1)"])
        assert st.shr["y"] == 10
