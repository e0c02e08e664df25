from __future__ import annotations

import pytest

from conftest import corpus_program

from moca_verify import parse_program, run_sequence
from moca_verify.engine import initial_state
from moca_verify.ir import Act, ContractViolation
from moca_verify.relations import compute_relations, release_sequence


def run(program, schedule):
    st = run_sequence(program, schedule)
    seq = st.sequence()
    return st, seq, compute_relations(seq)


def by_key(seq, thr, idx):
    for e in seq.events:
        if e.thr == thr and e.idx == idx:
            return e
    raise KeyError((thr, idx))


class TestReleaseSequence:
    def test_same_thread_continuation(self):
        p = parse_program(
            "program rs\ninit x = 0\nthread T1:\n  store(x, 1, rel)\n  store(x, 2, rlx)\n")
        _, seq, _ = run(p, ["T1", "T1", "sth_x(T1)", "sth_x(T1)"])
        head = by_key(seq, "T1", 0)
        rs = release_sequence(seq, head)
        assert [e.key for e in rs] == [("T1", 0), ("T1", 1)]

    def test_singleton(self):
        p = parse_program("program rs\ninit x = 0\nthread T1:\n  store(x, 1, rel)\n")
        _, seq, _ = run(p, ["T1", "sth_x(T1)"])
        head = by_key(seq, "T1", 0)
        assert [e.key for e in release_sequence(seq, head)] == [("T1", 0)]

    def test_foreign_relaxed_store_cuts(self):
        p = parse_program(
            "program rs\ninit x = 0\nthread T1:\n  store(x, 1, rel)\n  store(x, 2, rlx)\n"
            "thread T2:\n  store(x, 3, rlx)\n")
        # issue order: T1 head, then T2's foreign relaxed store, then T1's own
        _, seq, _ = run(p, ["T1", "T2", "T1",
                            "sth_x(T1)", "sth_x(T2)", "sth_x(T1)"])
        head = by_key(seq, "T1", 0)
        assert [e.key for e in release_sequence(seq, head)] == [("T1", 0)]

    def test_foreign_rmw_continues(self):
        p = parse_program(
            "program rs\ninit x = 0\nthread T1:\n  store(x, 1, rel)\n"
            "thread T2:\n  r = fadd(x, 1, rlx)\n")
        _, seq, _ = run(p, ["T1", "sth_x(T1)", "T2"])
        head = by_key(seq, "T1", 0)
        assert [e.key for e in release_sequence(seq, head)] == [("T1", 0), ("T2", 0)]

    def test_requires_release_class_head(self):
        p = parse_program("program rs\ninit x = 0\nthread T1:\n  store(x, 1, rlx)\n")
        _, seq, _ = run(p, ["T1", "sth_x(T1)"])
        with pytest.raises(ContractViolation):
            release_sequence(seq, by_key(seq, "T1", 0))


class TestComputeRelations:
    def test_mp_synchronization(self, mp):
        _, seq, rels = run(mp, ["T1", "T1", "sth_x(T1)", "sth_f(T1)", "T2", "T2"])
        w_x, w_f = by_key(seq, "T1", 0), by_key(seq, "T1", 1)
        r_f, r_x = by_key(seq, "T2", 0), by_key(seq, "T2", 1)
        assert (w_f, r_f) in rels.sw
        assert rels.hb(w_x, r_x)          # po ; sw ; po
        assert rels.mhb(w_x, r_x)         # not a direct synchronization edge
        assert not rels.mhb(w_f, r_f)     # direct sw pairs are excluded

    def test_single_thread_hb_is_po(self):
        p = parse_program(
            "program s\ninit x = 0\nthread T1:\n  store(x, 1, rlx)\n  r = load(x, rlx)\n")
        _, seq, rels = run(p, ["T1", "T1", "sth_x(T1)"])
        assert rels.sw == set() and rels.dob == set()
        w, r = by_key(seq, "T1", 0), by_key(seq, "T1", 1)
        assert rels.hb(w, r) and not rels.hb(r, w)

    def test_dob_via_release_sequence(self):
        p = parse_program("""
program d
init x = 0
thread T1:
  store(x, 1, rel)
  store(x, 2, rlx)
thread T2:
  r = load(x, acq)
""")
        # reader takes the relaxed continuation store
        _, seq, rels = run(p, ["T1", "T1", "sth_x(T1)", "sth_x(T1)", "T2"])
        head, cont = by_key(seq, "T1", 0), by_key(seq, "T1", 1)
        r = by_key(seq, "T2", 0)
        assert seq.rf[r] == cont
        assert (head, r) in rels.dob
        assert (cont, r) not in rels.sw   # continuation is not release-class
        assert rels.hb(head, r)

    def test_mo_follows_flush_order(self, w_rwr):
        _, seq, rels = run(w_rwr, ["T1", "sth_x(T1)", "T2", "T2", "T2", "sth_x(T2)"])
        order = [e.thr for e in rels.mo["x"]]
        assert order == ["init", "T1", "T2"]

    def test_sc_writes_place_at_flush(self):
        p = parse_program(
            "program sc\ninit x = 0, y = 0\nthread T1:\n  store(x, 1, sc)\n"
            "thread T2:\n  r = load(y, sc)\n")
        # the read executes before the store's flush: total order puts it first
        _, seq, rels = run(p, ["T1", "T2", "sth_x(T1)"])
        assert rels.sc.order is not None
        assert [e.act for e in rels.sc.order] == [Act.READ, Act.WRITE]

    def test_hb_contained_in_sequence_order(self):
        for name in ("mp", "simple-ithb", "ww-rr"):
            p = corpus_program(name)
            from moca_verify import explore
            rep = explore(p)
            from moca_verify.transform import early_write_transform
            target = early_write_transform(p)
            for t in rep.traces:
                st = run_sequence(target, t.schedule)
                seq = st.sequence()
                rels = compute_relations(seq)
                for a in seq.events:
                    assert not rels.hb(a, a)
                    for b in seq.events:
                        if rels.hb(a, b):
                            assert a.is_init or seq.pos[a] < seq.pos[b]


class TestFenceSynchronization:
    def test_release_fence_before_store(self):
        p = corpus_program("mp-fence-rel")
        _, seq, rels = run(p, ["T1", "T1", "T1", "sth_x(T1)", "sth_f(T1)", "T2", "T2"])
        fence = by_key(seq, "T1", 1)
        r_f = by_key(seq, "T2", 0)
        assert fence.act is Act.FENCE
        assert (fence, r_f) in rels.sw
        assert rels.hb(by_key(seq, "T1", 0), by_key(seq, "T2", 1))

    def test_acquire_fence_after_load(self):
        p = corpus_program("mp-fence-acq")
        _, seq, rels = run(p, ["T1", "T1", "sth_x(T1)", "sth_f(T1)", "T2", "T2", "T2"])
        w_f = by_key(seq, "T1", 1)
        fence = by_key(seq, "T2", 1)
        assert (w_f, fence) in rels.sw
        assert rels.hb(by_key(seq, "T1", 0), by_key(seq, "T2", 2))

    def test_fence_to_fence(self):
        p = corpus_program("mp-fence-both")
        _, seq, rels = run(p, ["T1", "T1", "T1", "sth_x(T1)", "sth_f(T1)",
                               "T2", "T2", "T2"])
        f_rel = by_key(seq, "T1", 1)
        f_acq = by_key(seq, "T2", 1)
        assert (f_rel, f_acq) in rels.sw
        assert rels.hb(by_key(seq, "T1", 0), by_key(seq, "T2", 2))

    def test_fences_never_in_mo_or_rf(self):
        p = corpus_program("sb-fences")
        from moca_verify import explore
        from moca_verify.transform import early_write_transform
        rep = explore(p)
        target = early_write_transform(p)
        for t in rep.traces:
            st = run_sequence(target, t.schedule)
            seq = st.sequence()
            rels = compute_relations(seq)
            for ws in rels.mo.values():
                assert all(w.act is not Act.FENCE for w in ws)
            assert all(w.act is not Act.FENCE for w in seq.rf.values())


class TestLiveMatchesReference:
    def test_hb_and_mhb_agree_on_every_prefix(self):
        for name in ("mp", "simple-ithb", "sb-sc", "store-then-rmw", "wrc-addrs"):
            p = corpus_program(name)
            from moca_verify import explore
            from moca_verify.transform import early_write_transform
            rep = explore(p)
            target = early_write_transform(p)
            for t in rep.traces[:3]:
                st = initial_state(target)
                for u in t.schedule:
                    st = st.step(u)
                    seq = st.sequence()
                    rels = compute_relations(seq)
                    for a in seq.events:
                        for b in seq.events:
                            if a is b:
                                continue
                            assert st.rels.hb(a, b) == rels.hb(a, b), (name, a, b)
                            assert st.rels.mhb(a, b) == rels.mhb(a, b), (name, a, b)
