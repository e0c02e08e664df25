from __future__ import annotations

from conftest import corpus_names, corpus_program

from moca_verify import parse_program, pretty_print
from moca_verify.ir import Load, Store, structurally_equal
from moca_verify.transform import check_spr, early_write_transform


def thread_kinds(program, name="T1"):
    return [type(s).__name__ for s in program.thread(name).body]


def parse_thread(body: str, init="init x = 0, y = 0"):
    return parse_program(f"program t\n{init}\nthread T1:\n{body}")


class TestHoisting:
    def test_store_hoists_above_relaxed_load(self):
        p = parse_thread("  r1 = load(x, rlx)\n  store(y, 1, rlx)\n")
        q = early_write_transform(p)
        assert thread_kinds(q) == ["Store", "Load"]
        assert check_spr(p, q).ok

    def test_acquire_load_blocks_hoist(self):
        p = parse_thread("  r1 = load(x, acq)\n  store(y, 1, rlx)\n")
        q = early_write_transform(p)
        assert thread_kinds(q) == ["Load", "Store"]

    def test_data_dependence_blocks_hoist(self):
        p = parse_thread("  r1 = load(x, rlx)\n  store(y, r1, rlx)\n")
        q = early_write_transform(p)
        assert thread_kinds(q) == ["Load", "Store"]

    def test_same_object_order_preserved(self):
        p = parse_thread("  r1 = load(x, rlx)\n  store(x, 1, rlx)\n")
        q = early_write_transform(p)
        assert thread_kinds(q) == ["Load", "Store"]

    def test_writes_keep_relative_order(self):
        p = parse_thread("  store(x, 1, rlx)\n  store(y, 2, rlx)\n")
        q = early_write_transform(p)
        body = q.thread("T1").body
        assert [s.obj for s in body] == ["x", "y"]

    def test_acquire_class_fence_blocks(self):
        p = parse_thread("  r1 = load(x, rlx)\n  fence(acq)\n  store(y, 1, rlx)\n")
        q = early_write_transform(p)
        assert thread_kinds(q) == ["Load", "Fence", "Store"]

    def test_release_class_fence_blocks(self):
        p = parse_thread("  r1 = load(x, rlx)\n  fence(rel)\n  store(y, 1, rlx)\n")
        q = early_write_transform(p)
        assert thread_kinds(q) == ["Load", "Fence", "Store"]

    def test_relaxed_fence_is_transparent(self):
        p = parse_thread("  r1 = load(x, rlx)\n  fence(rlx)\n  store(y, 1, rlx)\n")
        q = early_write_transform(p)
        assert thread_kinds(q) == ["Store", "Load", "Fence"]

    def test_hoist_permitted_above_release_write(self):
        # only dependences and upward restrictions block; a release *write*
        # imposes a downward restriction and is itself unhoistable past, but
        # an unrelated relaxed store above a relaxed load below it may move
        p = parse_thread("  store(x, 1, rel)\n  r1 = load(x, rlx)\n  store(y, 1, rlx)\n")
        q = early_write_transform(p)
        # store(y) passes the load but stops below the release store (tie rule)
        assert thread_kinds(q) == ["Store", "Store", "Load"]
        assert [getattr(s, "obj", None) for s in q.thread("T1").body] == ["x", "y", "x"]
        assert check_spr(p, q).ok

    def test_local_overlap_blocks(self):
        # the rmw redefines r1, which the intervening store still reads
        p = parse_thread("  r1 = load(x, rlx)\n  store(y, r1, rlx)\n  r1 = fadd(x, 1, rlx)\n")
        q = early_write_transform(p)
        assert thread_kinds(q) == ["Load", "Store", "Fadd"]

    def test_never_crosses_branch_boundary(self):
        p = parse_thread(
            "  r1 = load(x, rlx)\n  if (r1 == 1):\n    r2 = load(y, rlx)\n  store(y, 1, rlx)\n")
        q = early_write_transform(p)
        assert thread_kinds(q) == ["Load", "IfBlock", "Store"]

    def test_hoist_within_branch_body(self):
        p = parse_thread(
            "  r1 = load(x, rlx)\n  if (r1 == 1):\n    r2 = load(y, rlx)\n    store(x, 1, rlx)\n")
        q = early_write_transform(p)
        inner = q.thread("T1").body[1].then_body
        assert [type(s).__name__ for s in inner] == ["Store", "Load"]

    def test_idempotent_on_corpus(self):
        for name in corpus_names():
            p = corpus_program(name)
            once = early_write_transform(p)
            twice = early_write_transform(once)
            assert structurally_equal(once, twice), name

    def test_total_and_multiset_preserving_on_corpus(self):
        for name in corpus_names():
            p = corpus_program(name)
            q = early_write_transform(p)
            v = check_spr(p, q)
            assert v.spr1, (name, v.detail)


class TestCheckSpr:
    def test_identity_passes(self, mp):
        v = check_spr(mp, mp)
        assert v.ok

    def test_corpus_transform_preserves_semantics(self):
        for name in corpus_names():
            p = corpus_program(name)
            v = check_spr(p, early_write_transform(p))
            assert v.ok, (name, v.detail)

    def test_swapped_same_object_stores_fail_spr3(self):
        a = parse_thread("  store(x, 1, rlx)\n  store(x, 2, rlx)\n")
        b = parse_thread("  store(x, 2, rlx)\n  store(x, 1, rlx)\n")
        v = check_spr(a, b)
        assert not v.spr3

    def test_reordered_dependent_pair_fails_spr2(self):
        a = parse_thread("  r1 = load(x, rlx)\n  store(x, 5, rlx)\n  r2 = load(x, rlx)\n")
        b = parse_thread("  r1 = load(x, rlx)\n  r2 = load(x, rlx)\n  store(x, 5, rlx)\n")
        v = check_spr(a, b)
        assert not (v.spr2 and v.spr3)

    def test_thread_count_mismatch_is_spr1_failure(self, mp):
        solo = parse_program("program s\ninit x = 0\nthread T1:\n  store(x, 1, rlx)\n")
        v = check_spr(mp, solo)
        assert not v.spr1
        assert "thread count" in v.detail

    def test_statement_change_fails_spr1(self):
        a = parse_thread("  store(x, 1, rlx)\n")
        b = parse_thread("  store(x, 2, rlx)\n")
        assert not check_spr(a, b).spr1


class TestEmitTransformed:
    def test_pretty_print_round_trip(self):
        p = corpus_program("s-popl")
        q = early_write_transform(p)
        text = pretty_print(q)
        assert structurally_equal(parse_program(text), q)
        # hoisted form: each store precedes its thread's load
        lines = [l.strip() for l in text.splitlines()]
        assert lines[lines.index("thread T1:") + 1].startswith("store")
