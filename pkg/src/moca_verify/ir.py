"""Litmus program model: memory orders, events, the statement DSL, and parsing.

A litmus program is a finite set of acyclic thread bodies over a fixed set of
shared integer objects.  Shared accesses (``load``/``store``/``fadd``/``cas``/
``fence``) are the only statements that become schedulable events; local
assignments and branches are folded into the next event.  Branch conditions may
read locals only, so every shared access is a distinct event and data/control
dependences are computable from def-use chains.

Example source::

    program mp
    init x = 0, f = 0
    thread T1:
      store(x, 1, rlx)
      store(f, 1, rel)
    thread T2:
      r = load(f, acq)
      s = load(x, rlx)
    assert never (r == 1 && s == 0)
    expect traces = 3
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterator, Optional, Union


# ---------------------------------------------------------------------------
# Memory orders
# ---------------------------------------------------------------------------

class MO(str, Enum):
    NA = "na"
    RLX = "rlx"
    ACQ = "acq"
    REL = "rel"
    ACQ_REL = "acq_rel"
    SC = "sc"

    def __str__(self) -> str:
        return self.value


# Strictness ranks; acq and rel share a rank and are mutually incomparable.
_MO_RANK = {MO.NA: 0, MO.RLX: 1, MO.ACQ: 2, MO.REL: 2, MO.ACQ_REL: 3, MO.SC: 4}

ALL_ORDERS = tuple(MO)


def ord_leq(a: MO, b: MO) -> bool:
    """True iff order ``a`` is no stricter than ``b`` (reflexive)."""
    return a == b or _MO_RANK[a] < _MO_RANK[b]


def at_least(o: MO, m: MO) -> bool:
    """True iff ``o`` is at least as strict as ``m``."""
    return ord_leq(m, o)


def orders_at_least(m: MO) -> frozenset[MO]:
    return frozenset(o for o in MO if at_least(o, m))


def orders_at_most(m: MO) -> frozenset[MO]:
    return frozenset(o for o in MO if ord_leq(o, m))


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------

class Act(str, Enum):
    WRITE = "write"
    READ = "read"
    RMW = "rmw"
    FENCE = "fence"
    SHADOW = "shadow-write"

    def __str__(self) -> str:
        return self.value


INIT_THREAD = "init"


def shadow_unit(thread: str, obj: str) -> str:
    return f"sth_{obj}({thread})"


def is_shadow_unit(unit: str) -> bool:
    return unit.startswith("sth_")


@dataclass(frozen=True)
class Event:
    """One shared-memory action: ``(thr, act, obj, ord, idx)``.

    ``obj`` is a tuple: empty for fences, a singleton for plain accesses, and
    ``(read_obj, write_obj)`` for rmw events.  ``(thr, idx)`` identifies the
    event within a sequence.  ``stmt`` links back to the originating statement
    and is excluded from equality.
    """

    thr: str
    act: Act
    obj: tuple[str, ...]
    ord: MO
    idx: int
    stmt: Optional["Stmt"] = field(default=None, compare=False, repr=False, hash=False)

    @property
    def key(self) -> tuple[str, int]:
        return (self.thr, self.idx)

    @property
    def objects(self) -> frozenset[str]:
        return frozenset(self.obj)

    @property
    def obj_read(self) -> Optional[str]:
        if self.act in (Act.READ, Act.RMW):
            return self.obj[0]
        return None

    @property
    def obj_written(self) -> Optional[str]:
        if self.act in (Act.WRITE, Act.SHADOW):
            return self.obj[0]
        if self.act is Act.RMW:
            return self.obj[-1]
        return None

    @property
    def is_write_like(self) -> bool:
        """Member of the write category: issues a store (write or rmw)."""
        return self.act in (Act.WRITE, Act.RMW)

    @property
    def is_read_like(self) -> bool:
        return self.act in (Act.READ, Act.RMW)

    @property
    def is_init(self) -> bool:
        return self.thr == INIT_THREAD or self.thr.endswith(f"({INIT_THREAD})")

    def pretty(self) -> str:
        o = ",".join(self.obj)
        return f"{self.thr}#{self.idx}:{self.act.value}({o}){self.ord.value}"


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

class ExprError(Exception):
    pass


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class LocalRef:
    name: str


@dataclass(frozen=True)
class SharedRef:
    """Final value of a shared object; valid only inside assert predicates."""
    obj: str


@dataclass(frozen=True)
class QualifiedRef:
    """``Thread.local`` reference; valid only inside assert predicates."""
    thread: str
    local: str


@dataclass(frozen=True)
class UnOp:
    op: str  # '-' or '!'
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, LocalRef, SharedRef, QualifiedRef, UnOp, BinOp]


def expr_locals(e: Expr) -> frozenset[str]:
    if isinstance(e, LocalRef):
        return frozenset([e.name])
    if isinstance(e, UnOp):
        return expr_locals(e.operand)
    if isinstance(e, BinOp):
        return expr_locals(e.left) | expr_locals(e.right)
    return frozenset()


class UndefinedName(ExprError):
    def __init__(self, name: str):
        super().__init__(f"undefined name: {name}")
        self.name = name


def eval_expr(e: Expr, env: dict[str, int],
              resolve: Optional[Callable[[Expr], int]] = None) -> int:
    """Evaluate over locals in ``env``; booleans are 1/0.

    ``resolve`` handles SharedRef/QualifiedRef nodes (assert evaluation).
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, LocalRef):
        if e.name not in env:
            raise UndefinedName(e.name)
        return env[e.name]
    if isinstance(e, (SharedRef, QualifiedRef)):
        if resolve is None:
            raise ExprError("shared reference outside assert context")
        return resolve(e)
    if isinstance(e, UnOp):
        v = eval_expr(e.operand, env, resolve)
        return -v if e.op == "-" else int(v == 0)
    if isinstance(e, BinOp):
        if e.op == "&&":
            return int(eval_expr(e.left, env, resolve) != 0
                       and eval_expr(e.right, env, resolve) != 0)
        if e.op == "||":
            return int(eval_expr(e.left, env, resolve) != 0
                       or eval_expr(e.right, env, resolve) != 0)
        lv = eval_expr(e.left, env, resolve)
        rv = eval_expr(e.right, env, resolve)
        if e.op == "+":
            return lv + rv
        if e.op == "-":
            return lv - rv
        if e.op == "*":
            return lv * rv
        if e.op == "==":
            return int(lv == rv)
        if e.op == "!=":
            return int(lv != rv)
        if e.op == "<":
            return int(lv < rv)
        if e.op == "<=":
            return int(lv <= rv)
        if e.op == ">":
            return int(lv > rv)
        if e.op == ">=":
            return int(lv >= rv)
    raise ExprError(f"bad expression node: {e!r}")


def render_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, LocalRef):
        return e.name
    if isinstance(e, SharedRef):
        return e.obj
    if isinstance(e, QualifiedRef):
        return f"{e.thread}.{e.local}"
    if isinstance(e, UnOp):
        return f"{e.op}{render_expr(e.operand)}"
    if isinstance(e, BinOp):
        return f"({render_expr(e.left)} {e.op} {render_expr(e.right)})"
    raise ExprError(f"bad expression node: {e!r}")


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------

_uid_counter = itertools.count()


@dataclass
class StmtBase:
    line: int = field(default=0, kw_only=True)
    uid: int = field(default_factory=lambda: next(_uid_counter), kw_only=True)
    # uids of earlier statements this one depends on (data via locals, control
    # via enclosing branch conditions); filled in by validation.
    influences: frozenset[int] = field(default=frozenset(), kw_only=True)


@dataclass
class Load(StmtBase):
    local: str
    obj: str
    mo: MO


@dataclass
class Store(StmtBase):
    obj: str
    value: Expr
    mo: MO


@dataclass
class Fadd(StmtBase):
    """``local = fadd(obj, delta, ord)``; local receives the old value."""
    local: str
    obj: str
    delta: Expr
    mo: MO


@dataclass
class Cas(StmtBase):
    """``local = cas(obj, expect, desired, ord)``; local receives the old value.

    The store happens only when the old value equals ``expect``; a failed cas
    is a plain read event.
    """
    local: str
    obj: str
    expect: Expr
    desired: Expr
    mo: MO


@dataclass
class Fence(StmtBase):
    mo: MO


@dataclass
class LocalAssign(StmtBase):
    local: str
    value: Expr


@dataclass
class IfBlock(StmtBase):
    cond: Expr
    then_body: list["Stmt"] = field(default_factory=list)
    else_body: list["Stmt"] = field(default_factory=list)


Stmt = Union[Load, Store, Fadd, Cas, Fence, LocalAssign, IfBlock]

EVENT_STMTS = (Load, Store, Fadd, Cas, Fence)


def stmt_locals_read(s: Stmt) -> frozenset[str]:
    if isinstance(s, Store):
        return expr_locals(s.value)
    if isinstance(s, Fadd):
        return expr_locals(s.delta)
    if isinstance(s, Cas):
        return expr_locals(s.expect) | expr_locals(s.desired)
    if isinstance(s, LocalAssign):
        return expr_locals(s.value)
    if isinstance(s, IfBlock):
        return expr_locals(s.cond)
    return frozenset()


def stmt_locals_written(s: Stmt) -> frozenset[str]:
    if isinstance(s, (Load, Fadd, Cas)):
        return frozenset([s.local])
    if isinstance(s, LocalAssign):
        return frozenset([s.local])
    return frozenset()


def stmt_objs(s: Stmt) -> frozenset[str]:
    if isinstance(s, (Load, Store, Fadd, Cas)):
        return frozenset([s.obj])
    return frozenset()


def is_event_stmt(s: Stmt) -> bool:
    return isinstance(s, EVENT_STMTS)


def flatten(body: list[Stmt]) -> Iterator[Stmt]:
    for s in body:
        yield s
        if isinstance(s, IfBlock):
            yield from flatten(s.then_body)
            yield from flatten(s.else_body)


# ---------------------------------------------------------------------------
# Program
# ---------------------------------------------------------------------------

@dataclass
class ThreadBody:
    name: str
    body: list[Stmt]


@dataclass
class AssertNever:
    text: str
    expr: Expr
    line: int = 0


@dataclass
class Program:
    name: str
    objects: dict[str, int]
    threads: list[ThreadBody]
    asserts: list[AssertNever] = field(default_factory=list)
    expect_traces: Optional[int] = None

    def thread(self, name: str) -> ThreadBody:
        for t in self.threads:
            if t.name == name:
                return t
        raise KeyError(name)

    @property
    def thread_names(self) -> list[str]:
        return [t.name for t in self.threads]


class ContractViolation(Exception):
    pass


def stmt_dep(earlier: Stmt, later: Stmt) -> bool:
    """Program dependence: ``later`` depends on ``earlier`` through data flow
    over locals or control flow.  Address dependence is vacuous in this DSL
    (object names are static) and intentionally absent.
    """
    return earlier.uid in later.influences


def dep(e_earlier: Event, e_later: Event) -> bool:
    """Event-level dependence; requires same-thread events in idx order."""
    if e_earlier.thr != e_later.thr:
        raise ContractViolation("dep is defined on same-thread events only")
    if e_earlier.idx >= e_later.idx:
        raise ContractViolation("dep requires idx(earlier) < idx(later)")
    if e_earlier.stmt is None or e_later.stmt is None:
        raise ContractViolation("dep requires statement-backed events")
    return stmt_dep(e_earlier.stmt, e_later.stmt)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


class ParseError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


_LOOP_KEYWORDS = ("while", "for", "do", "goto", "loop")

_ORDER_NAMES = {m.value: m for m in MO}


class _Tokenizer:
    """Single-line tokenizer for statements and expressions."""

    SYMBOLS = ("&&", "||", "==", "!=", "<=", ">=", "(", ")", ",", "+", "-",
               "*", "<", ">", "!", "=", ":", ".")

    def __init__(self, text: str, line: int):
        self.text = text
        self.line = line
        self.pos = 0
        self.tokens: list[tuple[str, str, int]] = []  # (kind, value, col)
        self._scan()
        self.i = 0

    def _scan(self) -> None:
        t, n = self.text, len(self.text)
        i = 0
        while i < n:
            c = t[i]
            if c in " \t":
                i += 1
                continue
            if c == "#":
                break
            if c.isdigit():
                j = i
                while j < n and t[j].isdigit():
                    j += 1
                self.tokens.append(("int", t[i:j], i))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < n and (t[j].isalnum() or t[j] == "_"):
                    j += 1
                self.tokens.append(("name", t[i:j], i))
                i = j
                continue
            for sym in self.SYMBOLS:
                if t.startswith(sym, i):
                    self.tokens.append(("sym", sym, i))
                    i += len(sym)
                    break
            else:
                raise ParseError([Diagnostic(self.line, i + 1, f"unexpected character {c!r}")])

    def peek(self) -> Optional[tuple[str, str, int]]:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise ParseError([Diagnostic(self.line, len(self.text) + 1, "unexpected end of line")])
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        tok = self.next()
        if tok[1] != value:
            raise ParseError([Diagnostic(self.line, tok[2] + 1, f"expected {value!r}, found {tok[1]!r}")])

    def at_end(self) -> bool:
        return self.i >= len(self.tokens)

    def fail(self, msg: str) -> "ParseError":
        tok = self.peek()
        col = tok[2] + 1 if tok else len(self.text) + 1
        return ParseError([Diagnostic(self.line, col, msg)])


def _parse_expr(tz: _Tokenizer, allow_refs: bool = False) -> Expr:
    return _parse_or(tz, allow_refs)


def _parse_or(tz: _Tokenizer, refs: bool) -> Expr:
    e = _parse_and(tz, refs)
    while (tok := tz.peek()) and tok[1] == "||":
        tz.next()
        e = BinOp("||", e, _parse_and(tz, refs))
    return e


def _parse_and(tz: _Tokenizer, refs: bool) -> Expr:
    e = _parse_cmp(tz, refs)
    while (tok := tz.peek()) and tok[1] == "&&":
        tz.next()
        e = BinOp("&&", e, _parse_cmp(tz, refs))
    return e


def _parse_cmp(tz: _Tokenizer, refs: bool) -> Expr:
    e = _parse_add(tz, refs)
    while (tok := tz.peek()) and tok[1] in ("==", "!=", "<", "<=", ">", ">="):
        op = tz.next()[1]
        e = BinOp(op, e, _parse_add(tz, refs))
    return e


def _parse_add(tz: _Tokenizer, refs: bool) -> Expr:
    e = _parse_mul(tz, refs)
    while (tok := tz.peek()) and tok[1] in ("+", "-"):
        op = tz.next()[1]
        e = BinOp(op, e, _parse_mul(tz, refs))
    return e


def _parse_mul(tz: _Tokenizer, refs: bool) -> Expr:
    e = _parse_unary(tz, refs)
    while (tok := tz.peek()) and tok[1] == "*":
        tz.next()
        e = BinOp("*", e, _parse_unary(tz, refs))
    return e


def _parse_unary(tz: _Tokenizer, refs: bool) -> Expr:
    tok = tz.peek()
    if tok and tok[1] in ("-", "!"):
        tz.next()
        return UnOp(tok[1], _parse_unary(tz, refs))
    return _parse_atom(tz, refs)


def _parse_atom(tz: _Tokenizer, refs: bool) -> Expr:
    tok = tz.next()
    kind, value, col = tok
    if kind == "int":
        return Const(int(value))
    if value == "(":
        e = _parse_expr(tz, refs)
        tz.expect(")")
        return e
    if kind == "name":
        nxt = tz.peek()
        if refs and nxt and nxt[1] == ".":
            tz.next()
            member = tz.next()
            if member[0] != "name":
                raise ParseError([Diagnostic(tz.line, member[2] + 1, "expected local name after '.'")])
            return QualifiedRef(value, member[1])
        return LocalRef(value)
    raise ParseError([Diagnostic(tz.line, col + 1, f"unexpected token {value!r} in expression")])


def _parse_order(tz: _Tokenizer) -> MO:
    tok = tz.next()
    if tok[0] != "name" or tok[1] not in _ORDER_NAMES:
        raise ParseError([Diagnostic(tz.line, tok[2] + 1,
                                     f"expected memory order (na|rlx|acq|rel|acq_rel|sc), found {tok[1]!r}")])
    return _ORDER_NAMES[tok[1]]


def _indent_of(raw: str) -> int:
    n = 0
    for ch in raw:
        if ch == " ":
            n += 1
        elif ch == "\t":
            raise ParseError([Diagnostic(0, n + 1, "tabs are not allowed for indentation")])
        else:
            break
    return n


def _parse_statement(tz: _Tokenizer) -> Stmt:
    line = tz.line
    tok = tz.peek()
    if tok is None:
        raise tz.fail("empty statement")
    kind, value, col = tok
    for kw in _LOOP_KEYWORDS:
        if value == kw:
            raise ParseError([Diagnostic(line, col + 1,
                                         f"loop construct {kw!r} is not allowed: thread bodies must be acyclic")])
    if value == "store":
        tz.next()
        tz.expect("(")
        obj = tz.next()
        if obj[0] != "name":
            raise tz.fail("expected object name")
        tz.expect(",")
        val = _parse_expr(tz)
        tz.expect(",")
        mo = _parse_order(tz)
        tz.expect(")")
        return Store(obj=obj[1], value=val, mo=mo, line=line)
    if value == "fence":
        tz.next()
        tz.expect("(")
        mo = _parse_order(tz)
        tz.expect(")")
        return Fence(mo=mo, line=line)
    if value == "if":
        tz.next()
        tz.expect("(")
        cond = _parse_expr(tz)
        tz.expect(")")
        tz.expect(":")
        return IfBlock(cond=cond, line=line)
    if kind == "name":
        # local = load(...) | fadd(...) | cas(...) | expr
        local = tz.next()[1]
        tz.expect("=")
        nxt = tz.peek()
        if nxt and nxt[1] == "load":
            tz.next()
            tz.expect("(")
            obj = tz.next()
            if obj[0] != "name":
                raise tz.fail("expected object name")
            tz.expect(",")
            mo = _parse_order(tz)
            tz.expect(")")
            return Load(local=local, obj=obj[1], mo=mo, line=line)
        if nxt and nxt[1] == "fadd":
            tz.next()
            tz.expect("(")
            obj = tz.next()
            tz.expect(",")
            delta = _parse_expr(tz)
            tz.expect(",")
            mo = _parse_order(tz)
            tz.expect(")")
            return Fadd(local=local, obj=obj[1], delta=delta, mo=mo, line=line)
        if nxt and nxt[1] == "cas":
            tz.next()
            tz.expect("(")
            obj = tz.next()
            tz.expect(",")
            expect = _parse_expr(tz)
            tz.expect(",")
            desired = _parse_expr(tz)
            tz.expect(",")
            mo = _parse_order(tz)
            tz.expect(")")
            return Cas(local=local, obj=obj[1], expect=expect, desired=desired, mo=mo, line=line)
        return LocalAssign(local=local, value=_parse_expr(tz), line=line)
    raise tz.fail(f"cannot parse statement starting with {value!r}")


def parse_program(text: str) -> Program:
    """Parse and validate litmus source; raises ParseError with diagnostics."""
    diagnostics: list[Diagnostic] = []
    name = ""
    objects: dict[str, int] = {}
    threads: list[ThreadBody] = []
    asserts: list[AssertNever] = []
    expect_traces: Optional[int] = None

    lines = text.splitlines()
    # pending thread parse state: (name, indent stack of (indent, body-list))
    cur_thread: Optional[ThreadBody] = None
    # stack entries: (indent, body list, owning IfBlock or None, arm)
    block_stack: list[tuple[int, list[Stmt]]] = []
    last_if: dict[int, IfBlock] = {}  # indent -> most recent IfBlock at that indent

    def close_thread() -> None:
        nonlocal cur_thread
        if cur_thread is not None:
            threads.append(cur_thread)
            cur_thread = None
        block_stack.clear()
        last_if.clear()

    for lineno, raw in enumerate(lines, start=1):
        stripped = raw.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        try:
            indent = _indent_of(raw)
        except ParseError as pe:
            diagnostics.append(replace(pe.diagnostics[0], line=lineno))
            continue
        body_text = stripped.strip()

        try:
            if indent == 0 and body_text.startswith("program"):
                close_thread()
                parts = body_text.split()
                if len(parts) != 2:
                    raise ParseError([Diagnostic(lineno, 1, "expected: program NAME")])
                name = parts[1]
                continue
            if indent == 0 and body_text.startswith("init"):
                close_thread()
                rest = body_text[len("init"):].strip()
                for decl in rest.split(","):
                    decl = decl.strip()
                    if not decl:
                        continue
                    if "=" in decl:
                        obj, _, v = decl.partition("=")
                        obj, v = obj.strip(), v.strip()
                        try:
                            init_v = int(v)
                        except ValueError:
                            raise ParseError([Diagnostic(lineno, 1, f"bad init value {v!r}")])
                    else:
                        obj, init_v = decl, 0
                    if not obj.isidentifier():
                        raise ParseError([Diagnostic(lineno, 1, f"bad object name {obj!r}")])
                    if obj in objects:
                        raise ParseError([Diagnostic(lineno, 1, f"duplicate object {obj!r}")])
                    objects[obj] = init_v
                continue
            if indent == 0 and body_text.startswith("thread"):
                close_thread()
                header = body_text[len("thread"):].strip()
                if not header.endswith(":"):
                    raise ParseError([Diagnostic(lineno, 1, "expected: thread NAME:")])
                tname = header[:-1].strip()
                if not tname.isidentifier():
                    raise ParseError([Diagnostic(lineno, 1, f"bad thread name {tname!r}")])
                if any(t.name == tname for t in threads):
                    raise ParseError([Diagnostic(lineno, 1, f"duplicate thread {tname!r}")])
                cur_thread = ThreadBody(tname, [])
                block_stack.clear()
                block_stack.append((-1, cur_thread.body))
                last_if.clear()
                continue
            if indent == 0 and body_text.startswith("assert"):
                close_thread()
                rest = body_text[len("assert"):].strip()
                if not rest.startswith("never"):
                    raise ParseError([Diagnostic(lineno, 1, "only 'assert never (...)' is supported")])
                expr_text = rest[len("never"):].strip()
                tz = _Tokenizer(expr_text, lineno)
                expr = _parse_expr(tz, allow_refs=True)
                if not tz.at_end():
                    raise tz.fail("trailing tokens after assert predicate")
                asserts.append(AssertNever(text=expr_text, expr=expr, line=lineno))
                continue
            if indent == 0 and body_text.startswith("expect"):
                close_thread()
                parts = body_text.replace("=", " = ").split()
                if len(parts) != 4 or parts[1] != "traces" or parts[2] != "=":
                    raise ParseError([Diagnostic(lineno, 1, "expected: expect traces = N")])
                expect_traces = int(parts[3])
                continue

            # statement line inside a thread
            if cur_thread is None:
                raise ParseError([Diagnostic(lineno, 1, f"statement outside a thread: {body_text!r}")])
            while block_stack and indent <= block_stack[-1][0]:
                block_stack.pop()
            if not block_stack:
                raise ParseError([Diagnostic(lineno, indent + 1, "bad indentation")])
            tz = _Tokenizer(stripped.strip(), lineno)
            first = tz.peek()
            if first and first[1] == "else":
                tz.next()
                tz.expect(":")
                if not tz.at_end():
                    raise tz.fail("trailing tokens after else:")
                owner = last_if.get(indent)
                if owner is None:
                    raise ParseError([Diagnostic(lineno, indent + 1, "else without matching if")])
                block_stack.append((indent, owner.else_body))
                continue
            stmt = _parse_statement(tz)
            if not tz.at_end():
                raise tz.fail("trailing tokens after statement")
            block_stack[-1][1].append(stmt)
            if isinstance(stmt, IfBlock):
                last_if[indent] = stmt
                block_stack.append((indent, stmt.then_body))
        except ParseError as pe:
            diagnostics.extend(pe.diagnostics)

    close_thread()
    if diagnostics:
        raise ParseError(diagnostics)

    prog = Program(name=name or "unnamed", objects=objects, threads=threads,
                   asserts=asserts, expect_traces=expect_traces)
    validate(prog)
    return prog


# ---------------------------------------------------------------------------
# Validation and dependence analysis
# ---------------------------------------------------------------------------

def validate(prog: Program) -> None:
    """Check object declarations and local def-before-use; compute the
    per-statement influence sets used by the dependence predicate."""
    diagnostics: list[Diagnostic] = []

    for t in prog.threads:

        def walk(body: list[Stmt], ctrl: frozenset[int],
                 defined: set[str], taint: dict[str, frozenset[int]]) -> None:
            for s in body:
                reads = stmt_locals_read(s)
                for loc in reads:
                    if loc in prog.objects:
                        diagnostics.append(Diagnostic(
                            s.line, 1,
                            f"thread {t.name}: shared object {loc!r} in expression;"
                            " bind it to a local with load() first"))
                    elif loc not in defined:
                        diagnostics.append(Diagnostic(
                            s.line, 1, f"thread {t.name}: local {loc!r} used before assignment"))
                for obj in stmt_objs(s):
                    if obj not in prog.objects:
                        diagnostics.append(Diagnostic(
                            s.line, 1, f"thread {t.name}: undeclared object {obj!r}"))
                data = frozenset().union(*(taint.get(l, frozenset()) for l in reads)) \
                    if reads else frozenset()
                s.influences = data | ctrl
                if isinstance(s, IfBlock):
                    inner_ctrl = ctrl | data | {s.uid}
                    def_then, taint_then = set(defined), dict(taint)
                    walk(s.then_body, inner_ctrl, def_then, taint_then)
                    def_else, taint_else = set(defined), dict(taint)
                    walk(s.else_body, inner_ctrl, def_else, taint_else)
                    # a local is defined after the branch iff defined on both arms
                    defined.clear()
                    defined.update(def_then & def_else)
                    for l in def_then & def_else:
                        taint[l] = taint_then.get(l, frozenset()) | taint_else.get(l, frozenset())
                else:
                    for loc in stmt_locals_written(s):
                        defined.add(loc)
                        taint[loc] = frozenset([s.uid]) | data | ctrl

        walk(t.body, frozenset(), set(), {})

    if diagnostics:
        raise ParseError(diagnostics)


# ---------------------------------------------------------------------------
# Pretty-printing
# ---------------------------------------------------------------------------

def _render_stmt(s: Stmt, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if isinstance(s, Store):
        out.append(f"{pad}store({s.obj}, {render_expr(s.value)}, {s.mo})")
    elif isinstance(s, Load):
        out.append(f"{pad}{s.local} = load({s.obj}, {s.mo})")
    elif isinstance(s, Fadd):
        out.append(f"{pad}{s.local} = fadd({s.obj}, {render_expr(s.delta)}, {s.mo})")
    elif isinstance(s, Cas):
        out.append(f"{pad}{s.local} = cas({s.obj}, {render_expr(s.expect)}, "
                   f"{render_expr(s.desired)}, {s.mo})")
    elif isinstance(s, Fence):
        out.append(f"{pad}fence({s.mo})")
    elif isinstance(s, LocalAssign):
        out.append(f"{pad}{s.local} = {render_expr(s.value)}")
    elif isinstance(s, IfBlock):
        out.append(f"{pad}if ({render_expr(s.cond)}):")
        for inner in s.then_body:
            _render_stmt(inner, indent + 1, out)
        if s.else_body:
            out.append(f"{pad}else:")
            for inner in s.else_body:
                _render_stmt(inner, indent + 1, out)


def pretty_print(prog: Program) -> str:
    out = [f"program {prog.name}"]
    if prog.objects:
        out.append("init " + ", ".join(f"{o} = {v}" for o, v in prog.objects.items()))
    for t in prog.threads:
        out.append(f"thread {t.name}:")
        for s in t.body:
            _render_stmt(s, 1, out)
    for a in prog.asserts:
        out.append(f"assert never {a.text}")
    if prog.expect_traces is not None:
        out.append(f"expect traces = {prog.expect_traces}")
    return "\n".join(out) + "\n"


def structurally_equal(a: Program, b: Program) -> bool:
    """Structural identity ignoring statement uids and line numbers."""
    def canon_stmt(s: Stmt) -> tuple:
        if isinstance(s, IfBlock):
            return ("if", render_expr(s.cond),
                    tuple(canon_stmt(x) for x in s.then_body),
                    tuple(canon_stmt(x) for x in s.else_body))
        if isinstance(s, Store):
            return ("store", s.obj, render_expr(s.value), s.mo)
        if isinstance(s, Load):
            return ("load", s.local, s.obj, s.mo)
        if isinstance(s, Fadd):
            return ("fadd", s.local, s.obj, render_expr(s.delta), s.mo)
        if isinstance(s, Cas):
            return ("cas", s.local, s.obj, render_expr(s.expect), render_expr(s.desired), s.mo)
        if isinstance(s, Fence):
            return ("fence", s.mo)
        if isinstance(s, LocalAssign):
            return ("assign", s.local, render_expr(s.value))
        raise TypeError(s)

    return (a.name == b.name and a.objects == b.objects
            and a.expect_traces == b.expect_traces
            and [x.text for x in a.asserts] == [x.text for x in b.asserts]
            and [t.name for t in a.threads] == [t.name for t in b.threads]
            and all(tuple(canon_stmt(s) for s in ta.body) == tuple(canon_stmt(s) for s in tb.body)
                    for ta, tb in zip(a.threads, b.threads)))
