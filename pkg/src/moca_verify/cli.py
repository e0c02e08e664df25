"""Command-line front end.

Exit codes: 0 verified (no violations or races), 1 violation / na race /
expected-trace-count mismatch, 2 usage or parse error, 3 exploration budget
exhausted (partial report).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .ir import ParseError, parse_program, pretty_print
from .engine import ReplayError, run_sequence, walk_trace
from .relations import compute_relations
from .coherence import check_c11_oracle, check_moca
from .explorer import (
    EnumerationCapExceeded,
    ExplorationReport,
    canonical_trace_id,
    check_asserts,
    detect_na_races,
    enumerate_all,
    explore,
)
from .transform import early_write_transform

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3


def _load(path: str):
    try:
        text = Path(path).read_text()
    except OSError as e:
        click.echo(f"error: cannot read {path}: {e}", err=True)
        sys.exit(EXIT_USAGE)
    try:
        return parse_program(text)
    except ParseError as pe:
        for d in pe.diagnostics:
            click.echo(f"{path}:{d}", err=True)
        sys.exit(EXIT_USAGE)


def _text_report(report: ExplorationReport) -> str:
    lines = [
        f"program:            {report.program}",
        f"sequences_explored: {report.sequences_explored}",
        f"distinct_traces:    {report.distinct_traces}",
        f"non_mca_sequences:  {report.non_mca_sequences}",
        f"racy_sequences:     {report.racy_sequence_count}",
        f"violations:         {len(report.violations)}",
    ]
    for v in report.violations:
        lines.append(f"  assert never {v['assert']}  witness schedule: {' '.join(v['schedule'])}")
    seen = set()
    for r in report.na_races:
        key = tuple(r["events"])
        if key in seen:
            continue
        seen.add(key)
        lines.append(f"  na race: {r['events'][0]} <-> {r['events'][1]}"
                     f"  witness schedule: {' '.join(r['schedule'])}")
    if report.budget_exhausted:
        lines.append("WARNING: exploration budget exhausted; report is partial")
    return "\n".join(lines)


def _relation_dump(program, schedule: list[str]) -> dict:
    state = run_sequence(program, schedule)
    seq = state.sequence()
    rels = compute_relations(seq)
    hb_edges = sorted(f"{a.pretty()} -> {b.pretty()}" for a, b in rels.hb_pairs())
    return {
        "schema": "moca-verify-relations/1",
        "schedule": schedule,
        "events": [e.pretty() for e in seq.events],
        "rf": sorted(f"{w.pretty()} -> {r.pretty()}" for r, w in seq.rf.items()),
        "sw": sorted(f"{a.pretty()} -> {b.pretty()}" for a, b in rels.sw),
        "dob": sorted(f"{a.pretty()} -> {b.pretty()}" for a, b in rels.dob),
        "hb": hb_edges,
        "mo": {obj: [w.pretty() for w in ws] for obj, ws in rels.mo.items()},
        "to": [e.pretty() for e in rels.sc.order] if rels.sc.order is not None else None,
        "coherent": check_moca(seq, rels).ok,
        "c11_coherent": check_c11_oracle(seq, rels).ok,
    }


def _relations_dot(dump: dict) -> str:
    out = ["digraph relations {"]
    for kind, color in (("rf", "darkgreen"), ("sw", "purple"), ("dob", "orange")):
        for edge in dump[kind]:
            a, _, b = edge.partition(" -> ")
            out.append(f'  "{a}" -> "{b}" [label="{kind}", color={color}];')
    for edge in dump["hb"]:
        a, _, b = edge.partition(" -> ")
        out.append(f'  "{a}" -> "{b}" [color=gray, style=dashed];')
    out.append("}")
    return "\n".join(out)


@click.group()
def main() -> None:
    """Model checker for litmus programs under multi-copy-atomic semantics."""


@main.command()
@click.argument("path", type=click.Path())
@click.option("--json", "as_json", is_flag=True, help="emit a JSON report")
@click.option("--max-seqs", type=int, default=1_000_000, show_default=True)
@click.option("--max-depth", type=int, default=10_000, show_default=True)
@click.option("--no-early-write", is_flag=True,
              help="diagnostic: skip the early-write transformation")
@click.option("--no-enforce-expect", is_flag=True,
              help="ignore 'expect traces = N' annotations")
@click.option("--emit-transformed", is_flag=True,
              help="also print the transformed program source")
@click.option("--dump-relations", is_flag=True,
              help="include per-trace relation edge lists in the JSON report")
@click.option("--dump-trace", is_flag=True,
              help="print per-step shared-store snapshots of each distinct trace")
@click.option("--replay", "replay_file", type=click.Path(), default=None,
              help="replay a witness schedule (JSON list of unit ids) instead of exploring")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="worker count; branches are explored deterministically and"
                   " the current implementation runs them serially")
def verify(path, as_json, max_seqs, max_depth, no_early_write, no_enforce_expect,
           emit_transformed, dump_relations, dump_trace, replay_file, jobs) -> None:
    """Explore all traces of a litmus program; report violations and races."""
    if jobs < 1:
        click.echo("error: --jobs must be >= 1", err=True)
        sys.exit(EXIT_USAGE)
    program = _load(path)

    if replay_file is not None:
        _replay(program, replay_file, not no_early_write, dump_trace)
        return

    if emit_transformed:
        click.echo(pretty_print(early_write_transform(program)), nl=False)

    report = explore(program, max_seqs=max_seqs, max_depth=max_depth,
                     use_early_write=not no_early_write)
    payload = report.to_json()
    if dump_relations:
        target = early_write_transform(program) if not no_early_write else program
        for entry in payload["traces"]:
            entry["relations"] = _relation_dump(target, entry["schedule"])
    if dump_trace:
        target = early_write_transform(program) if not no_early_write else program
        for t in report.traces:
            click.echo(f"trace {t.trace_id}:")
            for ev, snapshot in walk_trace(target, t.schedule):
                shr = " ".join(f"{o}={v}" for o, v in sorted(snapshot.items()))
                click.echo(f"  {ev.pretty():40s} | {shr}")

    mismatch = None
    if program.expect_traces is not None and not no_enforce_expect:
        if report.distinct_traces != program.expect_traces:
            mismatch = (program.expect_traces, report.distinct_traces)
    if as_json:
        payload["expect_traces"] = program.expect_traces
        payload["expect_mismatch"] = bool(mismatch)
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        click.echo(_text_report(report))
        if mismatch:
            click.echo(f"trace-count mismatch: expected {mismatch[0]}, found {mismatch[1]}")

    if report.budget_exhausted:
        sys.exit(EXIT_BUDGET)
    if report.violations or report.na_races or mismatch:
        sys.exit(EXIT_VIOLATION)
    sys.exit(EXIT_OK)


def _replay(program, replay_file: str, use_early_write: bool, dump_trace: bool) -> None:
    try:
        schedule = json.loads(Path(replay_file).read_text())
    except (OSError, json.JSONDecodeError) as e:
        click.echo(f"error: cannot read schedule {replay_file}: {e}", err=True)
        sys.exit(EXIT_USAGE)
    target = early_write_transform(program) if use_early_write else program
    try:
        state = run_sequence(target, schedule)
    except ReplayError as e:
        click.echo(f"replay error: {e}", err=True)
        sys.exit(EXIT_USAGE)
    seq = state.sequence()
    rels = compute_relations(seq)
    races = detect_na_races(seq, rels)
    outcome = check_asserts(target, state)
    if dump_trace:
        for ev, snapshot in walk_trace(target, schedule):
            shr = " ".join(f"{o}={v}" for o, v in sorted(snapshot.items()))
            click.echo(f"  {ev.pretty():40s} | {shr}")
    click.echo(f"trace_id: {canonical_trace_id(seq, rels)}")
    click.echo("final shared: " + " ".join(f"{o}={v}" for o, v in sorted(state.shr.items())))
    click.echo(f"coherent: {check_moca(seq, rels).ok}")
    for i in outcome.violations:
        click.echo(f"violated: assert never {target.asserts[i].text}")
    for a, b in races:
        click.echo(f"na race: {a.pretty()} <-> {b.pretty()}")
    sys.exit(EXIT_VIOLATION if (outcome.violations or races) else EXIT_OK)


@main.command("enumerate")
@click.argument("path", type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@click.option("--cap", type=int, default=12, show_default=True,
              help="refuse programs with more schedulable events than this")
@click.option("--no-early-write", is_flag=True)
def enumerate_cmd(path, as_json, cap, no_early_write) -> None:
    """Brute-force oracle: enumerate every coherent interleaving."""
    program = _load(path)
    try:
        traces = enumerate_all(program, cap=cap, use_early_write=not no_early_write)
    except EnumerationCapExceeded as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_USAGE)
    if as_json:
        click.echo(json.dumps({
            "schema": "moca-verify-enumeration/1",
            "program": program.name,
            "distinct_traces": len(traces),
            "traces": {tid: sched for tid, sched in sorted(traces.items())},
        }, indent=2, sort_keys=True))
    else:
        click.echo(f"program:         {program.name}")
        click.echo(f"distinct_traces: {len(traces)}")
    sys.exit(EXIT_OK)


@main.command("transform")
@click.argument("path", type=click.Path())
@click.option("--emit-transformed", is_flag=True, default=True,
              help="print the transformed program (default)")
def transform_cmd(path, emit_transformed) -> None:
    """Print the early-write transformed program."""
    program = _load(path)
    click.echo(pretty_print(early_write_transform(program)), nl=False)
    sys.exit(EXIT_OK)


@main.command("relations")
@click.argument("path", type=click.Path())
@click.option("--dot", is_flag=True, help="emit DOT graphs instead of JSON")
@click.option("--no-early-write", is_flag=True)
def relations_cmd(path, dot, no_early_write) -> None:
    """Explore and dump hb/sw/dob/rf/mo/to edges for each distinct trace."""
    program = _load(path)
    report = explore(program, use_early_write=not no_early_write)
    target = early_write_transform(program) if not no_early_write else program
    dumps = [_relation_dump(target, t.schedule) for t in report.traces]
    if dot:
        for d in dumps:
            click.echo(_relations_dot(d))
    else:
        click.echo(json.dumps(dumps, indent=2, sort_keys=True))
    sys.exit(EXIT_OK)
