"""Erasure of auxiliary code and state, and an empirical simulation check
relating instrumented runs to runs of the erased program."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace

from . import syntax as S
from . import wellfounded as wf
from .scheduler import RoundRobin, Scripted, run
from .semantics import machine_step
from .state import Config, State, canonical_hash, init_config


class DisciplineViolation(Exception):
    def __init__(self, report):
        first = report.violations[0]
        super().__init__(f"{first.clause}: {first.message}")
        self.report = report


def _single_primitive(e) -> bool:
    return isinstance(e, S.REAL_HEAP_OPS) and all(
        isinstance(c, (S.Val, S.Var)) for c in S.subterms(e))


def _erase(e):
    T = type(e)
    if T is S.LetAux:
        return _erase(e.e2)
    if T in (S.Rec, S.VRec):
        return T(e.f, e.x, None, _erase(e.body))
    if T is S.App:
        return S.App(_erase(e.fn), _erase(e.arg), S.UNIT)
    if T is S.Fork:
        return S.Fork((), _erase(e.body))
    if T is S.Atomic:
        body = _erase(e.body)
        return body if _single_primitive(body) else S.Atomic(body)
    if T is S.Match:
        return S.Match(_erase(e.e), e.x, _erase(e.l), e.y, _erase(e.r))
    if T in (S.Let,):
        return S.Let(e.x, _erase(e.e1), _erase(e.e2))
    names = S._EXPR_FIELDS.get(T, ())
    if not names:
        return e
    return replace(e, **{n: _erase(getattr(e, n)) for n in names})


def erase_expr(e: S.Expr, check: bool = True) -> S.Expr:
    if check:
        rep = S.check_aux_discipline(e)
        if not rep.ok:
            raise DisciplineViolation(rep)
    return _erase(e)


def erase_prog(p: S.Prog, check: bool = True) -> S.Prog:
    main = erase_expr(p.main, check)
    return S.Prog(wf.Atoms(1), wf.Atoms(1), (), main)


def erase_state(st: State, tids=None) -> State:
    """Keep the real heap; drop every piece of auxiliary state.  Threads
    stay registered (with empty ghost maps) so the plain dialect can run."""
    tids = sorted(tids if tids is not None else st.obligations)
    return State(
        heap={l: _erase(v) for l, v in st.heap.items()},
        obligations={t: Counter() for t in tids},
        call_perms={t: Counter() for t in tids},
        expect_perms={t: Counter() for t in tids},
        next_loc=st.next_loc,
    )


def erase_config(c: Config, check: bool = False) -> Config:
    pool = tuple((t, erase_expr(e, check)) for t, e in c.pool)
    return Config(pool, erase_state(c.state, [t for t, _ in c.pool]))


# Simulation ----------------------------------------------------------------------

@dataclass
class SimulationReport:
    ok: bool
    real_steps: int
    stutters: int
    projected: list
    failures: list = field(default_factory=list)
    final_heap_match: bool = True


def simulate(p: S.Prog, ex, max_plain: int = 3) -> SimulationReport:
    """Check that erasing every configuration of the instrumented run
    ``ex`` yields a run of the erased program under plain semantics.

    Each instrumented step either leaves the erased configuration unchanged
    (an auxiliary step) or is matched by at most ``max_plain`` plain steps
    of the same thread.  The projected schedule is then replayed from the
    erased program and final heaps are compared.
    """
    failures = []
    projected = []
    stutters = 0
    c = init_config(p)
    plain = erase_config(c)
    erased_p = erase_prog(p)
    if canonical_hash(plain) != canonical_hash(init_config_plain(erased_p)):
        failures.append((0, "initial configurations differ"))
    for step in ex.steps:
        r = machine_step(c, step.tid, ex.header.get("mode", "sound"))
        if r.kind == "stuck":
            failures.append((step.index, f"instrumented replay stuck: {r.reason}"))
            break
        post = erase_config(r.config)
        target = canonical_hash(post)
        c = r.config
        if canonical_hash(plain) == target:
            stutters += 1
            continue
        matched = False
        cur = plain
        for _ in range(max_plain):
            if step.tid not in cur.runnable():
                break
            pr = machine_step(cur, step.tid, "plain")
            if pr.kind == "stuck":
                failures.append((step.index, f"plain step stuck: {pr.reason}"))
                break
            projected.append(step.tid)
            cur = pr.config
            if canonical_hash(cur) == target:
                matched = True
                break
        if not matched:
            failures.append((step.index, f"erased step of thread {step.tid} not simulated ({step.rule})"))
            break
        plain = cur
    heap_ok = True
    if not failures:
        replayed = run(erased_p, Scripted(tuple(projected)), max(len(projected), 1), "plain")
        heap_ok = replayed.final.state.heap == erase_state(c.state).heap
        if not heap_ok:
            failures.append((len(ex.steps), "final real heaps differ"))
    return SimulationReport(not failures, len(ex.steps) - stutters, stutters,
                            projected, failures, heap_ok)


def init_config_plain(p: S.Prog) -> Config:
    c = init_config(p)
    return erase_config(c)
