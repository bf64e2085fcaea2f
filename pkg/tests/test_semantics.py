from collections import Counter

import pytest
from fixtures import STUCK_FIXTURES

from ghostlang import scheduler as sc, syntax as S, wellfounded as wf
from ghostlang.semantics import (
    ALREADY_VALUE, SelectedThreadComplete, bigstep, compare_safe, decompose, machine_step,
    plug, value_eq,
)
from ghostlang.state import FINISHED, State, init_config, validate


def prog(body, degrees="atoms(1)", levels="atoms(1)", init="", names=""):
    return S.parse(f"degrees = {degrees}\nlevels = {levels}\n{names}"
                   f"init_callperms = [{init}]\nmain =\n  {body}\n")


def run_plain(body, **kw):
    ex = sc.run(prog(body, **kw), sc.RoundRobin(), 10_000, "plain")
    assert ex.status == "AllFinished", ex.status_text()
    return ex.final


def eval_main(text):
    """Value of a closed pure expression, reduced one step at a time."""
    e = S.parse_expr(text)
    st = State(obligations={1: Counter()}, call_perms={1: Counter()}, expect_perms={1: Counter()})
    out = bigstep(st, 1, e, mode="plain")
    assert not hasattr(out, "reason"), out
    return out[0]


@pytest.mark.parametrize("text,value", [
    ("1 + 2 * 3", S.VInt(7)),
    ("7 % 3", S.VInt(1)),
    ("(0 - 7) % 3", S.VInt(-1)),
    ("7 % (0 - 3)", S.VInt(1)),
    ("if 1 < 2 then 10 else 20", S.VInt(10)),
    ("fst (1, 2) + snd (1, 2)", S.VInt(3)),
    ("match inr 4 with inl a -> a | inr b -> b + 1 end", S.VInt(5)),
    ("not (3 <= 2)", S.TRUE),
    ("- 4", S.VInt(-4)),
    ("let x = 2 in let y = x + x in y * y", S.VInt(16)),
    ("inl 1 = inl 1", S.TRUE),
    ("(1, 2) = 1", S.FALSE),
])
def test_pure_reduction(text, value):
    assert eval_main(text) == value


def test_evaluation_order_is_right_to_left():
    e = S.parse_expr("!loc(0) + !loc(1)")
    frames, redex = decompose(e)
    assert redex == S.Load(S.VLoc(1))
    assert plug(frames, S.VInt(1)) == S.BinOp("+", S.Load(S.VLoc(0)), S.VInt(1))
    assert decompose(S.VInt(3)) == ALREADY_VALUE


def test_compare_safety():
    assert compare_safe(S.VInt(1)) and compare_safe(S.VInjL(S.TRUE))
    assert not compare_safe(S.VPair(S.VInt(1), S.VInt(2)))
    assert value_eq(S.VPair(S.UNIT, S.UNIT), S.VPair(S.UNIT, S.UNIT)) == "Unsafe"
    assert value_eq(S.VPair(S.UNIT, S.UNIT), S.VInt(1)) is False


def test_heap_primitives():
    c = run_plain("let l = AllocN 3 0 in l[1] := 5; let o = CAS (l +. 2) 0 9 in "
                  "let x = Xchg l 4 in let y = FAA (l +. 1) 2 in ()")
    assert [c.state.heap[k] for k in range(3)] == [S.VInt(4), S.VInt(7), S.VInt(9)]


def test_free_then_load_is_stuck():
    ex = sc.run(prog("let l = ref 1 in Free l; !l"), sc.RoundRobin(), 100, "plain")
    assert ex.status == "Stuck" and ex.reason.kind == "HeapFault"


def test_call_consumes_bottom_then_cheapest_positive():
    p = prog("let f = fun x -> x in f 1; f 2; ()", degrees="atoms(3)",
             init="bot, (2), (1)")
    ex = sc.run(p)
    assert ex.status == "AllFinished"
    assert +ex.final.state.call_perms[1] == Counter([wf.Elem((2,))])


def test_strict_mode_refuses_auto_lowering():
    p = prog("let f = fun x -> x in f 1", degrees="atoms(2)", init="(1)")
    assert sc.run(p, mode="sound").status == "AllFinished"
    ex = sc.run(p, mode="strict")
    assert ex.status == "Stuck" and ex.reason.kind == "MissingCallPerm"


def test_lower_replaces_one_permission():
    p = prog("ghost { lower (1) to 3 times (0) at cur }; ()", degrees="atoms(2)", init="(1)")
    ex = sc.run(p)
    assert +ex.final.state.call_perms[1] == Counter({wf.Elem((0,)): 3})


def test_signal_lifecycle_and_expect():
    p = prog("let ghost s = NewSignal cur 0 in "
             "fork [s] { ghost { SetSignal cur s } }; "
             "ghost { NewExpectPerm cur s (1) bot; Expect cur s bot; Expect cur s bot }; ()",
             degrees="atoms(2)", init="(1)")
    ex = sc.run(p, sc.Scripted((1, 1, 1, 1)), 4)
    st = ex.final.state
    assert st.call_perms[1][wf.BOTTOM] == 2
    assert st.expect_perms[1][(0, wf.BOTTOM)] == 1
    assert st.signals[0] == (wf.Elem((0,)), False)
    assert st.obligations[2] == Counter({(0, wf.Elem((0,))): 1})
    main_first = sc.script_from(p, lambda i, c, runnable: runnable[0], 100)
    done = sc.replay(p, main_first)
    assert done.status == "AllFinished"
    assert done.final.state.signals[0][1] is True
    assert done.final.state.obligations[2] is FINISHED


def test_unsound_expect_needs_no_permission():
    fx = next(f for f in STUCK_FIXTURES if f.reason == "ExpectWithoutPermission")
    p = S.parse(fx.text)
    assert sc.run(p, mode="sound").reason.kind == "ExpectWithoutPermission"
    ex = sc.run(p, mode="unsound_expect")
    assert ex.status == "AllFinished"
    assert any("expect" in s.deltas for s in ex.steps)


def test_atomic_block_is_one_step():
    ex = sc.run(prog("let l = ref 0 in atomic { let x = !l in ghost { () }; l := x + 1 }"),
                sc.RoundRobin(), 100, "sound")
    rules = [s.rule for s in ex.steps]
    assert "AtomicBlockS" in rules
    assert ex.final.state.heap[0] == S.VInt(1)


def test_fork_inside_atomic_is_stuck():
    ex = sc.run(prog("atomic { fork [] { () } }"), sc.RoundRobin(), 10, "plain")
    assert ex.status == "Stuck" and ex.reason.kind == "ForkInAtomic"


def test_abort_ends_every_thread():
    ex = sc.run(prog("fork [] { while true { () } }; Abort"), sc.RoundRobin(), 100, "plain")
    assert ex.status == "Aborted"


def test_ghost_in_plain_mode_is_stuck():
    ex = sc.run(prog("let ghost s = NewSignal cur 0 in ()"), sc.RoundRobin(), 10, "plain")
    assert ex.status == "Stuck"


def test_finished_thread_cannot_step():
    c = init_config(prog("()"))
    r = machine_step(c, 1, "plain")
    r = machine_step(r.config, 1, "plain")
    with pytest.raises(SelectedThreadComplete):
        machine_step(r.config, 1, "plain")


def test_prophecy_is_unsupported():
    ex = sc.run(prog("let p = NewProph in ()"), sc.RoundRobin(), 10, "plain")
    assert ex.reason.kind == "UnsupportedProphecy"


def test_atomic_budget():
    p = prog("let l = ref 0 in atomic { let f = rec f x -> f x in let r = f 0 in l := 1 }")
    ex = sc.run(p, sc.RoundRobin(), 100, "plain", budget=500)
    assert ex.status == "Stuck" and ex.reason.kind == "AtomicBudgetExceeded"


def test_configuration_validation():
    c = init_config(prog("()", init="bot"))
    assert validate(c, wf.Atoms(1), wf.Atoms(1)) == []


@pytest.mark.parametrize("fx", STUCK_FIXTURES, ids=[f.name for f in STUCK_FIXTURES])
def test_stuck_reason_at_exact_site(fx):
    p = S.parse(fx.text)
    assert S.check_aux_discipline(p).ok
    ex = sc.run(p)
    assert ex.status == "Stuck"
    assert ex.reason.kind == fx.reason
    assert str(ex.reason) == fx.detail
    assert ex.stuck_tid == fx.tid
    assert len(ex.steps) == fx.step
    _, redex = decompose(ex.final.expr_of(ex.stuck_tid))
    assert type(redex).__name__ == fx.redex
