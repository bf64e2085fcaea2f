import pytest
from hypothesis import given, settings, strategies as st

from ghostlang import corpus, syntax as S
from ghostlang import wellfounded as wf

NAMES = ["x", "y", "z", "f"]

ints = st.integers(-5, 50).map(S.VInt)
leaves = st.one_of(ints, st.booleans().map(S.VBool), st.just(S.UNIT),
                   st.sampled_from(NAMES).map(S.Var))
binders = st.sampled_from(NAMES + [None])


def _extend(sub):
    return st.one_of(
        st.builds(S.BinOp, st.sampled_from(["+", "-", "*", "%", "<", "<=", "=", "!="]), sub, sub),
        st.builds(S.UnOp, st.sampled_from(["neg", "not"]), sub),
        st.builds(S.If, sub, sub, sub),
        st.builds(S.Pair, sub, sub),
        st.builds(S.Fst, sub),
        st.builds(S.Snd, sub),
        st.builds(S.InjL, sub),
        st.builds(S.Match, sub, st.sampled_from(NAMES), sub, st.sampled_from(NAMES), sub),
        st.builds(S.Let, binders, sub, sub),
        st.builds(S.Load, sub),
        st.builds(S.Store, sub, sub),
        st.builds(S.FAA, sub, sub),
        st.builds(S.CmpXchg, sub, sub, sub),
        st.builds(S.AllocN, sub, sub),
        st.builds(lambda f, x, b: S.Rec(f, x, None, b), binders, binders, sub),
        st.builds(lambda f, a: S.App(f, a, S.UNIT), sub, sub),
        st.builds(lambda b: S.Fork((), b), sub),
        st.builds(S.Atomic, sub),
    )


def _extend_aux(sub):
    return st.one_of(
        st.builds(S.AuxApp, sub, sub),
        st.builds(S.AuxLam, binders, sub),
        st.builds(S.LoadAux, sub),
        st.builds(S.StoreAux, sub, sub),
        st.builds(S.BinOp, st.sampled_from(["+", "="]), sub, sub),
        st.builds(lambda f, a: S.App(f, a, S.UNIT), sub, sub),
        st.builds(S.Let, binders, sub, sub),
    )


aux_exprs = st.recursive(leaves, _extend_aux, max_leaves=6)


def _with_aux(sub):
    return st.one_of(
        _extend(sub),
        st.builds(S.LetAux, binders, aux_exprs, sub),
        st.builds(lambda f, a, g: S.App(f, a, g), sub, sub, aux_exprs),
    )


real_exprs = st.recursive(leaves, _with_aux, max_leaves=12)


@settings(max_examples=400, deadline=None)
@given(real_exprs)
def test_print_parse_round_trip(e):
    text = S.pretty_print(e)
    assert S.parse_expr(text) == e, text


@pytest.mark.parametrize("name", sorted(corpus.BUILDERS))
def test_corpus_round_trips(name):
    p = corpus.get(name).prog
    again = S.parse(S.pretty_print(p))
    assert again == p
    assert S.pretty_print(again) == S.pretty_print(p)


def test_application_reads_by_context():
    assert S.parse_expr("f x") == S.App(S.Var("f"), S.Var("x"), S.UNIT)
    assert S.parse_expr("f x", aux=True) == S.AuxApp(S.Var("f"), S.Var("x"))
    assert S.parse_expr("f x ghost y") == S.App(S.Var("f"), S.Var("x"), S.Var("y"))
    e = S.parse_expr("ghost { k () }; ()")
    assert isinstance(e, S.LetAux) and isinstance(e.e1, S.AuxApp)


def test_operator_precedence():
    e = S.parse_expr("1 + 7 % 3 * 2")
    assert e == S.BinOp("+", S.VInt(1),
                        S.BinOp("*", S.BinOp("%", S.VInt(7), S.VInt(3)), S.VInt(2)))
    assert S.parse_expr("a - b - c") == S.BinOp("-", S.BinOp("-", S.Var("a"), S.Var("b")), S.Var("c"))


def test_while_desugars_to_recursive_loop():
    e = S.parse_expr("while !x { () }")
    assert isinstance(e, S.App) and isinstance(e.fn, S.Rec)
    assert S.check_aux_discipline(e).ok


def test_header_declarations():
    p = S.parse("""
degrees = lexsum(atoms(2), atoms(1))
levels = atoms(3)
name TOP = (1,0)
init_callperms = [TOP, bot, (0,1)]
main =
  ()
""")
    assert p.degrees == wf.LexSum((wf.Atoms(2), wf.Atoms(1)))
    assert p.levels == wf.Atoms(3)
    assert p.init_callperms == (wf.Elem((1, 0)), wf.BOTTOM, wf.Elem((0, 1)))


@pytest.mark.parametrize("text", [
    "let x = in x",
    "fun -> 1",
    "(1, 2",
    "1 +",
    "while { () }",
])
def test_parse_errors_carry_position(text):
    with pytest.raises(S.ParseError) as info:
        S.parse_expr(text)
    assert info.value.line >= 1


def test_bad_degree_rejected():
    with pytest.raises(S.ParseError):
        S.parse("degrees = atoms(2)\nlevels = atoms(1)\ninit_callperms = [(5)]\nmain =\n  ()\n")


def test_free_vars_and_substitution():
    e = S.parse_expr("fun x -> x + y")
    assert S.free_vars(e) == {"y"}
    sub = S.substitute(e, "y", S.VInt(3))
    assert S.free_vars(sub) == frozenset()
    # bound occurrences are left alone
    assert S.substitute(e, "x", S.VInt(3)) == e


@settings(max_examples=200, deadline=None)
@given(real_exprs, st.sampled_from(NAMES))
def test_substitution_removes_variable(e, x):
    out = S.substitute(e, x, S.VInt(0))
    assert x not in S.free_vars(out)
    assert S.free_vars(out) <= S.free_vars(e)
    if x not in S.free_vars(e):
        assert out == e


# Discipline ---------------------------------------------------------------

DISCIPLINE_FIXTURES = [
    ("anf", "let a = (let b = 1 in b) + 2 in a"),
    ("aux construct outside let-aux", "let s = NewSignal cur 0 in ()"),
    ("function shape", "let ghost g = gfun _ -> fun x -> x in ()"),
    ("aux variable escapes to real code", "let ghost g = 1 in let r = g + 1 in r"),
    ("real-heap write in aux code", "let l = ref 0 in ghost { l := 1 }; ()"),
    ("real function application in aux code", "let f = fun x -> x in ghost { f 1 ghost () }; ()"),
    ("atomic block shape", "let l = ref 0 in atomic { l := 1; l := 2 }"),
    ("prophecy construct", "let p = NewProph in ()"),
]


def test_fixture_list_covers_every_clause():
    assert sorted(c for c, _ in DISCIPLINE_FIXTURES) == sorted(S.CLAUSES)


@pytest.mark.parametrize("clause,text", DISCIPLINE_FIXTURES, ids=[c for c, _ in DISCIPLINE_FIXTURES])
def test_discipline_flags_clause(clause, text):
    rep = S.check_aux_discipline(S.parse_expr(text))
    assert not rep.ok
    assert clause in rep.clauses()


@pytest.mark.parametrize("name", sorted(corpus.BUILDERS))
def test_corpus_is_disciplined(name):
    assert S.check_aux_discipline(corpus.get(name).prog).ok
