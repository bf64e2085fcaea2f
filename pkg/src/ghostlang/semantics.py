"""Small-step engine: contexts, head rules, big-step evaluation for atomic
blocks and auxiliary code, and whole-machine steps.

Modes:
  sound           all premises checked
  unsound_expect  Expect needs no expect permission
  strict          like sound, but calls never lower a permission implicitly
  plain           the erased dialect: no ghost state is touched at all
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace

from . import syntax as S
from . import wellfounded as wf
from .state import FINISHED, Config, State, Stuck, StuckReason, _spawn, fresh_tid

MODES = ("sound", "unsound_expect", "strict", "plain")
DEFAULT_BUDGET = 10**6


class SelectedThreadComplete(Exception):
    pass


# Outcomes -------------------------------------------------------------------

@dataclass
class Reduced:
    expr: S.Expr
    state: State
    forks: list
    rule: str


@dataclass
class Value:
    v: S.Val


@dataclass
class Aborted:
    pass


@dataclass
class StuckOutcome:
    reason: StuckReason


# Value comparison -----------------------------------------------------------

_LITS = (S.VInt, S.VBool, S.VLoc, S.VUnit, S.VSig, S.VDeg, S.VLev)


def compare_safe(v: S.Val) -> bool:
    if isinstance(v, _LITS):
        return True
    if isinstance(v, (S.VInjL, S.VInjR)):
        return isinstance(v.v, _LITS)
    return False


def value_eq(a: S.Val, b: S.Val):
    """True/False when either side is compare-safe, else the string "Unsafe"."""
    if compare_safe(a) or compare_safe(b):
        return a == b
    return "Unsafe"


# Evaluation contexts ---------------------------------------------------------

# Operand slots in evaluation order (right to left).  Nodes absent from this
# table are redexes as soon as they are reached.
EVAL_SLOTS = {
    S.App: ("arg", "fn"), S.AuxApp: ("arg", "fn"),
    S.UnOp: ("e",), S.BinOp: ("r", "l"), S.If: ("c",),
    S.Pair: ("b", "a"), S.Fst: ("e",), S.Snd: ("e",), S.InjL: ("e",), S.InjR: ("e",),
    S.Match: ("e",), S.Let: ("e1",),
    S.AllocN: ("v", "n"), S.AllocNAux: ("v", "n"),
    S.Free: ("l",), S.Load: ("l",), S.LoadAux: ("l",),
    S.Store: ("v", "l"), S.StoreAux: ("v", "l"),
    S.CmpXchg: ("e2", "e1", "l"), S.Xchg: ("v", "l"), S.FAA: ("v", "l"),
    S.NewSignal: ("lev", "t"), S.SetSignal: ("s", "t"),
    S.NewExpectPerm: ("d2", "d", "s", "t"), S.Expect: ("d", "s", "t"),
    S.Lower: ("t", "d2", "n", "d"),
}

ALREADY_VALUE = "AlreadyValue"


def decompose(e: S.Expr):
    """Split ``e`` into (frames, redex).  Frames run outermost first; each
    is (node, slot).  Values give ALREADY_VALUE."""
    if isinstance(e, S.Val):
        return ALREADY_VALUE
    frames = []
    while True:
        slots = EVAL_SLOTS.get(type(e), ())
        for slot in slots:
            child = getattr(e, slot)
            if not isinstance(child, S.Val):
                frames.append((e, slot))
                e = child
                break
        else:
            return tuple(frames), e


def plug(frames, e: S.Expr) -> S.Expr:
    for node, slot in reversed(frames):
        e = replace(node, **{slot: e})
    return e


def summarize(e: S.Expr) -> str:
    if S.size(e) <= 12:
        return " ".join(S.pretty_print(e).split())
    return type(e).__name__


# Head steps -------------------------------------------------------------------

class _Abort(Exception):
    pass


class _Run:
    """Mutable scratch for one machine step; owns a private state copy."""

    def __init__(self, state: State, tid: int, mode: str, budget: int = DEFAULT_BUDGET):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.st = state
        self.tid = tid
        self.mode = mode
        self.plain = mode == "plain"
        self.budget = budget
        self.events = []
        self.forks = []

    # helpers
    def _int(self, v, what):
        if not isinstance(v, S.VInt):
            raise Stuck("NoRuleApplies", f"{what} expects an integer, got {S.pretty_print(v)}")
        return v.n

    def _loc(self, v, what):
        if not isinstance(v, S.VLoc):
            raise Stuck("NoRuleApplies", f"{what} expects a location, got {S.pretty_print(v)}")
        return v.loc

    def _tid(self, v):
        t = self._int(v, "thread argument")
        if t not in self.st.obligations:
            raise Stuck("NoRuleApplies", f"no thread {t}")
        return t

    def _sig(self, v):
        if not isinstance(v, S.VSig):
            raise Stuck("NoRuleApplies", f"expected a signal, got {S.pretty_print(v)}")
        return v.sig

    def _deg(self, v):
        if not isinstance(v, S.VDeg):
            raise Stuck("NoRuleApplies", f"expected a degree, got {S.pretty_print(v)}")
        return v.deg

    def _ghost(self, e):
        if self.plain:
            raise Stuck("NoRuleApplies", f"{type(e).__name__} in plain mode")

    def _aux_eval(self, e):
        return self.bigstep(e)

    # the rule table
    def head(self, e, in_big=False):
        """Fire the head rule for redex ``e``.  Returns (rule, expr)."""
        st = self.st
        T = type(e)
        if T is S.Var:
            raise Stuck("NoRuleApplies", f"free variable {e.name}")
        if T is S.Rec:
            return "Pure", S.VRec(e.f, e.x, e.y, e.body)
        if T is S.AuxLam:
            return "Pure", S.VAux(e.x, e.body)
        if T is S.App:
            fn = e.fn
            if not isinstance(fn, S.VRec):
                raise Stuck("NoRuleApplies", f"applying non-function {summarize(fn)}")
            if not self.plain:
                self._pay_call()
            auxv = self._aux_eval(e.aux)
            body = S.substitute(fn.body, fn.f, fn)
            body = S.substitute(body, fn.x, e.arg)
            body = S.substitute(body, fn.y, auxv)
            return "BetaS", body
        if T is S.AuxApp:
            fn = e.fn
            if not isinstance(fn, S.VAux):
                raise Stuck("NoRuleApplies", f"aux application of {summarize(fn)}")
            return "AuxBeta", S.substitute(fn.body, fn.x, e.arg)
        if T is S.UnOp:
            v = e.e
            if e.op == "neg" and isinstance(v, S.VInt):
                return "Pure", S.VInt(-v.n)
            if e.op == "not" and isinstance(v, S.VBool):
                return "Pure", S.VBool(not v.b)
            raise Stuck("NoRuleApplies", f"{e.op} on {S.pretty_print(v)}")
        if T is S.BinOp:
            return "Pure", self._binop(e.op, e.l, e.r)
        if T is S.If:
            if not isinstance(e.c, S.VBool):
                raise Stuck("NoRuleApplies", "if on a non-boolean")
            return "Pure", e.t if e.c.b else e.f
        if T is S.Pair:
            return "Pure", S.VPair(e.a, e.b)
        if T in (S.Fst, S.Snd):
            if not isinstance(e.e, S.VPair):
                raise Stuck("NoRuleApplies", f"projection of {summarize(e.e)}")
            return "Pure", e.e.a if T is S.Fst else e.e.b
        if T is S.InjL:
            return "Pure", S.VInjL(e.e)
        if T is S.InjR:
            return "Pure", S.VInjR(e.e)
        if T is S.Match:
            if isinstance(e.e, S.VInjL):
                return "Pure", S.substitute(e.l, e.x, e.e.v)
            if isinstance(e.e, S.VInjR):
                return "Pure", S.substitute(e.r, e.y, e.e.v)
            raise Stuck("NoRuleApplies", "match on a non-injection")
        if T is S.Let:
            return "Pure", S.substitute(e.e2, e.x, e.e1)
        if T is S.LetAux:
            v = self._aux_eval(e.e1)
            return "AuxLet", S.substitute(e.e2, e.x, v)
        if T in _HEAP_RULES:
            return _HEAP_RULES[T](self, e)
        if T is S.Fork:
            if in_big:
                raise Stuck("ForkInAtomic")
            sigs = [self._sig(self._aux_eval(s)) for s in e.sigs]
            if self.plain:
                child = fresh_tid(self.st)
                self.st.obligations[child] = Counter()
                self.st.call_perms[child] = Counter()
                self.st.expect_perms[child] = Counter()
            else:
                child = _spawn(self.st, self.tid, sigs)
            self.forks.append((child, S.Let(None, e.body, S.Finish())))
            return "ForkS", S.UNIT
        if T is S.Atomic:
            if in_big:
                raise Stuck("NoRuleApplies", "nested atomic block")
            return "AtomicBlockS", self.bigstep(e.body)
        if T is S.CurrentThread:
            return "CurrentThreadS", S.VInt(self.tid)
        if T is S.Finish:
            if self.plain:
                return "FinishS", S.UNIT
            obs = st.obligations[self.tid]
            if obs is not FINISHED and +obs:
                raise Stuck("UnfulfilledObligations", self.tid, +obs)
            st.obligations[self.tid] = FINISHED
            return "FinishS", S.UNIT
        if T is S.Abort:
            raise _Abort()
        if T in (S.NewProph, S.ResolveWith):
            raise Stuck("UnsupportedProphecy")
        if T in _GHOST_RULES:
            self._ghost(e)
            return _GHOST_RULES[T](self, e)
        raise Stuck("NoRuleApplies", type(e).__name__)

    def _pay_call(self):
        cp = self.st.call_perms[self.tid]
        if cp[wf.BOTTOM] > 0:
            cp[wf.BOTTOM] -= 1
            return
        if self.mode != "strict":
            positive = [d for d, n in cp.items() if n > 0 and d is not wf.BOTTOM]
            if positive:
                cheapest = min(positive, key=wf._key)
                cp[cheapest] -= 1
                return
        raise Stuck("MissingCallPerm", self.tid, wf.BOTTOM)

    def _binop(self, op, l, r):
        if op in ("=", "!="):
            eq = value_eq(l, r)
            if eq == "Unsafe":
                raise Stuck("UnsafeValueCompare")
            return S.VBool(eq if op == "=" else not eq)
        if op == "+.":
            if isinstance(l, S.VLoc) and isinstance(r, S.VInt):
                return S.VLoc(l.loc + r.n)
            raise Stuck("NoRuleApplies", "pointer offset needs a location and an integer")
        if not (isinstance(l, S.VInt) and isinstance(r, S.VInt)):
            raise Stuck("NoRuleApplies", f"{op} on non-integers")
        a, b = l.n, r.n
        if op == "+":
            return S.VInt(a + b)
        if op == "-":
            return S.VInt(a - b)
        if op == "*":
            return S.VInt(a * b)
        if op == "%":
            if b == 0:
                raise Stuck("NoRuleApplies", "remainder by zero")
            q = abs(a) % abs(b)  # truncating remainder, sign follows the dividend
            return S.VInt(-q if a < 0 else q)
        if op == "<":
            return S.VBool(a < b)
        if op == "<=":
            return S.VBool(a <= b)
        raise Stuck("NoRuleApplies", f"unknown operator {op}")

    # big-step evaluation: same thread, no forks, no nested atomic blocks
    def bigstep(self, e):
        while True:
            if isinstance(e, S.Val):
                return e
            if self.budget <= 0:
                raise Stuck("AtomicBudgetExceeded")
            self.budget -= 1
            frames, redex = decompose(e)
            _rule, out = self.head(redex, in_big=True)
            e = plug(frames, out)


# heap rules

def _alloc(run, e):
    n = run._int(e.n, "AllocN")
    if n <= 0:
        raise Stuck("NoRuleApplies", "AllocN needs a positive size")
    st = run.st
    base = st.next_loc
    for i in range(n):
        st.heap[base + i] = e.v
        if not run.plain:
            st.aux_heap[base + i] = S.VInt(0)
    st.next_loc += n
    return "AllocN", S.VLoc(base)


def _free(run, e):
    l = run._loc(e.l, "Free")
    if l not in run.st.heap:
        raise Stuck("HeapFault", l)
    del run.st.heap[l]
    return "Free", S.UNIT


def _load(run, e):
    l = run._loc(e.l, "load")
    if l not in run.st.heap:
        raise Stuck("HeapFault", l)
    return "HeapLoad", run.st.heap[l]


def _store(run, e):
    l = run._loc(e.l, "store")
    if l not in run.st.heap:
        raise Stuck("HeapFault", l)
    run.st.heap[l] = e.v
    return "HeapStore", S.UNIT


def _cmpxchg(run, e):
    l = run._loc(e.l, "CmpXchg")
    if l not in run.st.heap:
        raise Stuck("HeapFault", l)
    old = run.st.heap[l]
    eq = value_eq(old, e.e1)
    if eq == "Unsafe":
        raise Stuck("UnsafeValueCompare")
    if eq:
        run.st.heap[l] = e.e2
    return "CmpXchg", S.VPair(old, S.VBool(eq))


def _xchg(run, e):
    l = run._loc(e.l, "Xchg")
    if l not in run.st.heap:
        raise Stuck("HeapFault", l)
    old = run.st.heap[l]
    run.st.heap[l] = e.v
    return "Xchg", old


def _faa(run, e):
    l = run._loc(e.l, "FAA")
    if l not in run.st.heap:
        raise Stuck("HeapFault", l)
    old = run.st.heap[l]
    if not isinstance(old, S.VInt):
        raise Stuck("NoRuleApplies", "FAA on a non-integer cell")
    inc = run._int(e.v, "FAA")
    run.st.heap[l] = S.VInt(old.n + inc)
    return "FAA", old


def _aux_alloc(run, e):
    run._ghost(e)
    n = run._int(e.n, "AllocNg")
    if n <= 0:
        raise Stuck("NoRuleApplies", "AllocNg needs a positive size")
    st = run.st
    base = st.next_aux_loc - (n - 1)
    for i in range(n):
        st.aux_heap[base + i] = e.v
    st.next_aux_loc = base - 1
    return "AuxAllocN", S.VLoc(base)


def _aux_load(run, e):
    run._ghost(e)
    l = run._loc(e.l, "aux load")
    if l not in run.st.aux_heap:
        raise Stuck("AuxHeapFault", l)
    return "AuxLoad", run.st.aux_heap[l]


def _aux_store(run, e):
    run._ghost(e)
    l = run._loc(e.l, "aux store")
    if l not in run.st.aux_heap:
        raise Stuck("AuxHeapFault", l)
    run.st.aux_heap[l] = e.v
    return "AuxStore", S.UNIT


_HEAP_RULES = {
    S.AllocN: _alloc, S.Free: _free, S.Load: _load, S.Store: _store,
    S.CmpXchg: _cmpxchg, S.Xchg: _xchg, S.FAA: _faa,
    S.AllocNAux: _aux_alloc, S.LoadAux: _aux_load, S.StoreAux: _aux_store,
}


# ghost rules, premises checked in their written order

def _new_signal(run, e):
    st = run.st
    t = run._tid(e.t)
    if not isinstance(e.lev, S.VLev):
        raise Stuck("NoRuleApplies", "NewSignal expects a level")
    if st.obligations[t] is FINISHED:
        raise Stuck("TargetThreadFinished", t)
    s = st.next_signal
    st.next_signal += 1
    st.own_signals()[s] = (e.lev.lev, False)
    st.obligations[t][(s, e.lev.lev)] += 1
    return "NewSignalS", S.VSig(s)


def _set_signal(run, e):
    st = run.st
    t = run._tid(e.t)
    s = run._sig(e.s)
    if s not in st.signals:
        raise Stuck("SignalUnallocated", s)
    lev, _ = st.signals[s]
    obs = st.obligations[t]
    if obs is FINISHED:
        raise Stuck("TargetThreadFinished", t)
    if obs[(s, lev)] < 1:
        raise Stuck("ObligationNotHeld", t, s)
    obs[(s, lev)] -= 1
    if obs[(s, lev)] == 0:
        del obs[(s, lev)]
    st.own_signals()[s] = (lev, True)
    return "SetSignalS", S.UNIT


def _new_expect_perm(run, e):
    st = run.st
    t = run._tid(e.t)
    s = run._sig(e.s)
    d = run._deg(e.d)
    d2 = run._deg(e.d2)
    if s not in st.signals:
        raise Stuck("SignalUnallocated", s)
    cp = st.call_perms[t]
    if cp[d] < 1:
        raise Stuck("MissingCallPerm", t, d)
    if not wf._key(d2) < wf._key(d):
        raise Stuck("DegreeNotLower", d2, d)
    cp[d] -= 1
    if cp[d] == 0:
        del cp[d]
    st.expect_perms[t][(s, d2)] += 1
    return "NewExpectPermS", S.UNIT


def _expect(run, e):
    st = run.st
    t = run._tid(e.t)
    s = run._sig(e.s)
    d = run._deg(e.d)
    if s not in st.signals:
        raise Stuck("SignalUnallocated", s)
    lev, is_set = st.signals[s]
    if is_set:
        raise Stuck("ExpectOnSetSignal", s)
    obs = st.obligations[t]
    held = [] if obs is FINISHED else [k for k, n in obs.items() if n > 0]
    if any(not wf._key(lev) < wf._key(other) for _s, other in held):
        raise Stuck("LevelNotBelowObligations", lev, Counter(+obs))
    if run.mode != "unsound_expect" and st.expect_perms[t][(s, d)] < 1:
        raise Stuck("ExpectWithoutPermission", t, s, d)
    st.call_perms[t][d] += 1
    run.events.append(("expect", t, s, d))
    return "ExpectS", S.UNIT


def _lower(run, e):
    st = run.st
    d = run._deg(e.d)
    d2 = run._deg(e.d2)
    n = run._int(e.n, "lower count")
    t = run._tid(e.t)
    cp = st.call_perms[t]
    if cp[d] < 1:
        raise Stuck("MissingCallPerm", t, d)
    if not wf._key(d2) < wf._key(d):
        raise Stuck("DegreeNotLower", d2, d)
    if n < 0:
        raise Stuck("NoRuleApplies", "negative lowering count")
    cp[d] -= 1
    if cp[d] == 0:
        del cp[d]
    if n:
        cp[d2] += n
    return "LowerS", S.UNIT


_GHOST_RULES = {
    S.NewSignal: _new_signal, S.SetSignal: _set_signal,
    S.NewExpectPerm: _new_expect_perm, S.Expect: _expect, S.Lower: _lower,
}


def head_step(sigma: State, tid: int, redex: S.Expr, mode: str = "sound",
              budget: int = DEFAULT_BUDGET):
    run = _Run(sigma.copy(), tid, mode, budget)
    try:
        rule, out = run.head(redex)
    except Stuck as exc:
        return StuckOutcome(exc.reason)
    except _Abort:
        return Aborted()
    return Reduced(out, run.st, run.forks, rule)


def bigstep(sigma: State, tid: int, e: S.Expr, budget: int = DEFAULT_BUDGET,
            mode: str = "sound"):
    """Evaluate ``e`` to a value on thread ``tid``; returns (value, state),
    StuckOutcome or Aborted."""
    run = _Run(sigma.copy(), tid, mode, budget)
    try:
        v = run.bigstep(e)
    except Stuck as exc:
        return StuckOutcome(exc.reason)
    except _Abort:
        return Aborted()
    return v, run.st


# Machine steps -----------------------------------------------------------------

@dataclass
class StepResult:
    kind: str  # ok | stuck | aborted
    config: Config
    tid: int
    rule: str = ""
    redex: S.Expr = None
    reason: StuckReason = None
    forks: list = field(default_factory=list)
    events: list = field(default_factory=list)


def machine_step(c: Config, tid: int, mode: str = "sound",
                 budget: int = DEFAULT_BUDGET) -> StepResult:
    e = c.expr_of(tid)
    dec = decompose(e)
    if dec == ALREADY_VALUE:
        raise SelectedThreadComplete(tid)
    frames, redex = dec
    run = _Run(c.state.copy(), tid, mode, budget)
    try:
        rule, out = run.head(redex)
    except Stuck as exc:
        return StepResult("stuck", c, tid, redex=redex, reason=exc.reason)
    except _Abort:
        pool = tuple((t, S.UNIT) for t, _ in c.pool)
        return StepResult("aborted", Config(pool, c.state), tid, rule="Abort", redex=redex)
    new_e = plug(frames, out)
    pool = tuple((t, new_e if t == tid else x) for t, x in c.pool) + tuple(run.forks)
    return StepResult("ok", Config(pool, run.st), tid, rule, redex,
                      forks=run.forks, events=run.events)
