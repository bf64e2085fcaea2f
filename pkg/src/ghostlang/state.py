"""Machine state, thread pool and configuration hashing."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field, fields as dc_fields
from functools import lru_cache

from . import syntax as S
from . import wellfounded as wf


class _Finished:
    def __repr__(self):
        return "Finished"

    def __reduce__(self):
        return "FINISHED"


FINISHED = _Finished()


@dataclass(frozen=True)
class StuckReason:
    kind: str
    detail: tuple = ()

    def __str__(self):
        if not self.detail:
            return self.kind
        return f"{self.kind}({', '.join(_fmt(d) for d in self.detail)})"


def _fmt(x):
    if isinstance(x, S.Expr):
        return S.pretty_print(x)
    if isinstance(x, (Counter, dict)):
        return "{" + ", ".join(_fmt(k) for k in sorted(x.elements(), key=repr)) + "}"
    if isinstance(x, tuple) and len(x) == 2 and isinstance(x[1], (wf.Elem, wf.Bottom)):
        return f"(s{x[0]}, {x[1]})"
    return str(x)


class Stuck(Exception):
    def __init__(self, kind, *detail):
        super().__init__(kind)
        self.reason = StuckReason(kind, tuple(detail))


@dataclass
class State:
    heap: dict = field(default_factory=dict)
    aux_heap: dict = field(default_factory=dict)
    signals: dict = field(default_factory=dict)        # sig -> (level, is_set)
    obligations: dict = field(default_factory=dict)    # tid -> Counter[(sig, level)] | FINISHED
    call_perms: dict = field(default_factory=dict)     # tid -> Counter[degree]
    expect_perms: dict = field(default_factory=dict)   # tid -> Counter[(sig, degree)]
    next_loc: int = 0
    next_aux_loc: int = -1
    next_signal: int = 0
    # the signal table only grows and is rarely written, so copies share it
    # until the first write
    signals_shared: bool = field(default=False, repr=False, compare=False)

    def copy(self) -> "State":
        return State(
            dict(self.heap), dict(self.aux_heap), self.signals,
            {t: (o if o is FINISHED else Counter(o)) for t, o in self.obligations.items()},
            {t: Counter(c) for t, c in self.call_perms.items()},
            {t: Counter(c) for t, c in self.expect_perms.items()},
            self.next_loc, self.next_aux_loc, self.next_signal, True,
        )

    def own_signals(self) -> dict:
        if self.signals_shared:
            self.signals = dict(self.signals)
            self.signals_shared = False
        return self.signals


@dataclass(frozen=True)
class Config:
    pool: tuple  # of (tid, expr)
    state: State

    def expr_of(self, tid):
        for t, e in self.pool:
            if t == tid:
                return e
        raise KeyError(tid)

    def runnable(self):
        return [t for t, e in self.pool if not isinstance(e, S.Val)]


def init_config(p: S.Prog) -> Config:
    st = State()
    st.obligations[1] = Counter()
    st.call_perms[1] = Counter(p.init_callperms)
    st.expect_perms[1] = Counter()
    return Config(((1, S.Let(None, p.main, S.Finish())),), st)


def fresh_tid(st: State) -> int:
    t = 1
    while t in st.obligations:
        t += 1
    return t


def spawn_thread(c: Config, parent: int, transferred, body: S.Expr):
    st = c.state.copy()
    tid = _spawn(st, parent, transferred)
    pool = c.pool + ((tid, S.Let(None, body, S.Finish())),)
    return Config(pool, st), tid


def _spawn(st: State, parent: int, transferred) -> int:
    """Move the obligations of ``transferred`` from ``parent`` into a fresh
    thread whose permissions copy the parent's.  Mutates ``st``."""
    obs = st.obligations.get(parent)
    if obs is None or obs is FINISHED:
        raise Stuck("TargetThreadFinished", parent)
    moved = Counter()
    remaining = Counter(obs)
    for s in transferred:
        lev = st.signals.get(s, (None,))[0]
        if lev is None or remaining[(s, lev)] < 1:
            raise Stuck("ObligationNotHeld", parent, s)
        remaining[(s, lev)] -= 1
        moved[(s, lev)] += 1
    tid = fresh_tid(st)
    st.obligations[parent] = +remaining
    st.obligations[tid] = moved
    st.call_perms[tid] = Counter(st.call_perms.get(parent, ()))
    st.expect_perms[tid] = Counter(st.expect_perms.get(parent, ()))
    return tid


# Canonical hashing ----------------------------------------------------------
#
# Digests are built from Python's tuple hash over integers only.  Integer and
# tuple hashing are not salted per process, so digests are stable across runs
# of the same interpreter; strings are first mapped to fixed integer codes.

_MASK = (1 << 64) - 1
_NONE = 0x6A09E667F3BCC908
_MINUS_ONE = 0x3C6EF372FE94F82B  # hash(-1) == hash(-2) in CPython
_BOTTOM = 0x510E527FADE682D1


@lru_cache(maxsize=None)
def _str_code(s: str) -> int:
    return int.from_bytes(hashlib.blake2b(s.encode(), digest_size=8).digest(), "little")


@lru_cache(maxsize=None)
def _type_info(cls):
    return _str_code(cls.__name__), tuple(f.name for f in dc_fields(cls))


def _atom(x) -> int:
    if x is None:
        return _NONE
    if isinstance(x, int):
        return _MINUS_ONE if x == -1 else int(x)
    if isinstance(x, str):
        return _str_code(x)
    if isinstance(x, S.Expr):
        return digest(x)
    if isinstance(x, wf.Bottom):
        return _BOTTOM
    if isinstance(x, wf.Elem):
        return hash((_BOTTOM, x.path))
    if isinstance(x, tuple):
        return hash(tuple(_atom(y) for y in x))
    raise TypeError(f"cannot hash {x!r}")


def digest(e: S.Expr) -> int:
    """Structural digest of an AST node, cached on the node."""
    d = e.__dict__.get("_dg")
    if d is not None:
        return d
    code, names = _type_info(type(e))
    d = hash((code,) + tuple(_atom(getattr(e, n)) for n in names))
    object.__setattr__(e, "_dg", d)
    return d


def _counter_key(c) -> tuple:
    return tuple(sorted((_atom(k), n) for k, n in c.items() if n > 0))


def state_digest(st: State) -> int:
    heap = tuple((l, digest(st.heap[l])) for l in sorted(st.heap))
    aux = tuple((l, digest(st.aux_heap[l])) for l in sorted(st.aux_heap))
    sigs = tuple((s, _atom(lev), flag) for s, (lev, flag) in sorted(st.signals.items()))
    per_thread = []
    for m in (st.obligations, st.call_perms, st.expect_perms):
        per_thread.append(tuple(
            (t, _NONE if m[t] is FINISHED else hash(_counter_key(m[t]))) for t in sorted(m)))
    return hash((heap, aux, sigs, tuple(per_thread),
                 _atom(st.next_loc), _atom(st.next_aux_loc), st.next_signal))


def canonical_hash(c: Config) -> int:
    pool = tuple((t, digest(e)) for t, e in sorted(c.pool, key=lambda p: p[0]))
    return hash((state_digest(c.state), pool)) & _MASK


# Text snapshots ------------------------------------------------------------

def _ms(c) -> str:
    return "{" + ", ".join(
        f"{_fmt(k)}" + (f"x{n}" if n > 1 else "")
        for k, n in sorted(c.items(), key=lambda kv: _atom(kv[0])) if n > 0) + "}"


def snapshot_text(c: Config) -> str:
    st = c.state
    out = []
    for t, e in sorted(c.pool, key=lambda p: p[0]):
        out.append(f"thread {t}: {S.pretty_print(e)}")
    for l in sorted(st.heap):
        out.append(f"heap {l} = {S.pretty_print(st.heap[l])}")
    for l in sorted(st.aux_heap):
        out.append(f"aux {l} = {S.pretty_print(st.aux_heap[l])}")
    for s in sorted(st.signals):
        lev, flag = st.signals[s]
        out.append(f"signal {s} = ({lev}, {str(flag).lower()})")
    for t in sorted(st.obligations):
        o = st.obligations[t]
        out.append(f"obligations {t} = " + ("Finished" if o is FINISHED else _ms(o)))
        out.append(f"callperms {t} = {_ms(st.call_perms.get(t, Counter()))}")
        out.append(f"expectperms {t} = {_ms(st.expect_perms.get(t, Counter()))}")
    out.append(f"counters loc={st.next_loc} auxloc={st.next_aux_loc} signal={st.next_signal}")
    return "\n".join(out) + "\n"


# Invariant validation -------------------------------------------------------

def validate(c: Config, degrees=None, levels=None) -> list:
    """Return a list of broken state invariants (empty when healthy)."""
    st = c.state
    errs = []
    tids = set(st.obligations)
    if tids != set(st.call_perms) or tids != set(st.expect_perms):
        errs.append("per-thread maps disagree on thread ids")
    for t, _ in c.pool:
        if t not in tids:
            errs.append(f"pool thread {t} missing from state")
    pool_tids = [t for t, _ in c.pool]
    if pool_tids != sorted(pool_tids):
        errs.append("pool thread ids not increasing")
    for t, o in st.obligations.items():
        if o is FINISHED:
            continue
        for (s, lev), n in o.items():
            if n <= 0:
                continue
            if s not in st.signals:
                errs.append(f"obligation on unknown signal {s}")
            elif st.signals[s][0] != lev:
                errs.append(f"obligation level mismatch on signal {s}")
    for t, ep in st.expect_perms.items():
        for (s, d), n in ep.items():
            if n > 0 and s not in st.signals:
                errs.append(f"expect permission on unknown signal {s}")
            if degrees is not None and n > 0:
                try:
                    wf.check(degrees, d)
                except wf.InvalidElement:
                    errs.append(f"invalid degree {d}")
    for t, cp in st.call_perms.items():
        for d, n in cp.items():
            if n < 0:
                errs.append(f"negative call permission count at {t}")
            if degrees is not None and n > 0:
                try:
                    wf.check(degrees, d)
                except wf.InvalidElement:
                    errs.append(f"invalid degree {d}")
    for l in st.heap:
        if not 0 <= l < st.next_loc:
            errs.append(f"heap location {l} outside counter")
    for s in st.signals:
        if not 0 <= s < st.next_signal:
            errs.append(f"signal {s} outside counter")
    return errs
