"""Abstract syntax, surface parser and printer, substitution and the
erasability discipline checker.

Expression nodes and values share one class hierarchy so that substitution
can drop a value straight into a term.  All nodes are frozen dataclasses;
binders are strings, or ``None`` for the anonymous binder ``_``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Optional

from . import wellfounded as wf

Binder = Optional[str]


class Expr:
    __slots__ = ()


class Val(Expr):
    __slots__ = ()


# Values -------------------------------------------------------------------

@dataclass(frozen=True)
class VInt(Val):
    n: int


@dataclass(frozen=True)
class VBool(Val):
    b: bool


@dataclass(frozen=True)
class VUnit(Val):
    pass


@dataclass(frozen=True)
class VPoison(Val):
    pass


@dataclass(frozen=True)
class VLoc(Val):
    loc: int


@dataclass(frozen=True)
class VSig(Val):
    sig: int


@dataclass(frozen=True)
class VProph(Val):
    pid: int


@dataclass(frozen=True)
class VDeg(Val):
    deg: object  # wf.Bottom | wf.Elem


@dataclass(frozen=True)
class VLev(Val):
    lev: object  # wf.Elem


@dataclass(frozen=True)
class VRec(Val):
    f: Binder
    x: Binder
    y: Binder
    body: Expr


@dataclass(frozen=True)
class VAux(Val):
    x: Binder
    body: Expr


@dataclass(frozen=True)
class VPair(Val):
    a: Val
    b: Val


@dataclass(frozen=True)
class VInjL(Val):
    v: Val


@dataclass(frozen=True)
class VInjR(Val):
    v: Val


UNIT = VUnit()
TRUE = VBool(True)
FALSE = VBool(False)


# Expressions --------------------------------------------------------------

@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Rec(Expr):
    f: Binder
    x: Binder
    y: Binder
    body: Expr


@dataclass(frozen=True)
class AuxLam(Expr):
    x: Binder
    body: Expr


@dataclass(frozen=True)
class App(Expr):
    fn: Expr
    arg: Expr
    aux: Expr


@dataclass(frozen=True)
class AuxApp(Expr):
    fn: Expr
    arg: Expr


@dataclass(frozen=True)
class UnOp(Expr):
    op: str  # neg | not
    e: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # + - * < <= = != +.
    l: Expr
    r: Expr


@dataclass(frozen=True)
class If(Expr):
    c: Expr
    t: Expr
    f: Expr


@dataclass(frozen=True)
class Pair(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Fst(Expr):
    e: Expr


@dataclass(frozen=True)
class Snd(Expr):
    e: Expr


@dataclass(frozen=True)
class InjL(Expr):
    e: Expr


@dataclass(frozen=True)
class InjR(Expr):
    e: Expr


@dataclass(frozen=True)
class Match(Expr):
    e: Expr
    x: Binder
    l: Expr
    y: Binder
    r: Expr


@dataclass(frozen=True)
class Let(Expr):
    x: Binder
    e1: Expr
    e2: Expr


@dataclass(frozen=True)
class LetAux(Expr):
    x: Binder
    e1: Expr
    e2: Expr


@dataclass(frozen=True)
class AllocN(Expr):
    n: Expr
    v: Expr


@dataclass(frozen=True)
class Free(Expr):
    l: Expr


@dataclass(frozen=True)
class Load(Expr):
    l: Expr


@dataclass(frozen=True)
class Store(Expr):
    l: Expr
    v: Expr


@dataclass(frozen=True)
class AllocNAux(Expr):
    n: Expr
    v: Expr


@dataclass(frozen=True)
class LoadAux(Expr):
    l: Expr


@dataclass(frozen=True)
class StoreAux(Expr):
    l: Expr
    v: Expr


@dataclass(frozen=True)
class CmpXchg(Expr):
    l: Expr
    e1: Expr
    e2: Expr


@dataclass(frozen=True)
class Xchg(Expr):
    l: Expr
    v: Expr


@dataclass(frozen=True)
class FAA(Expr):
    l: Expr
    v: Expr


@dataclass(frozen=True)
class Fork(Expr):
    sigs: tuple
    body: Expr


@dataclass(frozen=True)
class Atomic(Expr):
    body: Expr


@dataclass(frozen=True)
class NewSignal(Expr):
    t: Expr
    lev: Expr


@dataclass(frozen=True)
class SetSignal(Expr):
    t: Expr
    s: Expr


@dataclass(frozen=True)
class NewExpectPerm(Expr):
    t: Expr
    s: Expr
    d: Expr
    d2: Expr


@dataclass(frozen=True)
class Expect(Expr):
    t: Expr
    s: Expr
    d: Expr


@dataclass(frozen=True)
class Lower(Expr):
    d: Expr
    n: Expr
    d2: Expr
    t: Expr


@dataclass(frozen=True)
class CurrentThread(Expr):
    pass


@dataclass(frozen=True)
class Finish(Expr):
    pass


@dataclass(frozen=True)
class Abort(Expr):
    pass


@dataclass(frozen=True)
class NewProph(Expr):
    pass


@dataclass(frozen=True)
class ResolveWith(Expr):
    e: Expr
    p: Expr
    v: Expr


_EXPR_FIELDS = {
    VRec: ("body",), VAux: ("body",), VPair: ("a", "b"), VInjL: ("v",), VInjR: ("v",),
    Rec: ("body",), AuxLam: ("body",), App: ("fn", "arg", "aux"), AuxApp: ("fn", "arg"),
    UnOp: ("e",), BinOp: ("l", "r"), If: ("c", "t", "f"), Pair: ("a", "b"),
    Fst: ("e",), Snd: ("e",), InjL: ("e",), InjR: ("e",),
    Match: ("e", "l", "r"), Let: ("e1", "e2"), LetAux: ("e1", "e2"),
    AllocN: ("n", "v"), Free: ("l",), Load: ("l",), Store: ("l", "v"),
    AllocNAux: ("n", "v"), LoadAux: ("l",), StoreAux: ("l", "v"),
    CmpXchg: ("l", "e1", "e2"), Xchg: ("l", "v"), FAA: ("l", "v"),
    Atomic: ("body",), NewSignal: ("t", "lev"), SetSignal: ("t", "s"),
    NewExpectPerm: ("t", "s", "d", "d2"), Expect: ("t", "s", "d"),
    Lower: ("d", "n", "d2", "t"), ResolveWith: ("e", "p", "v"),
}


def subterms(e: Expr):
    """Direct sub-expressions, including fork signal arguments."""
    if isinstance(e, Fork):
        return tuple(e.sigs) + (e.body,)
    return tuple(getattr(e, n) for n in _EXPR_FIELDS.get(type(e), ()))


def size(e: Expr) -> int:
    return 1 + sum(size(c) for c in subterms(e))


REAL_HEAP_OPS = (AllocN, Free, Load, Store, CmpXchg, Xchg, FAA)
REAL_HEAP_WRITES = (AllocN, Free, Store, CmpXchg, Xchg, FAA)
GHOST_OPS = (NewSignal, SetSignal, NewExpectPerm, Expect, Lower, CurrentThread)
AUX_HEAP_OPS = (AllocNAux, LoadAux, StoreAux)


@dataclass(frozen=True)
class Prog:
    degrees: object
    levels: object
    init_callperms: tuple
    main: Expr
    aliases: dict = field(default_factory=dict, compare=False, hash=False)
    fields_table: dict = field(default_factory=dict, compare=False, hash=False)


# Free variables and substitution ------------------------------------------

def free_vars(e: Expr) -> frozenset:
    """Free variables of ``e``; cached on the (immutable) node."""
    fv = e.__dict__.get("_fv")
    if fv is None:
        fv = frozenset(_fv(e))
        object.__setattr__(e, "_fv", fv)
    return fv


def _fv(e):
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (Rec, VRec)):
        return free_vars(e.body) - {e.f, e.x, e.y}
    if isinstance(e, (AuxLam, VAux)):
        return free_vars(e.body) - {e.x}
    if isinstance(e, (Let, LetAux)):
        return free_vars(e.e1) | (free_vars(e.e2) - {e.x})
    if isinstance(e, Match):
        return free_vars(e.e) | (free_vars(e.l) - {e.x}) | (free_vars(e.r) - {e.y})
    out = set()
    for c in subterms(e):
        out |= free_vars(c)
    return out


def substitute(e: Expr, x: Binder, v: Val) -> Expr:
    """Replace free occurrences of ``x`` by the closed value ``v``.

    Values placed into terms are closed, so capture cannot happen; only
    shadowing needs care.
    """
    if x is None:
        return e
    return _subst(e, x, v)


def _subst(e, x, v):
    if isinstance(e, Var):
        return v if e.name == x else e
    if x not in free_vars(e):
        # untouched subtrees are shared, which keeps their cached digests
        return e
    if isinstance(e, (Rec, VRec)):
        if x in (e.f, e.x, e.y):
            return e
        return replace(e, body=_subst(e.body, x, v))
    if isinstance(e, (AuxLam, VAux)):
        if x == e.x:
            return e
        return replace(e, body=_subst(e.body, x, v))
    if isinstance(e, (Let, LetAux)):
        e2 = e.e2 if e.x == x else _subst(e.e2, x, v)
        return type(e)(e.x, _subst(e.e1, x, v), e2)
    if isinstance(e, Match):
        return Match(_subst(e.e, x, v),
                     e.x, e.l if e.x == x else _subst(e.l, x, v),
                     e.y, e.r if e.y == x else _subst(e.r, x, v))
    if isinstance(e, Fork):
        return Fork(tuple(_subst(s, x, v) for s in e.sigs), _subst(e.body, x, v))
    names = _EXPR_FIELDS.get(type(e), ())
    if not names:
        return e
    return replace(e, **{n: _subst(getattr(e, n), x, v) for n in names})


# Lexer --------------------------------------------------------------------

class ParseError(Exception):
    def __init__(self, msg, line=0, col=0):
        super().__init__(f"{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


KEYWORDS = {
    "let", "in", "ghost", "if", "then", "else", "match", "with", "end", "inl", "inr",
    "fun", "gfun", "rec", "while", "fork", "atomic", "true", "false", "skip",
    "ref", "refg", "AllocN", "AllocNg", "Free", "CmpXchg", "CAS", "Xchg", "FAA",
    "fst", "snd", "not", "NewSignal", "SetSignal", "NewExpectPerm", "Expect",
    "lower", "to", "times", "at", "cur", "CurrentThread", "Finish", "Abort",
    "NewProph", "ResolveWith", "deg", "lev", "loc", "sig", "proph", "poison", "bot",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+|//[^\n]*)
  | (?P<nl>\n)
  | (?P<int>\d+)
  | (?P<id>[A-Za-z][A-Za-z0-9_']*|_[A-Za-z0-9_']+)
  | (?P<op>:=g(?![A-Za-z0-9_'])|!g(?![A-Za-z0-9_'])|:=|->|<=|!=|&&|\|\||\+\.|[-+*%<=!;,()\[\]{}.|_])
""", re.X)


@dataclass
class Tok:
    kind: str  # int | op | id | kw | eof
    text: str
    line: int
    col: int


def tokenize(text: str):
    toks = []
    pos, line, col0 = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - col0 + 1)
        kind = m.lastgroup
        s = m.group()
        col = pos - col0 + 1
        if kind == "nl":
            line += 1
            col0 = m.end()
        elif kind != "ws":
            if kind == "id" and s in KEYWORDS:
                kind = "kw"
            toks.append(Tok(kind, s, line, col))
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - col0 + 1))
    return toks


# Parser -------------------------------------------------------------------

_ATOM_START_OPS = {"(", "!", "!g"}
_ATOM_START_KWS = {"true", "false", "deg", "lev", "loc", "sig", "proph", "poison", "skip"}


def _then(a, b):
    # sequence a before b without nesting a let-form in operand position
    if isinstance(a, (Let, LetAux)) and (a.x is None or a.x not in free_vars(b)):
        return type(a)(a.x, a.e1, _then(a.e2, b))
    return Let(None, a, b)


class Parser:
    def __init__(self, text, aliases=None, fields_table=None, degrees=None, levels=None):
        self.toks = tokenize(text)
        self.i = 0
        self.aliases = dict(aliases or {})
        self.fields = dict(fields_table or {})
        self.degrees = degrees
        self.levels = levels
        self.loop_counter = 0
        self.aux_depth = 0  # >0 while parsing auxiliary code

    # token helpers
    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text, kind=None):
        t = self.tok
        return t.text == text and t.kind in ((kind,) if kind else ("op", "kw"))

    def advance(self):
        t = self.tok
        self.i += 1
        return t

    def expect(self, text):
        if not self.at(text):
            self.fail(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def fail(self, msg, tok=None):
        t = tok or self.tok
        raise ParseError(msg, t.line, t.col)

    def binder(self):
        t = self.tok
        if t.kind == "op" and t.text == "_":
            self.advance()
            return None
        if t.kind == "id":
            self.advance()
            return t.text
        self.fail(f"expected a binder, found {t.text!r}")

    # program headers
    def program(self):
        degrees = levels = None
        init = []
        while not (self.tok.kind == "id" and self.tok.text == "main"):
            t = self.tok
            if t.kind == "eof":
                self.fail("missing main")
            if t.kind != "id":
                self.fail(f"unexpected {t.text!r} in header")
            word = self.advance().text
            if word in ("degrees", "levels"):
                self.expect("=")
                dom = self._domain_text()
                if word == "degrees":
                    degrees = self.degrees = dom
                else:
                    levels = self.levels = dom
            elif word == "name":
                alias = self.advance()
                if alias.kind != "id":
                    self.fail("expected alias name", alias)
                self.expect("=")
                self.aliases[alias.text] = self._path_literal()
            elif word == "fields":
                off = 0
                while self.tok.kind == "id" and self.tok.line == t.line:
                    self.fields[self.advance().text] = off
                    off += 1
            elif word == "init_callperms":
                self.expect("=")
                self.expect("[")
                while not self.at("]"):
                    init.append(self._degree_literal_token())
                    if not self.at("]"):
                        self.expect(",")
                self.expect("]")
            else:
                self.fail(f"unknown header {word!r}", t)
        self.advance()
        self.expect("=")
        if degrees is None:
            degrees = self.degrees = wf.Atoms(1)
        if levels is None:
            levels = self.levels = wf.Atoms(1)
        for d in init:
            self._check_deg(d)
        main = self.seq()
        if self.tok.kind != "eof":
            self.fail(f"unexpected {self.tok.text!r} after main")
        open_vars = free_vars(main)
        if open_vars:
            raise ParseError(f"main is open: free variables {sorted(open_vars)}", 0, 0)
        return Prog(degrees, levels, tuple(init), main, dict(self.aliases), dict(self.fields))

    def _domain_text(self):
        start = self.i
        depth = 0
        parts = []
        while True:
            t = self.tok
            if t.kind == "eof":
                break
            if t.text == "(":
                depth += 1
            elif t.text == ")":
                depth -= 1
            parts.append(t.text)
            self.advance()
            if depth == 0 and parts[-1] == ")":
                break
        try:
            return wf.parse_domain("".join(parts))
        except ValueError as exc:
            self.fail(str(exc), self.toks[start])

    def _path_literal(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            return wf.Elem((int(t.text),))
        if t.kind == "id" and t.text in self.aliases:
            self.advance()
            return self.aliases[t.text]
        self.expect("(")
        parts = [self._int()]
        while self.at(","):
            self.advance()
            parts.append(self._int())
        self.expect(")")
        return wf.Elem(tuple(parts))

    def _int(self):
        t = self.tok
        if t.kind != "int":
            self.fail(f"expected integer, found {t.text!r}")
        self.advance()
        return int(t.text)

    def _degree_literal_token(self):
        if self.at("bot"):
            self.advance()
            return wf.BOTTOM
        return self._path_literal()

    def _check_deg(self, d, tok=None):
        try:
            return wf.check(self.degrees, d)
        except wf.InvalidElement as exc:
            self.fail(f"unknown degree literal: {exc}", tok)

    def _check_lev(self, l, tok=None):
        try:
            return wf.check(self.levels, l, allow_bottom=False)
        except wf.InvalidElement as exc:
            self.fail(f"unknown level literal: {exc}", tok)

    # expressions
    def seq(self):
        first = self.stmt()
        if isinstance(first, _GhostBlock):
            if self.at(";"):
                self.advance()
                return LetAux(None, first.e, self.seq())
            return LetAux(None, first.e, UNIT)
        if self.at(";"):
            self.advance()
            return Let(None, first, self.seq())
        return first

    def stmt(self):
        t = self.tok
        if t.kind == "kw":
            if t.text == "let":
                return self.let_form()
            if t.text == "ghost":
                self.advance()
                if self.at("let"):
                    self.advance()
                    return self._let_rest(aux=True)
                self.expect("{")
                body = self._aux(self.seq)
                self.expect("}")
                return _GhostBlock(body)
            if t.text == "if":
                self.advance()
                c = self.seq()
                self.expect("then")
                a = self.stmt_expr()
                b = UNIT
                if self.at("else"):
                    self.advance()
                    b = self.stmt_expr()
                return If(c, a, b)
            if t.text == "rec":
                self.advance()
                f = self.binder()
                x = self.binder()
                y = None
                if self.at("ghost"):
                    self.advance()
                    y = self.binder()
                self.expect("->")
                return Rec(f, x, y, self.seq())
            if t.text == "fun":
                self.advance()
                x = self.binder()
                y = None
                if self.at("ghost"):
                    self.advance()
                    y = self.binder()
                self.expect("->")
                return Rec(None, x, y, self.seq())
            if t.text == "gfun":
                self.advance()
                x = self.binder()
                self.expect("->")
                return AuxLam(x, self._aux(self.seq))
            if t.text == "while":
                self.advance()
                c = self.seq()
                self.expect("{")
                body = self.seq()
                self.expect("}")
                self.loop_counter += 1
                name = f"loop{self.loop_counter}"
                call = App(Var(name), UNIT, UNIT)
                loop = Rec(name, None, None, If(c, _then(body, call), UNIT))
                return App(loop, UNIT, UNIT)
        return self.assign()

    def stmt_expr(self):
        e = self.stmt()
        if isinstance(e, _GhostBlock):
            return LetAux(None, e.e, UNIT)
        return e

    def let_form(self):
        self.expect("let")
        aux = False
        if self.at("ghost"):
            self.advance()
            aux = True
        return self._let_rest(aux)

    def _let_rest(self, aux):
        x = self.binder()
        self.expect("=")
        e1 = self._aux(self.seq) if aux else self.seq()
        self.expect("in")
        e2 = self.seq()
        return (LetAux if aux else Let)(x, e1, e2)

    def assign(self):
        lhs = self.orexpr()
        if self.at(":="):
            self.advance()
            return Store(lhs, self.orexpr())
        if self.at(":=g"):
            self.advance()
            return StoreAux(lhs, self.orexpr())
        return lhs

    def orexpr(self):
        e = self.andexpr()
        while self.at("||"):
            self.advance()
            e = If(e, TRUE, self.andexpr())
        return e

    def andexpr(self):
        e = self.cmp()
        while self.at("&&"):
            self.advance()
            e = If(e, self.cmp(), FALSE)
        return e

    def cmp(self):
        e = self.add()
        for op in ("<=", "<", "=", "!="):
            if self.at(op, "op"):
                self.advance()
                return BinOp(op, e, self.add())
        return e

    def add(self):
        e = self.mul()
        while self.tok.kind == "op" and self.tok.text in ("+", "-", "+."):
            op = self.advance().text
            e = BinOp(op, e, self.mul())
        return e

    def mul(self):
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "%"):
            op = self.advance().text
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.at("-", "op"):
            self.advance()
            if self.tok.kind == "int":
                return VInt(-int(self.advance().text))
            return UnOp("neg", self.unary())
        return self.app()

    def starts_atom(self):
        t = self.tok
        if t.kind in ("int", "id"):
            return True
        if t.kind == "op":
            return t.text in _ATOM_START_OPS
        if t.kind == "kw":
            return t.text in _ATOM_START_KWS or t.text in ("cur", "CurrentThread", "Finish", "Abort", "NewProph")
        return False

    def app(self):
        t = self.tok
        if t.kind == "kw" and t.text in _KEYWORD_FORMS:
            return _KEYWORD_FORMS[t.text](self)
        fn = self.atom()
        while self.starts_atom():
            arg = self.atom()
            if self.at("ghost") and self.peek().text != "{" and self.peek().text != "let":
                self.advance()
                return App(fn, arg, self._aux(self.atom))
            # bare juxtaposition: real call in real code, aux call in aux code
            fn = AuxApp(fn, arg) if self.aux_depth else App(fn, arg, UNIT)
        return fn

    def _aux(self, parse):
        self.aux_depth += 1
        try:
            return parse()
        finally:
            self.aux_depth -= 1

    def atom(self):
        e = self.primary()
        while True:
            if self.at(".", "op"):
                self.advance()
                t = self.tok
                if t.kind != "id" or t.text not in self.fields:
                    self.fail(f"unknown field {t.text!r}")
                self.advance()
                e = BinOp("+.", e, VInt(self.fields[t.text]))
            elif self.at("[", "op"):
                self.advance()
                idx = self.seq()
                self.expect("]")
                e = BinOp("+.", e, idx)
            else:
                return e

    def primary(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            return VInt(int(t.text))
        if t.kind == "id":
            self.advance()
            return Var(t.text)
        if t.kind == "op":
            if t.text == "(":
                self.advance()
                if self.at(")"):
                    self.advance()
                    return UNIT
                a = self.seq()
                if self.at(","):
                    self.advance()
                    b = self.seq()
                    self.expect(")")
                    return Pair(a, b)
                self.expect(")")
                return a
            if t.text == "!":
                self.advance()
                return Load(self.atom())
            if t.text == "!g":
                self.advance()
                return LoadAux(self.atom())
        if t.kind == "kw":
            w = t.text
            if w in ("true", "false"):
                self.advance()
                return VBool(w == "true")
            if w == "poison":
                self.advance()
                return VPoison()
            if w == "skip":
                self.advance()
                return Let(None, UNIT, UNIT)
            if w in ("cur", "CurrentThread"):
                self.advance()
                return CurrentThread()
            if w == "Finish":
                self.advance()
                return Finish()
            if w == "Abort":
                self.advance()
                return Abort()
            if w == "NewProph":
                self.advance()
                return NewProph()
            if w == "deg":
                self.advance()
                return VDeg(self._check_deg(self._degree_literal_token(), t))
            if w == "lev":
                self.advance()
                return VLev(self._check_lev(self._path_literal(), t))
            if w in ("loc", "sig", "proph"):
                self.advance()
                self.expect("(")
                neg = False
                if self.at("-", "op"):
                    self.advance()
                    neg = True
                n = self._int()
                self.expect(")")
                n = -n if neg else n
                return {"loc": VLoc, "sig": VSig, "proph": VProph}[w](n)
            if w == "bot":
                self.fail("'bot' is only a degree literal; write 'deg bot'")
        self.fail(f"unexpected {t.text or 'end of input'!r}")

    # degree/level positions accept bare literals
    def degree_arg(self):
        t = self.tok
        if t.kind == "kw" and t.text == "bot":
            self.advance()
            return VDeg(wf.BOTTOM)
        lit = self._try_literal_path()
        if lit is not None:
            return VDeg(self._check_deg(lit, t))
        return self.atom()

    def level_arg(self):
        t = self.tok
        lit = self._try_literal_path()
        if lit is not None:
            return VLev(self._check_lev(lit, t))
        return self.atom()

    def _try_literal_path(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            return wf.Elem((int(t.text),))
        if t.kind == "id" and t.text in self.aliases:
            self.advance()
            return self.aliases[t.text]
        if t.kind == "op" and t.text == "(":
            j = self.i + 1
            parts = []
            while self.toks[j].kind == "int":
                parts.append(int(self.toks[j].text))
                if self.toks[j + 1].text == ",":
                    j += 2
                    continue
                if self.toks[j + 1].text == ")":
                    self.i = j + 2
                    return wf.Elem(tuple(parts))
                break
        return None


@dataclass(frozen=True)
class _GhostBlock:
    e: Expr


def _kw1(cls):
    def parse(p):
        p.advance()
        return cls(p.atom())
    return parse


def _kw2(cls):
    def parse(p):
        p.advance()
        a = p.atom()
        return cls(a, p.atom())
    return parse


def _kw_ref(aux):
    def parse(p):
        p.advance()
        return (AllocNAux if aux else AllocN)(VInt(1), p.atom())
    return parse


def _kw_cmpxchg(cas):
    def parse(p):
        p.advance()
        a = p.atom()
        b = p.atom()
        e = CmpXchg(a, b, p.atom())
        return Snd(e) if cas else e
    return parse


def _kw_not(p):
    p.advance()
    return UnOp("not", p.atom())


def _kw_newsignal(p):
    p.advance()
    t = p.atom()
    return NewSignal(t, p.level_arg())


def _kw_setsignal(p):
    p.advance()
    t = p.atom()
    return SetSignal(t, p.atom())


def _kw_newexpectperm(p):
    p.advance()
    t = p.atom()
    s = p.atom()
    d = p.degree_arg()
    return NewExpectPerm(t, s, d, p.degree_arg())


def _kw_expect(p):
    p.advance()
    t = p.atom()
    s = p.atom()
    return Expect(t, s, p.degree_arg())


def _kw_lower(p):
    p.advance()
    d = p.degree_arg()
    p.expect("to")
    n = p.atom()
    p.expect("times")
    d2 = p.degree_arg()
    p.expect("at")
    return Lower(d, n, d2, p.atom())


def _kw_resolve(p):
    p.advance()
    e = p.atom()
    p.expect("at")
    pr = p.atom()
    p.expect("to")
    return ResolveWith(e, pr, p.atom())


def _kw_fork(p):
    p.advance()
    p.expect("[")
    sigs = []
    while not p.at("]"):
        sigs.append(p._aux(p.atom))
        if not p.at("]"):
            p.expect(",")
    p.expect("]")
    p.expect("{")
    body = p.seq()
    p.expect("}")
    return Fork(tuple(sigs), body)


def _kw_atomic(p):
    p.advance()
    p.expect("{")
    body = p.seq()
    p.expect("}")
    return Atomic(body)


def _kw_match(p):
    p.advance()
    e = p.seq()
    p.expect("with")
    p.expect("inl")
    x = p.binder()
    p.expect("->")
    left = p.seq()
    p.expect("|")
    p.expect("inr")
    y = p.binder()
    p.expect("->")
    right = p.seq()
    p.expect("end")
    return Match(e, x, left, y, right)


_KEYWORD_FORMS = {
    "ref": _kw_ref(False), "refg": _kw_ref(True),
    "AllocN": _kw2(AllocN), "AllocNg": _kw2(AllocNAux), "Free": _kw1(Free),
    "CmpXchg": _kw_cmpxchg(False), "CAS": _kw_cmpxchg(True),
    "Xchg": _kw2(Xchg), "FAA": _kw2(FAA),
    "fst": _kw1(Fst), "snd": _kw1(Snd), "inl": _kw1(InjL), "inr": _kw1(InjR),
    "not": _kw_not, "NewSignal": _kw_newsignal, "SetSignal": _kw_setsignal,
    "NewExpectPerm": _kw_newexpectperm, "Expect": _kw_expect, "lower": _kw_lower,
    "ResolveWith": _kw_resolve, "fork": _kw_fork, "atomic": _kw_atomic, "match": _kw_match,
}


def parse(text: str) -> Prog:
    return Parser(text).program()


def parse_expr(text: str, degrees=None, levels=None, aliases=None, fields_table=None,
               aux: bool = False) -> Expr:
    """Parse a bare expression.  With ``aux`` set, juxtaposition reads as
    auxiliary application, as inside a ghost block."""
    p = Parser(text, aliases, fields_table,
               degrees or wf.Atoms(1), levels or wf.Atoms(1))
    p.aux_depth = int(aux)
    e = p.seq()
    if p.tok.kind != "eof":
        p.fail(f"unexpected {p.tok.text!r}")
    return e


# Printer ------------------------------------------------------------------

SEQ, STMT, ASSIGN, CMP, ADD, MUL, UNARY, APP, ATOM = range(9)


def _b(x: Binder) -> str:
    return "_" if x is None else x


def _path(d) -> str:
    if isinstance(d, wf.Bottom):
        return "bot"
    return "(" + ",".join(str(i) for i in d.path) + ")"


def pretty_print(obj) -> str:
    if isinstance(obj, Prog):
        lines = [f"degrees = {obj.degrees}", f"levels = {obj.levels}"]
        lines.append("init_callperms = [" + ", ".join(_path(d) for d in obj.init_callperms) + "]")
        lines.append("main =")
        lines.append(_pp(obj.main, SEQ, 1))
        return "\n".join(lines) + "\n"
    return _pp(obj, SEQ, 0)


def _ind(n):
    return "  " * n


def _wrap(s, level, ctx):
    return f"({s})" if level < ctx else s


_aux_depth = [0]


def _pp_aux(e, ctx, ind):
    _aux_depth[0] += 1
    try:
        return _pp(e, ctx, ind)
    finally:
        _aux_depth[0] -= 1


def _pp(e, ctx, ind):
    P = _pp
    if isinstance(e, VInt):
        return f"({e.n})" if e.n < 0 else str(e.n)
    if isinstance(e, VBool):
        return "true" if e.b else "false"
    if isinstance(e, VUnit):
        return "()"
    if isinstance(e, VPoison):
        return "poison"
    if isinstance(e, VLoc):
        return f"loc({e.loc})"
    if isinstance(e, VSig):
        return f"sig({e.sig})"
    if isinstance(e, VProph):
        return f"proph({e.pid})"
    if isinstance(e, VDeg):
        return "deg " + _path(e.deg) if isinstance(e.deg, wf.Bottom) else "deg" + _path(e.deg)
    if isinstance(e, VLev):
        return "lev" + _path(e.lev)
    if isinstance(e, (VPair, Pair)):
        return f"({P(e.a, SEQ, ind)}, {P(e.b, SEQ, ind)})"
    if isinstance(e, VInjL):
        return _wrap("inl " + P(e.v, ATOM, ind), APP, ctx)
    if isinstance(e, VInjR):
        return _wrap("inr " + P(e.v, ATOM, ind), APP, ctx)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, (Rec, VRec)):
        params = f"{_b(e.x)} ghost {_b(e.y)}" if e.y is not None else _b(e.x)
        head = f"rec {_b(e.f)} {params} ->" if e.f is not None else f"fun {params} ->"
        s = f"{head}\n{_ind(ind + 1)}{P(e.body, SEQ, ind + 1)}"
        return _wrap(s, SEQ, ctx)
    if isinstance(e, (AuxLam, VAux)):
        return _wrap(f"gfun {_b(e.x)} -> {_pp_aux(e.body, SEQ, ind + 1)}", SEQ, ctx)
    if isinstance(e, App):
        fn = P(e.fn, APP if isinstance(e.fn, AuxApp) else ATOM, ind)
        if e.aux == UNIT and not _aux_depth[0]:
            return _wrap(f"{fn} {P(e.arg, ATOM, ind)}", APP, ctx)
        return _wrap(f"{fn} {P(e.arg, ATOM, ind)} ghost {_pp_aux(e.aux, ATOM, ind)}", APP, ctx)
    if isinstance(e, AuxApp):
        fn = P(e.fn, APP if isinstance(e.fn, AuxApp) else ATOM, ind)
        return _wrap(f"{fn} {P(e.arg, ATOM, ind)}", APP, ctx)
    if isinstance(e, UnOp):
        if e.op == "not":
            return _wrap("not " + P(e.e, ATOM, ind), APP, ctx)
        inner = P(e.e, ATOM, ind)
        if isinstance(e.e, VInt) and not inner.startswith("("):
            inner = f"({inner})"
        return _wrap("- " + inner, UNARY, ctx)
    if isinstance(e, BinOp):
        if e.op in ("<", "<=", "=", "!="):
            return _wrap(f"{P(e.l, ADD, ind)} {e.op} {P(e.r, ADD, ind)}", CMP, ctx)
        if e.op in ("*", "%"):
            return _wrap(f"{P(e.l, MUL, ind)} {e.op} {P(e.r, UNARY, ind)}", MUL, ctx)
        return _wrap(f"{P(e.l, ADD, ind)} {e.op} {P(e.r, MUL, ind)}", ADD, ctx)
    if isinstance(e, If):
        s = (f"if {P(e.c, SEQ, ind)} then {P(e.t, STMT, ind + 1)}"
             f" else {P(e.f, STMT, ind + 1)}")
        return _wrap(s, STMT, ctx)
    if isinstance(e, Fst):
        return _wrap("fst " + P(e.e, ATOM, ind), APP, ctx)
    if isinstance(e, Snd):
        if isinstance(e.e, CmpXchg):
            c = e.e
            return _wrap(f"CAS {P(c.l, ATOM, ind)} {P(c.e1, ATOM, ind)} {P(c.e2, ATOM, ind)}", APP, ctx)
        return _wrap("snd " + P(e.e, ATOM, ind), APP, ctx)
    if isinstance(e, InjL):
        return _wrap("inl " + P(e.e, ATOM, ind), APP, ctx)
    if isinstance(e, InjR):
        return _wrap("inr " + P(e.e, ATOM, ind), APP, ctx)
    if isinstance(e, Match):
        return _wrap(f"match {P(e.e, SEQ, ind)} with inl {_b(e.x)} -> {P(e.l, SEQ, ind + 1)}"
                     f" | inr {_b(e.y)} -> {P(e.r, SEQ, ind + 1)} end", APP, ctx)
    if isinstance(e, Let):
        if e.x is None:
            s = f"{P(e.e1, STMT, ind)};\n{_ind(ind)}{P(e.e2, SEQ, ind)}"
        else:
            s = f"let {e.x} = {P(e.e1, SEQ, ind + 1)} in\n{_ind(ind)}{P(e.e2, SEQ, ind)}"
        return _wrap(s, SEQ, ctx)
    if isinstance(e, LetAux):
        if e.x is None:
            s = f"ghost {{ {_pp_aux(e.e1, SEQ, ind + 1)} }};\n{_ind(ind)}{P(e.e2, SEQ, ind)}"
        else:
            s = f"let ghost {e.x} = {_pp_aux(e.e1, SEQ, ind + 1)} in\n{_ind(ind)}{P(e.e2, SEQ, ind)}"
        return _wrap(s, SEQ, ctx)
    if isinstance(e, Store):
        return _wrap(f"{P(e.l, CMP, ind)} := {P(e.v, CMP, ind)}", ASSIGN, ctx)
    if isinstance(e, StoreAux):
        return _wrap(f"{P(e.l, CMP, ind)} :=g {P(e.v, CMP, ind)}", ASSIGN, ctx)
    if isinstance(e, Load):
        return "!" + P(e.l, ATOM, ind)
    if isinstance(e, LoadAux):
        return "!g " + P(e.l, ATOM, ind)
    simple = {
        AllocN: "AllocN", AllocNAux: "AllocNg", Free: "Free", CmpXchg: "CmpXchg",
        Xchg: "Xchg", FAA: "FAA", SetSignal: "SetSignal",
        ResolveWith: None,
    }
    if type(e) in simple and simple[type(e)]:
        args = " ".join(P(c, ATOM, ind) for c in subterms(e))
        return _wrap(f"{simple[type(e)]} {args}", APP, ctx)
    if isinstance(e, NewSignal):
        return _wrap(f"NewSignal {P(e.t, ATOM, ind)} {P(e.lev, ATOM, ind)}", APP, ctx)
    if isinstance(e, NewExpectPerm):
        args = " ".join(P(c, ATOM, ind) for c in (e.t, e.s, e.d, e.d2))
        return _wrap(f"NewExpectPerm {args}", APP, ctx)
    if isinstance(e, Expect):
        args = " ".join(P(c, ATOM, ind) for c in (e.t, e.s, e.d))
        return _wrap(f"Expect {args}", APP, ctx)
    if isinstance(e, Lower):
        return _wrap(f"lower {P(e.d, ATOM, ind)} to {P(e.n, ATOM, ind)} times "
                     f"{P(e.d2, ATOM, ind)} at {P(e.t, ATOM, ind)}", APP, ctx)
    if isinstance(e, ResolveWith):
        return _wrap(f"ResolveWith {P(e.e, ATOM, ind)} at {P(e.p, ATOM, ind)} to {P(e.v, ATOM, ind)}", APP, ctx)
    if isinstance(e, CurrentThread):
        return "cur"
    if isinstance(e, Finish):
        return "Finish"
    if isinstance(e, Abort):
        return "Abort"
    if isinstance(e, NewProph):
        return "NewProph"
    if isinstance(e, Fork):
        sigs = ", ".join(_pp_aux(s, ATOM, ind) for s in e.sigs)
        return _wrap(f"fork [{sigs}] {{\n{_ind(ind + 1)}{P(e.body, SEQ, ind + 1)}\n{_ind(ind)}}}",
                     APP, ctx)
    if isinstance(e, Atomic):
        return _wrap(f"atomic {{ {P(e.body, SEQ, ind + 1)} }}", APP, ctx)
    raise TypeError(f"cannot print {e!r}")


# Erasability discipline -----------------------------------------------------

CLAUSES = (
    "anf",
    "aux construct outside let-aux",
    "function shape",
    "aux variable escapes to real code",
    "real-heap write in aux code",
    "real function application in aux code",
    "atomic block shape",
    "prophecy construct",
)


@dataclass(frozen=True)
class Violation:
    clause: str
    message: str
    location: tuple  # path of (node type, field) pairs from main


@dataclass
class Report:
    violations: list

    @property
    def ok(self):
        return not self.violations

    def clauses(self):
        return [v.clause for v in self.violations]


class _Checker:
    def __init__(self):
        self.out = []

    def add(self, clause, msg, loc):
        self.out.append(Violation(clause, msg, loc))

    def walk(self, e, loc, aux, stmt, auxvars):
        """aux: inside an aux position; stmt: a let form is allowed here;
        auxvars: names bound by aux binders that real code must not mention."""
        name = type(e).__name__
        here = loc + (name,)
        if isinstance(e, (Let, LetAux)) and not stmt:
            self.add("anf", f"{name} in operand position", here)
        if isinstance(e, (NewProph, ResolveWith, VProph)):
            self.add("prophecy construct", f"{name} is not supported", here)
        if not aux:
            if isinstance(e, GHOST_OPS + AUX_HEAP_OPS + (AuxLam, AuxApp, VAux, VDeg, VLev)):
                self.add("aux construct outside let-aux", f"{name} in real code", here)
            if isinstance(e, Var) and e.name in auxvars:
                self.add("aux variable escapes to real code", f"{e.name} used in real code", here)
        else:
            if isinstance(e, REAL_HEAP_WRITES):
                self.add("real-heap write in aux code", f"{name} inside aux code", here)
            if isinstance(e, App):
                self.add("real function application in aux code", "real call inside aux code", here)
            if isinstance(e, (Rec, VRec)):
                self.add("function shape", "real function defined inside aux code", here)
        if isinstance(e, Atomic):
            self.check_atomic(e.body, here + ("body",))

        def sub(child, fld, aux_=aux, stmt_=False, vars_=auxvars):
            self.walk(child, here + (fld,), aux_, stmt_, vars_)

        if isinstance(e, (Let,)):
            sub(e.e1, "e1", stmt_=aux)
            sub(e.e2, "e2", stmt_=True, vars_=self.bind(auxvars, aux, e.x))
        elif isinstance(e, LetAux):
            sub(e.e1, "e1", aux_=True, stmt_=True)
            inner = auxvars | {e.x} if e.x is not None else auxvars
            sub(e.e2, "e2", stmt_=True, vars_=inner if not aux else auxvars)
        elif isinstance(e, (Rec, VRec)):
            vars_ = auxvars - {e.f, e.x}
            if e.y is not None:
                vars_ = vars_ | {e.y}
            sub(e.body, "body", stmt_=True, vars_=vars_)
        elif isinstance(e, (AuxLam, VAux)):
            sub(e.body, "body", aux_=True, stmt_=True)
        elif isinstance(e, App):
            sub(e.fn, "fn")
            sub(e.arg, "arg")
            sub(e.aux, "aux", aux_=True, stmt_=True)
        elif isinstance(e, If):
            sub(e.c, "c")
            sub(e.t, "t", stmt_=True)
            sub(e.f, "f", stmt_=True)
        elif isinstance(e, Match):
            sub(e.e, "e")
            sub(e.l, "l", stmt_=True, vars_=self.bind(auxvars, aux, e.x))
            sub(e.r, "r", stmt_=True, vars_=self.bind(auxvars, aux, e.y))
        elif isinstance(e, Fork):
            for i, s in enumerate(e.sigs):
                sub(s, f"sigs[{i}]", aux_=True, stmt_=True)
            sub(e.body, "body", stmt_=True)
        elif isinstance(e, Atomic):
            sub(e.body, "body", stmt_=True)
        else:
            for fld in _EXPR_FIELDS.get(type(e), ()):
                sub(getattr(e, fld), fld)

    @staticmethod
    def bind(auxvars, aux, x):
        if aux or x is None:
            return auxvars
        return auxvars - {x}

    def check_atomic(self, body, loc):
        prims = []
        bad = []

        def scan(e, aux):
            if isinstance(e, LetAux):
                scan(e.e1, True)
                scan(e.e2, aux)
                return
            if isinstance(e, App):
                scan(e.aux, True)
            if not aux:
                if isinstance(e, REAL_HEAP_OPS):
                    prims.append(type(e).__name__)
                if isinstance(e, (App, Fork, Atomic)):
                    bad.append(type(e).__name__)
            if isinstance(e, Fork):
                for s in e.sigs:
                    scan(s, True)
            if isinstance(e, (Rec, VRec, AuxLam, VAux)):
                # function bodies run later, outside this block
                return
            for fld in _EXPR_FIELDS.get(type(e), ()):
                if isinstance(e, App) and fld == "aux":
                    continue
                scan(getattr(e, fld), aux)

        scan(body, False)
        if bad:
            self.add("atomic block shape", f"atomic block contains {', '.join(bad)}", loc)
        if len(prims) != 1:
            self.add("atomic block shape",
                     f"atomic block has {len(prims)} real atomic primitives, expected 1", loc)


def check_aux_discipline(p) -> Report:
    main = p.main if isinstance(p, Prog) else p
    c = _Checker()
    c.walk(main, (), False, True, frozenset())
    return Report(c.out)
