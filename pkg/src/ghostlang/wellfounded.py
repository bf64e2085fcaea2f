"""Well-founded degree and level universes.

A domain is either ``Atoms(n)`` (the chain 0 < 1 < ... < n-1) or a
``LexSum`` of child domains ordered lexicographically.  Elements are index
paths: ``(k,)`` in ``Atoms(n)`` and ``(i,) + child_path`` in a ``LexSum``.
Degrees additionally have a distinguished minimum ``BOTTOM``.
"""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Union


class InvalidElement(ValueError):
    pass


class PreconditionViolated(ValueError):
    pass


class Order(enum.Enum):
    LT = -1
    EQ = 0
    GT = 1


@dataclass(frozen=True)
class Atoms:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("Atoms needs a positive count")

    def __str__(self):
        return f"atoms({self.n})"


@dataclass(frozen=True)
class LexSum:
    children: tuple

    def __post_init__(self):
        if not self.children:
            raise ValueError("LexSum needs at least one child")
        object.__setattr__(self, "children", tuple(self.children))

    def __str__(self):
        return "lexsum(" + ", ".join(str(c) for c in self.children) + ")"


Domain = Union[Atoms, LexSum]


@dataclass(frozen=True)
class Bottom:
    """The minimal degree, strictly below every element of every domain."""

    def __str__(self):
        return "bot"

    def __repr__(self):
        return "BOTTOM"


BOTTOM = Bottom()


@dataclass(frozen=True)
class Elem:
    path: tuple

    def __str__(self):
        return "(" + ",".join(str(i) for i in self.path) + ")"


Degree = Union[Bottom, Elem]
Level = Elem


def is_valid(dom: Domain, path: tuple) -> bool:
    while True:
        if not path:
            return False
        head, rest = path[0], path[1:]
        if not isinstance(head, int) or isinstance(head, bool) or head < 0:
            return False
        if isinstance(dom, Atoms):
            return not rest and head < dom.n
        if head >= len(dom.children):
            return False
        dom, path = dom.children[head], rest


def check(dom: Domain, x, *, allow_bottom: bool = True):
    if isinstance(x, Bottom):
        if not allow_bottom:
            raise InvalidElement("bottom is not a level")
        return x
    if not isinstance(x, Elem) or not is_valid(dom, x.path):
        raise InvalidElement(f"{x!s} is not an element of {dom}")
    return x


def _key(x) -> tuple:
    # Bottom sorts before every path; paths compare as tuples, which is
    # exactly the lexicographic order once validity is established.
    if isinstance(x, Bottom):
        return (0,)
    return (1,) + x.path


def compare(dom: Domain, a, b) -> Order:
    check(dom, a)
    check(dom, b)
    ka, kb = _key(a), _key(b)
    if ka < kb:
        return Order.LT
    if ka > kb:
        return Order.GT
    return Order.EQ


def less(dom: Domain, a, b) -> bool:
    return compare(dom, a, b) is Order.LT


def embed(parent: Domain, child_index: int, d) -> Elem:
    if not isinstance(parent, LexSum):
        raise InvalidElement("embedding needs a lexicographic sum")
    if not 0 <= child_index < len(parent.children):
        raise InvalidElement(f"child index {child_index} out of range")
    child = parent.children[child_index]
    check(child, d, allow_bottom=False)
    return Elem((child_index,) + d.path)


def universe(dom: Domain) -> list:
    """All elements in ascending order (finite domains only)."""
    if isinstance(dom, Atoms):
        return [Elem((k,)) for k in range(dom.n)]
    out = []
    for i, child in enumerate(dom.children):
        out.extend(Elem((i,) + e.path) for e in universe(child))
    return out


def top(dom: Domain) -> Elem:
    return universe(dom)[-1]


# Multisets ----------------------------------------------------------------

def multiset(items: Iterable = ()) -> Counter:
    return Counter(items)


def dm_less(dom: Domain, M: Counter, N: Counter) -> bool:
    """Dershowitz-Manna: M < N iff M != N and every element of M - N is
    dominated by some element of N - M."""
    for x in list(M) + list(N):
        check(dom, x)
    M = +Counter(M)
    N = +Counter(N)
    if M == N:
        return False
    only_m = M - N
    only_n = N - M
    if not only_n:
        return False
    biggest = max(only_n, key=_key)
    return all(_key(m) < _key(biggest) for m in only_m)


def lower_preserves_descent(dom: Domain, M: Counter, delta, n: int, delta2) -> bool:
    check(dom, delta)
    check(dom, delta2)
    if M[delta] < 1:
        raise PreconditionViolated(f"{delta} not in the multiset")
    if not less(dom, delta2, delta):
        raise PreconditionViolated(f"{delta2} is not below {delta}")
    if n < 0:
        raise PreconditionViolated("negative count")
    lowered = Counter(M)
    lowered[delta] -= 1
    lowered[delta2] += n
    return dm_less(dom, +lowered, M)


def level_below_all(dom: Domain, lev, obligations: Iterable) -> bool:
    check(dom, lev, allow_bottom=False)
    for _sig, other in obligations:
        check(dom, other, allow_bottom=False)
        if not _key(lev) < _key(other):
            return False
    return True


# Concrete syntax of domain declarations ------------------------------------

_TOKEN = re.compile(r"\s*(?:(atoms|lexsum)|(\d+)|([(),]))")


def parse_domain(text: str) -> Domain:
    toks = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"bad domain syntax at {pos}: {text!r}")
        toks.append(m.group(1) or m.group(2) or m.group(3))
        pos = m.end()
    dom, rest = _parse_dom(toks)
    if rest:
        raise ValueError(f"trailing input in domain: {rest}")
    return dom


def _parse_dom(toks):
    if not toks:
        raise ValueError("unexpected end of domain")
    head = toks[0]
    if head == "atoms":
        if len(toks) < 4 or toks[1] != "(" or not toks[2].isdigit() or toks[3] != ")":
            raise ValueError("expected atoms(<n>)")
        return Atoms(int(toks[2])), toks[4:]
    if head == "lexsum":
        if len(toks) < 2 or toks[1] != "(":
            raise ValueError("expected lexsum(...)")
        toks = toks[2:]
        kids = []
        while True:
            kid, toks = _parse_dom(toks)
            kids.append(kid)
            if toks and toks[0] == ",":
                toks = toks[1:]
                continue
            if toks and toks[0] == ")":
                return LexSum(tuple(kids)), toks[1:]
            raise ValueError("expected , or ) in lexsum")
    raise ValueError(f"unexpected token {head!r} in domain")


def format_degree(d) -> str:
    return str(d)


def parse_degree(text: str):
    text = text.strip()
    if text == "bot":
        return BOTTOM
    inner = text.strip("()")
    return Elem(tuple(int(p) for p in inner.split(",") if p.strip()))
