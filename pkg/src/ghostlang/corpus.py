"""Builders for the bundled example programs.

Every builder returns a :class:`CorpusEntry` holding the program text, the
parameters it was built with, the expected outcome per mode and the bounds
used by the test-suite.  Lock modules are shared text fragments; the degree
and level embeddings a client chooses for them are emitted as ``name``
aliases in the program header, so one module text serves every client.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from string import Template
from typing import Callable, Optional

from . import syntax as S

DEFAULT_STEP_CAP = 100_000


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    text: str
    params: dict = field(default_factory=dict)
    # mode -> set of acceptable run statuses ("AllFinished", "Stuck:Kind", ...)
    expected: dict = field(default_factory=dict)
    step_cap: int = DEFAULT_STEP_CAP
    explore_depth: Optional[int] = None
    explore_visited: int = 10**6
    sound: bool = False
    reconstructed: bool = False
    erased_only: bool = False
    invalid: bool = False
    # scripted-schedule chooser(step, config, runnable) for adversarial demos
    adversarial: Optional[Callable] = None
    adversarial_mode: str = "plain"
    # per-configuration invariant: config -> message or None
    invariant: Optional[Callable] = None
    # final-state check on AllFinished runs: config -> list of problems
    final_check: Optional[Callable] = None
    description: str = ""

    @cached_property
    def prog(self) -> S.Prog:
        return S.parse(self.text)

    @property
    def file_name(self) -> str:
        return f"{self.name}.hlt"


def _render(template: str, **subst) -> str:
    return Template(template).substitute(**subst).strip("\n") + "\n"


def _heap_int(c, loc):
    v = c.state.heap.get(loc)
    return v.n if isinstance(v, S.VInt) else None


# Flag program ---------------------------------------------------------------

_FLAG = """
degrees = lexsum(atoms(1), atoms(1))
levels = atoms(1)
init_callperms = [(1,0), bot]
main =
  let f = ref true in
  let ghost s = NewSignal cur 0 in
  $PERM
  fork [] {
    while atomic { ghost { if !f then Expect cur s bot else () }; !f } { () }
  };
  f := false;
  $SET
"""


def build_flag_example(missing_set: bool = False, missing_expectperm: bool = False) -> CorpusEntry:
    """Main clears a flag the forkee busy-waits on; the forkee's loop is
    paid for by expecting the main thread's signal."""
    text = _render(
        _FLAG,
        PERM="" if missing_expectperm else "ghost { NewExpectPerm cur s (1,0) bot };",
        SET="()" if missing_set else "ghost { SetSignal cur s }",
    )
    if missing_set:
        return CorpusEntry("flag_missing_set", text, {"missing_set": True},
                           {"sound": {"Stuck:UnfulfilledObligations"},
                            "explore": {"Stuck:UnfulfilledObligations"}}, invalid=True,
                           explore_depth=200,
                           description="flag program that never sets its signal")
    if missing_expectperm:
        return CorpusEntry("flag_missing_expectperm", text, {"missing_expectperm": True},
                           {"sound": {"AllFinished", "Stuck:ExpectWithoutPermission"},
                            "explore": {"Stuck:ExpectWithoutPermission"}}, invalid=True,
                           explore_depth=200,
                           description="flag program without an expect permission")

    def heap_ok(c):
        v = c.state.heap.get(0)
        return [] if v == S.FALSE else [f"flag cell holds {v}"]

    return CorpusEntry("flag", text, {}, {"sound": {"AllFinished"}, "plain": {"AllFinished"}},
                       sound=True, explore_depth=400, final_check=heap_ok,
                       description="busy-wait on a flag cleared by the main thread")


# Spinlock and the three-thread handoff client -------------------------------

SPINLOCK_MODULE = """
  let acquire = fun lk ghost a ->
    while atomic {
      let r = CAS lk false true in
      ghost { if r then (snd a) () else (fst a) () };
      not r
    } { () } in
  let release = fun lk ghost k ->
    atomic { ghost { k () }; lk := false } in
"""


def build_spinlock_module() -> str:
    """Test-and-set lock taking (eta, kappa) on acquire and kappa on release."""
    return SPINLOCK_MODULE


_MOTIVATING_HEADER = """
degrees = lexsum(atoms(1), atoms(1), atoms(1))
levels = lexsum(atoms(1), atoms(1), atoms(1))
name D1 = $D1
name D2 = $D2
name D3 = $D3
name L3 = $L3
name S1 = $S1
name L2 = $L2
init_callperms = [D1]
main =
"""

_MOTIVATING_BUSY = """
  let lk = ref false in
  let f = ref true in
  let ghost l2 = refg () in
  let ghost l3 = refg () in
  let ghost s1 = NewSignal cur S1 in
  ghost {
    lower D1 to 3 times D2 at cur;
    NewExpectPerm cur s1 D2 D3;
    lower D2 to 4 times D3 at cur
  };
  fork [] {
    while atomic { ghost { if !f then Expect cur s1 D3 else () }; !f } { () };
    release lk ghost (gfun _ -> SetSignal cur !g l2)
  };
$RIGHT
$LEFT
  f := false;
  ghost { SetSignal cur s1 }
"""

_MOTIVATING_EXIT = """
  let lk = ref false in
  let f = ref true in
  let ghost l2 = refg () in
  let ghost l3 = refg () in
  ghost { lower D1 to 3 times D2 at cur; lower D2 to 4 times D3 at cur };
  fork [] {
    (if !f then Abort else ());
    release lk ghost (gfun _ -> SetSignal cur !g l2)
  };
$RIGHT
$LEFT
  f := false
"""

_MOTIVATING_RIGHT = """
  fork [] {
    let ghost started = refg false in
    let ghost eta = gfun _ ->
      (if !g started then () else (started :=g true; NewExpectPerm cur !g l2 D2 D3));
      Expect cur !g l2 D3 in
    acquire lk ghost (eta, gfun _ -> l3 :=g NewSignal cur L3);
    release lk ghost (gfun _ -> SetSignal cur !g l3)
  };
"""

_MOTIVATING_LEFT = """
  let ghost started = refg false in
  let ghost eta = gfun _ ->
    (if !g started then () else (started :=g true; NewExpectPerm cur !g l3 D2 D3));
    Expect cur !g l3 D3 in
  acquire lk ghost (eta, gfun _ -> l2 :=g NewSignal 2 L2);
"""

# the client's own degree and level choices; the lock-side degree D3 is the
# embedding of the spinlock's top degree into the client universe
MOTIVATING_EMBEDDING = {"D1": "(2,0)", "D2": "(1,0)", "D3": "(0,0)",
                        "L3": "(0,0)", "S1": "(1,0)", "L2": "(2,0)"}

MOTIVATING_EXIT_EMBEDDING = {"D1": "(2,0)", "D2": "(1,0)", "D3": "(0,0)",
                             "L3": "(0,0)", "S1": "(0,0)", "L2": "(0,0)"}


def build_motivating_client(exit_guard: bool = False, embedding: dict = None) -> CorpusEntry:
    """Left acquires and clears ``f``; middle releases the left thread's
    lock; right acquires and releases normally.

    The default variant makes the middle thread busy-wait on ``f``.  With
    ``exit_guard`` the middle thread instead aborts the whole program when
    it sees ``f`` still set, as in the original handoff example.
    """
    emb = dict(MOTIVATING_EXIT_EMBEDDING if exit_guard else MOTIVATING_EMBEDDING)
    emb.update(embedding or {})
    body = _MOTIVATING_EXIT if exit_guard else _MOTIVATING_BUSY
    text = (_render(_MOTIVATING_HEADER, **emb) + SPINLOCK_MODULE.strip("\n") + "\n"
            + _render(body, RIGHT=_MOTIVATING_RIGHT.strip("\n"), LEFT=_MOTIVATING_LEFT.strip("\n")))
    if exit_guard:
        return CorpusEntry("motivating_client_exit", text, {"embedding": emb, "exit_guard": True},
                           {"sound": {"AllFinished", "Aborted"}, "plain": {"AllFinished", "Aborted"}},
                           explore_depth=600,
                           description="handoff client whose middle thread exits if run too early")
    return CorpusEntry("motivating_client", text, {"embedding": emb},
                       {"sound": {"AllFinished"}, "plain": {"AllFinished"}},
                       sound=True, explore_depth=600,
                       description="lock acquired by the left thread and released by the middle one")


# Plain programs the erased handoff clients must coincide with.
MOTIVATING_ERASED = """
degrees = atoms(1)
levels = atoms(1)
init_callperms = []
main =
  let acquire = fun lk ->
    while atomic { let r = CAS lk false true in not r } { () } in
  let release = fun lk -> lk := false in
  let lk = ref false in
  let f = ref true in
  fork [] {
    while !f { () };
    release lk
  };
  fork [] {
    acquire lk;
    release lk
  };
  acquire lk;
  f := false;
  ()
"""

MOTIVATING_EXIT_ERASED = """
degrees = atoms(1)
levels = atoms(1)
init_callperms = []
main =
  let acquire = fun lk ->
    while atomic { let r = CAS lk false true in not r } { () } in
  let release = fun lk -> lk := false in
  let lk = ref false in
  let f = ref true in
  fork [] {
    (if !f then Abort else ());
    release lk
  };
  fork [] {
    acquire lk;
    release lk
  };
  acquire lk;
  f := false
"""


# Ticketlock -----------------------------------------------------------------

# A lock is three real cells (owner, next, meta).  The aux shadow of ``meta``
# holds (kappa array, (capacity, (module top degree, eta top degree))).
TICKETLOCK_MODULE = """
  let tl_new = fun _ ghost d ->
    let lk = AllocN 3 0 in
    ghost { lk.meta :=g (AllocNg (fst d) (), d) };
    lk in
  let tl_acquire = fun lk ghost a ->
    let t = atomic {
      ghost {
        let m = !g lk.meta in
        let n = !(lk.next) in
        let o = !(lk.owner) in
        if n = o then (snd a) ()
        else (lower (fst (snd (snd m))) to (n - o) times (snd (snd (snd m))) at cur;
              (fst m) +. (n % fst (snd m)) :=g snd a)
      };
      FAA lk.next 1
    } in
    while atomic {
      ghost { if !(lk.owner) != t then (fst a) () else () };
      !(lk.owner) != t
    } { () };
    t in
  let tl_release = fun lk ghost k ->
    atomic {
      ghost { k () };
      let r = FAA lk.owner 1 in
      ghost {
        let m = !g lk.meta in
        let o = !(lk.owner) in
        if o < !(lk.next) then (!g ((fst m) +. (o % fst (snd m)))) () else ()
      };
      r
    } in
  let tl_alone = fun lk -> !(lk.owner) + 1 = !(lk.next) in
"""

TICKETLOCK_FAIRNESS_LINE = "lower (fst (snd (snd m))) to (n - o) times (snd (snd (snd m))) at cur;"


def build_ticketlock_module(fairness: bool = True) -> str:
    """FIFO ticket lock with acquire/release/alone.  Without ``fairness``
    a waiter gets no compensation for being bypassed."""
    if fairness:
        return TICKETLOCK_MODULE
    return TICKETLOCK_MODULE.replace(TICKETLOCK_FAIRNESS_LINE, "")


# Client-side eta for ticket-lock style fair modules: buys one expect
# permission per distinct holder signal, then expects it.
_HOLDER_ETA = """
    let ghost hseen = refg () in
    let ghost eta = gfun _ ->
      let s = !g holder in
      (if !g hseen = s then () else (hseen :=g s; NewExpectPerm cur s TOP_ETA BOT_ETA));
      Expect cur s BOT_ETA in
    let ghost kappa = gfun _ -> holder :=g NewSignal me HOLDER in
"""

_TICKET_CLIENT = """
degrees = lexsum(lexsum(atoms(2), atoms(1)), atoms(1))
levels = atoms(1)
name BOT_ETA = (0,0,0)
name TOP_ETA = (0,0,1)
name TOP_TL = (0,1,0)
name TOP = (1,0)
name HOLDER = 0
fields owner next meta
init_callperms = [TOP]
main =
  ghost { lower TOP to 2 times TOP_TL at cur; lower TOP_TL to 12 times BOT_ETA at cur };
  let log = AllocN $N (-1) in
  let cnt = ref 0 in
$MODULE
  let lk = tl_new () ghost ($N, (deg TOP_TL, deg TOP_ETA)) in
  let ghost holder = refg () in
  let worker = fun _ ->
    let ghost me = cur in
$ETA
    let t = tl_acquire lk ghost (eta, kappa) in
    let c = !cnt in
    log[c] := t;
    cnt := c + 1;
    tl_release lk ghost (gfun _ -> SetSignal cur !g holder) in
$FORKS
  ()
"""


def _ticket_fifo_invariant(n):
    def inv(c):
        for k in range(n):
            v = _heap_int(c, k)
            if v not in (None, -1, k):
                return f"critical section {k} entered with ticket {v}"
        return None
    return inv


def _ticket_final(n):
    def check(c):
        probs = []
        if _heap_int(c, n) != n:
            probs.append(f"counter is {_heap_int(c, n)}, expected {n}")
        got = [_heap_int(c, k) for k in range(n)]
        if got != list(range(n)):
            probs.append(f"acquisition order {got} differs from ticket order")
        return probs
    return check


def build_ticketlock(n: int = 2, fairness: bool = True) -> CorpusEntry:
    """``n`` threads each take the ticket lock once, record their ticket in
    a log slot indexed by a shared counter, bump the counter and release."""
    if n < 1:
        raise ValueError("need at least one client thread")
    forks = "\n".join("  fork [] { worker () };" for _ in range(n))
    text = _render(_TICKET_CLIENT, N=n, MODULE=build_ticketlock_module(fairness).strip("\n"),
                   ETA=_HOLDER_ETA.strip("\n"), FORKS=forks)
    name = f"ticketlock{n}" + ("" if fairness else "_nofairness")
    expected = ({"sound": {"AllFinished"}, "plain": {"AllFinished"}} if fairness
                else {"explore": {"Stuck:MissingCallPerm"}})
    return CorpusEntry(name, text, {"n": n, "fairness": fairness}, expected,
                       sound=fairness, reconstructed=True, invalid=not fairness,
                       explore_depth=1000, invariant=_ticket_fifo_invariant(n),
                       final_check=_ticket_final(n),
                       description=f"{n}-thread ticket lock client"
                       + ("" if fairness else " without bypass compensation"))


# Distinguishing client ------------------------------------------------------

_DISTINGUISHING_TICKET = """
degrees = lexsum(lexsum(atoms(2), atoms(1)), atoms(2))
levels = atoms(2)
name BOT_ETA = (0,0,0)
name TOP_ETA = (0,0,1)
name TOP_TL = (0,1,0)
name ITER = (1,0)
name TOP = (1,1)
name HOLDER = 0
name DONE = 1
fields owner next meta
init_callperms = [TOP, ITER]
main =
  let ghost sdone = NewSignal cur DONE in
  ghost {
    NewExpectPerm cur sdone TOP ITER;
    lower ITER to 2 times TOP_TL at cur;
    lower TOP_TL to 12 times BOT_ETA at cur
  };
  let done = ref false in
$MODULE
  let lk = tl_new () ghost (2, (deg TOP_TL, deg TOP_ETA)) in
  let ghost holder = refg () in
  fork [] {
    let ghost me = cur in
$ETA
    while atomic {
      ghost {
        if !done then () else
          (Expect cur sdone ITER;
           lower ITER to 2 times TOP_TL at cur;
           lower TOP_TL to 12 times BOT_ETA at cur)
      };
      not !done
    } {
      tl_acquire lk ghost (eta, kappa);
      tl_release lk ghost (gfun _ -> SetSignal cur !g holder)
    }
  };
  fork [sdone] {
    let ghost me = cur in
$ETA
    tl_acquire lk ghost (eta, kappa);
    done := true;
    tl_release lk ghost (gfun _ -> SetSignal cur !g holder; SetSignal cur sdone)
  };
  ()
"""

_DISTINGUISHING_SPIN = """
degrees = atoms(1)
levels = atoms(1)
init_callperms = []
main =
  let lk = ref false in
  let done = ref false in
  let acquire = fun lk ->
    while atomic { let r = CAS lk false true in not r } { () } in
  let release = fun lk -> lk := false in
  fork [] {
    while not !done { acquire lk; release lk }
  };
  fork [] {
    acquire lk;
    done := true;
    release lk
  };
  ()
"""


def _starve_setter(step, c, runnable):
    """Run the looping thread while the lock is free; while it is held,
    alternate between both threads so the setter's CAS always fails."""
    if 1 in runnable:
        return 1
    if 3 not in runnable:
        return runnable[0]
    if 2 not in runnable:
        return 3
    held = c.state.heap.get(0) == S.TRUE
    if not held:
        return 2
    return 3 if step % 2 == 0 else 2


def build_distinguishing_client(lock: str = "ticketlock") -> CorpusEntry:
    """One thread repeatedly acquires and releases while ``done`` is unset;
    the other acquires once and sets ``done``.  Only a fair lock guarantees
    the setter gets in."""
    if lock == "ticketlock":
        text = _render(_DISTINGUISHING_TICKET, MODULE=TICKETLOCK_MODULE.strip("\n"),
                       ETA=_HOLDER_ETA.strip("\n"))
        return CorpusEntry("distinguishing_ticketlock", text, {"lock": lock},
                           {"sound": {"AllFinished"}, "plain": {"AllFinished"}},
                           sound=True, reconstructed=True, explore_depth=300,
                           description="fair lock: the setter is bypassed at most once")
    if lock == "spinlock":
        return CorpusEntry("distinguishing_spinlock", _DISTINGUISHING_SPIN.strip() + "\n",
                           {"lock": lock},
                           {"plain": {"AllFinished"}, "adversarial": {"StepCapExceeded"}},
                           erased_only=True, reconstructed=True, adversarial=_starve_setter,
                           step_cap=20_000,
                           description="unfair lock: an adversarial fair schedule starves the setter")
    raise ValueError(f"unknown lock module {lock!r}")


# Cohort lock ----------------------------------------------------------------

_COHORT = """
degrees = lexsum(lexsum(atoms(2), atoms(1), atoms(1)), atoms(1), atoms(1), atoms(1))
levels = lexsum(atoms(1), atoms(1), atoms(1))
name BOT_ETA = (0,0,0)
name TOP_ETA = (0,0,1)
name SIG_EP = (0,1,0)
name TL_ETA = (0,1,0)
name LL_ETA = (0,2,0)
name TOP_LL = (1,0)
name TOP_TL = (2,0)
name TOP = (3,0)
name HOLDER = (0,0)
name HANDSHAKE = (1,0)
fields owner next meta
init_callperms = [TOP]
main =
  ghost {
    lower TOP to 2 times TOP_TL at cur;
    lower TOP_TL to 2 times TOP_LL at cur;
    lower TOP_LL to 40 times BOT_ETA at cur
  };
  let log = AllocN $N (-1) in
  let cnt = ref 0 in
  let count = AllocN $C 0 in
  let passing = AllocN $C false in
$MODULE
  let tl = tl_new () ghost ($N, (deg TOP_TL, deg TL_ETA)) in
  let lls = AllocN $C 0 in
$LLS
  let ghost phase = AllocNg $C 0 in
  let ghost acqsig = AllocNg $C () in
  let ghost relsig = AllocNg $C () in
  let cl_acquire = fun c ghost ar ->
    let ghost me = cur in
    let ghost a = fst ar in
    let ghost llround = fst (snd ar) in
    let ghost tlround = fst (snd (snd ar)) in
    let ghost hsseen = snd (snd (snd ar)) in
    let ll = !(lls +. c) in
    let ghost ll_eta = gfun _ ->
      let o = !(ll.owner) in
      (if !g llround = o then () else
        (llround :=g o; lower LL_ETA to 3 times SIG_EP at cur; lower SIG_EP to 1 times TOP_ETA at cur));
      let ph = !g (phase +. c) in
      if ph = 1 then (fst a) ()
      else (let s = (if ph = 0 then !g (acqsig +. c) else !g (relsig +. c)) in
            (if !g hsseen = s then () else (hsseen :=g s; NewExpectPerm cur s SIG_EP BOT_ETA));
            Expect cur s BOT_ETA) in
    let ghost ll_kappa = gfun _ ->
      if !(passing +. c) then (phase +. c :=g 1; (snd a) ())
      else (acqsig +. c :=g NewSignal me HANDSHAKE; phase +. c :=g 0) in
    let ghost tl_eta = gfun _ ->
      let o = !(tl.owner) in
      (if !g tlround = o then () else (tlround :=g o; lower TL_ETA to $PERROUND times TOP_ETA at cur));
      (fst a) () in
    let ghost tl_kappa = gfun _ ->
      SetSignal me !g (acqsig +. c);
      phase +. c :=g 1;
      (snd a) () in
    tl_acquire ll ghost (ll_eta, ll_kappa);
    if !(passing +. c) then () else (tl_acquire tl ghost (tl_eta, tl_kappa); ()) in
  let cl_release = fun c ghost k ->
    let ghost me = cur in
    let ll = !(lls +. c) in
    let n = !(count +. c) in
    if n < $MAX && not (tl_alone ll) then
      (count +. c := n + 1;
       passing +. c := true;
       tl_release ll ghost k;
       ())
    else
      (count +. c := 0;
       passing +. c := false;
       tl_release tl ghost (gfun _ ->
         k ();
         relsig +. c :=g NewSignal me HANDSHAKE;
         phase +. c :=g 2);
       tl_release ll ghost (gfun _ -> SetSignal me !g (relsig +. c));
       ()) in
  let ghost holder = refg () in
  let worker = fun c ghost r ->
    let ghost me = cur in
    let ghost hseen = fst r in
$ETA
    cl_acquire c ghost ((eta, kappa), snd r);
    let k = !cnt in
    log[k] := (c, !(passing +. c));
    cnt := k + 1;
    cl_release c ghost (gfun _ -> SetSignal cur !g holder) in
$FORKS
  ()
"""


def _cohort_layout(n, cohorts):
    # log 0..n-1, counter n, handoff counts n+1.., passing flags after
    return {"log": 0, "cnt": n, "count": n + 1, "passing": n + 1 + cohorts}


def _cohort_invariant(n, cohorts, max_):
    lay = _cohort_layout(n, cohorts)

    def inv(c):
        for k in range(cohorts):
            v = _heap_int(c, lay["count"] + k)
            if v is not None and v > max_:
                return f"cohort {k} handed off {v} times in a row (MAX {max_})"
        return None
    return inv


def handoff_runs(entries):
    """Longest run of consecutive intra-cohort handoffs in a completed log
    of (cohort, passed) pairs."""
    best = run = 0
    prev = None
    for coh, passed in entries:
        if passed and coh == prev:
            run += 1
        else:
            run = 0
        best = max(best, run)
        prev = coh
    return best


def _cohort_final(n, cohorts, max_):
    lay = _cohort_layout(n, cohorts)

    def check(c):
        probs = []
        if _heap_int(c, lay["cnt"]) != n:
            probs.append(f"counter is {_heap_int(c, lay['cnt'])}, expected {n}")
        log = []
        for k in range(n):
            v = c.state.heap.get(k)
            if not isinstance(v, S.VPair):
                probs.append(f"log slot {k} unwritten")
                return probs
            log.append((v.a.n, v.b.b))
        for i, (coh, passed) in enumerate(log):
            if passed and (i == 0 or log[i - 1][0] != coh):
                probs.append(f"entry {i} claims a handoff from another cohort")
        if handoff_runs(log) > max_:
            probs.append(f"{handoff_runs(log)} consecutive handoffs exceed MAX {max_}")
        return probs
    return check


def build_cohortlock(cohorts: int = 2, per_cohort: int = 2, max_handoffs: int = 2) -> CorpusEntry:
    """Cohort lock over one top-level ticket lock and one ticket lock per
    cohort.  Each client thread acquires, logs (cohort, passed) in the slot
    named by a shared counter, bumps the counter and releases."""
    n = cohorts * per_cohort
    if n < 2:
        raise ValueError("need at least two client threads")
    if max_handoffs < 1:
        raise ValueError("MAX must be at least 1")
    lls = "\n".join(f"  lls[{c}] := tl_new () ghost ({per_cohort}, (deg TOP_LL, deg LL_ETA));"
                    for c in range(cohorts))
    # per-thread aux cells are allocated up front so that their locations
    # do not depend on the interleaving
    forks = "\n".join(
        "  let ghost r = (refg (), (refg (-1), (refg (-1), refg ()))) in\n"
        f"  fork [] {{ worker {c} ghost r }};"
        for c in range(cohorts) for _ in range(per_cohort))
    eta = _HOLDER_ETA.replace("    let ghost hseen = refg () in\n", "")
    text = _render(_COHORT, N=n, C=cohorts, MAX=max_handoffs, PERROUND=max_handoffs + 1,
                   MODULE=TICKETLOCK_MODULE.strip("\n"), LLS=lls,
                   ETA=eta.strip("\n"), FORKS=forks)
    small = (cohorts, per_cohort, max_handoffs) == (2, 1, 1)
    name = "cohortlock_small" if small else (
        "cohortlock" if (cohorts, per_cohort, max_handoffs) == (2, 2, 2)
        else f"cohortlock_{cohorts}x{per_cohort}_max{max_handoffs}")
    return CorpusEntry(name, text,
                       {"cohorts": cohorts, "per_cohort": per_cohort, "max": max_handoffs},
                       {"sound": {"AllFinished"}, "plain": {"AllFinished"}},
                       sound=not small and name == "cohortlock", reconstructed=True,
                       explore_depth=2000 if small else None,
                       invariant=_cohort_invariant(n, cohorts, max_handoffs),
                       final_check=_cohort_final(n, cohorts, max_handoffs),
                       description=f"cohort lock, {cohorts} cohorts x {per_cohort} threads, MAX={max_handoffs}")


# Livelock under the unsound Expect rule --------------------------------------

_LIVELOCK = """
degrees = atoms(1)
levels = atoms(1)
init_callperms = [bot, bot, bot, bot, bot, bot, bot, bot, bot, bot, bot, bot]
main =
$MODULE
  let x = ref true in
  let y = ref true in
  let ghost mx = refg () in
  let ghost my = refg () in
  ghost { mx :=g NewSignal cur 0; my :=g NewSignal cur 0 };
  let ghost juggle = gfun p ->
    SetSignal cur !g (fst p);
    Expect cur !g (snd p) bot;
    fst p :=g NewSignal cur 0 in
  fork [!g my] {
    acquire x ghost (gfun _ -> juggle (my, mx), gfun _ -> ());
    release y ghost (gfun _ -> SetSignal cur !g my);
    release x ghost (gfun _ -> ())
  };
  acquire y ghost (gfun _ -> juggle (mx, my), gfun _ -> ());
  release x ghost (gfun _ -> SetSignal cur !g mx);
  release y ghost (gfun _ -> ())
"""


def _alternate(step, c, runnable):
    return runnable[step % len(runnable)]


def build_unsound_livelock() -> CorpusEntry:
    """Each thread holds one lock and spins on the other's.  The spin is
    fuelled by bare Expect calls that juggle fresh signals; there is no
    expect permission anywhere."""
    text = _render(_LIVELOCK, MODULE=SPINLOCK_MODULE.strip("\n"))
    return CorpusEntry("unsound_livelock", text, {},
                       {"unsound_expect": {"StepCapExceeded"},
                        "sound": {"Stuck:ExpectWithoutPermission"},
                        "adversarial": {"StepCapExceeded"}},
                       invalid=True, adversarial=_alternate, adversarial_mode="unsound_expect",
                       description="cyclic lock wait that only the unsound Expect rule can fuel")


# Registry -------------------------------------------------------------------

BUILDERS = {
    "flag": build_flag_example,
    "flag_missing_set": lambda: build_flag_example(missing_set=True),
    "flag_missing_expectperm": lambda: build_flag_example(missing_expectperm=True),
    "motivating_client": build_motivating_client,
    "motivating_client_exit": lambda: build_motivating_client(exit_guard=True),
    "ticketlock2": lambda: build_ticketlock(2),
    "ticketlock3": lambda: build_ticketlock(3),
    "ticketlock2_nofairness": lambda: build_ticketlock(2, fairness=False),
    "distinguishing_ticketlock": lambda: build_distinguishing_client("ticketlock"),
    "distinguishing_spinlock": lambda: build_distinguishing_client("spinlock"),
    "cohortlock": lambda: build_cohortlock(2, 2, 2),
    "cohortlock_small": lambda: build_cohortlock(2, 1, 1),
    "cohortlock_2x3_max1": lambda: build_cohortlock(2, 3, 1),
    "unsound_livelock": build_unsound_livelock,
}

SOUND_ENTRIES = ("flag", "motivating_client", "ticketlock2", "ticketlock3",
                 "distinguishing_ticketlock", "cohortlock")

_cache: dict = {}


def get(name: str) -> CorpusEntry:
    if name not in BUILDERS:
        raise KeyError(f"unknown corpus entry {name!r}; known: {', '.join(sorted(BUILDERS))}")
    if name not in _cache:
        _cache[name] = BUILDERS[name]()
    return _cache[name]


def entries():
    return [get(n) for n in BUILDERS]


def sound_entries():
    return [get(n) for n in SOUND_ENTRIES]


def corpus_dir() -> Path:
    env = os.environ.get("GHOSTLANG_CORPUS_DIR")
    if env:
        return Path(env)
    return Path.cwd() / "corpus"


def emit(directory=None) -> list:
    """Write every entry as ``<name>.hlt``; returns the written paths."""
    d = Path(directory) if directory is not None else corpus_dir()
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for e in entries():
        path = d / e.file_name
        path.write_text(e.text)
        out.append(path)
    return out


def load_text(name: str) -> str:
    """Source text for ``name``: a file in the corpus directory when one
    exists there, otherwise the built-in builder's output."""
    path = corpus_dir() / f"{name}.hlt"
    if path.is_file():
        return path.read_text()
    return get(name).text
