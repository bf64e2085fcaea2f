"""Schedulers, recorded runs, replay, bounded interleaving exploration and
the path-fuel diagnostic."""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field

from . import syntax as S
from . import wellfounded as wf
from .semantics import DEFAULT_BUDGET, machine_step, summarize
from .state import FINISHED, Config, canonical_hash, digest, init_config

DEFAULT_CAP = 10**5


# Policies --------------------------------------------------------------------

@dataclass(frozen=True)
class RoundRobin:
    def describe(self):
        return "rr", None


@dataclass(frozen=True)
class RandomFair:
    seed: int

    def describe(self):
        return "random", self.seed


@dataclass(frozen=True)
class Scripted:
    tids: tuple

    def describe(self):
        return "script", None


class ReplayDivergence(Exception):
    def __init__(self, step, tid):
        super().__init__(f"step {step}: thread {tid} is not runnable")
        self.step = step
        self.tid = tid


class _Chooser:
    def __init__(self, policy):
        self.policy = policy
        self.last = 0
        if isinstance(policy, RandomFair):
            self.rng = random.Random(policy.seed)

    def choose(self, step, runnable):
        pol = self.policy
        if isinstance(pol, RoundRobin):
            later = [t for t in runnable if t > self.last]
            t = later[0] if later else runnable[0]
        elif isinstance(pol, RandomFair):
            t = runnable[self.rng.randrange(len(runnable))]
        else:
            if step >= len(pol.tids):
                return None
            t = pol.tids[step]
            if t not in runnable:
                raise ReplayDivergence(step, t)
        self.last = t
        return t


# Traces ------------------------------------------------------------------------

def _deg_str(d) -> str:
    return str(d)


def _key_str(k) -> str:
    if isinstance(k, tuple):
        return f"{k[0]}@{k[1]}"
    return _deg_str(k)


def _counter_delta(before, after) -> dict:
    before = before if before is not None and before is not FINISHED else Counter()
    after = after if after is not None and after is not FINISHED else Counter()
    out = {}
    for k in set(before) | set(after):
        d = after[k] - before[k]
        if d:
            out[_key_str(k)] = d
    return dict(sorted(out.items()))


def ghost_deltas(before, after, events, forks) -> dict:
    """Differences in ghost state between two machine states."""
    deltas = {}
    for name, short in (("call_perms", "cp"), ("expect_perms", "ep"), ("obligations", "ob")):
        per = {}
        bm, am = getattr(before, name), getattr(after, name)
        for t in sorted(set(bm) | set(am)):
            if t in (f[0] for f in forks):
                continue
            d = _counter_delta(bm.get(t), am.get(t))
            if d:
                per[str(t)] = d
        if per:
            deltas[short] = per
    fin = [t for t, o in after.obligations.items()
           if o is FINISHED and before.obligations.get(t) is not FINISHED]
    if fin:
        deltas["finished"] = sorted(fin)
    if after.signals is before.signals:
        set_now, new_sigs = [], []
    else:
        set_now = [s for s, (_l, f) in after.signals.items()
                   if f and not before.signals.get(s, (None, False))[1]]
        new_sigs = [[s, str(after.signals[s][0])]
                    for s in range(before.next_signal, after.next_signal)]
    if set_now:
        deltas["sig_set"] = sorted(set_now)
    if new_sigs:
        deltas["sig_new"] = new_sigs
    exp = [[t, s, _deg_str(d)] for (_k, t, s, d) in events if _k == "expect"]
    if exp:
        deltas["expect"] = exp
    if forks:
        deltas["fork"] = [
            {"tid": t,
             "cp": _counter_delta(Counter(), after.call_perms.get(t, Counter())),
             "ep": _counter_delta(Counter(), after.expect_perms.get(t, Counter())),
             "ob": _counter_delta(Counter(), after.obligations.get(t, Counter()))}
            for t, _ in forks]
    return deltas


@dataclass
class TraceStep:
    index: int
    tid: int
    rule: str
    redex: str
    deltas: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"i": self.index, "tid": self.tid, "rule": self.rule,
                           "redex": self.redex, "d": self.deltas},
                          sort_keys=True, separators=(",", ":"))


@dataclass
class Execution:
    status: str  # AllFinished | Stuck | Aborted | StepCapExceeded | ScriptExhausted
    steps: list
    final: Config
    reason: object = None
    stuck_tid: int = None
    stuck_redex: str = None
    header: dict = field(default_factory=dict)

    @property
    def schedule(self):
        # a stuck run ends with the failed attempt, so replaying reproduces it
        tids = [s.tid for s in self.steps]
        return tids + [self.stuck_tid] if self.status == "Stuck" else tids

    @property
    def final_hash(self):
        return canonical_hash(self.final) if self.final is not None else None

    def status_text(self):
        if self.status == "Stuck":
            return f"Stuck(thread {self.stuck_tid}, {self.reason})"
        return self.status

    def trace_lines(self):
        yield json.dumps(self.header, sort_keys=True, separators=(",", ":"))
        for s in self.steps:
            yield s.to_json()
        footer = {"status": self.status,
                  "reason": str(self.reason) if self.reason else None,
                  "stuck_tid": self.stuck_tid,
                  "final_hash": f"{self.final_hash:016x}" if self.final is not None else None}
        yield json.dumps(footer, sort_keys=True, separators=(",", ":"))

    def trace_text(self) -> str:
        return "\n".join(self.trace_lines()) + "\n"

    def write_trace(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.trace_text())


def program_hash(p: S.Prog) -> str:
    h = f"{digest(p.main) & 0xFFFFFFFFFFFFFFFF:016x}"
    return f"{h}:{p.degrees}:{p.levels}:" + ",".join(map(str, p.init_callperms))


def _header(p, policy, mode):
    name, seed = policy.describe()
    return {"program": program_hash(p), "policy": name, "seed": seed, "mode": mode,
            "degrees": str(p.degrees), "levels": str(p.levels),
            "init_callperms": [str(d) for d in p.init_callperms]}


def load_trace(path) -> Execution:
    with open(path, encoding="utf-8") as fh:
        lines = [json.loads(l) for l in fh if l.strip()]
    if not lines or "program" not in lines[0]:
        raise ValueError("trace has no header line")
    header = lines[0]
    footer = lines[-1] if "status" in lines[-1] else {}
    body = lines[1:-1] if footer else lines[1:]
    steps = [TraceStep(d["i"], d["tid"], d["rule"], d["redex"], d.get("d", {})) for d in body]
    return Execution(footer.get("status", "Unknown"), steps, None,
                     reason=footer.get("reason"), stuck_tid=footer.get("stuck_tid"), header=header)


# Running -------------------------------------------------------------------------

def run(p: S.Prog, policy=RoundRobin(), step_cap: int = DEFAULT_CAP, mode: str = "sound",
        record: bool = True, budget: int = DEFAULT_BUDGET, on_step=None) -> Execution:
    if step_cap < 1:
        raise ValueError("step cap must be positive")
    return run_config(init_config(p), policy, step_cap, mode, record, budget,
                      header=_header(p, policy, mode), on_step=on_step)


def run_config(c: Config, policy, step_cap, mode, record=True, budget=DEFAULT_BUDGET,
               header=None, on_step=None) -> Execution:
    chooser = _Chooser(policy)
    steps = []
    i = 0
    while True:
        runnable = c.runnable()
        if not runnable:
            return Execution("AllFinished", steps, c, header=header or {})
        if i >= step_cap:
            return Execution("StepCapExceeded", steps, c, header=header or {})
        tid = chooser.choose(i, runnable)
        if tid is None:
            return Execution("ScriptExhausted", steps, c, header=header or {})
        r = machine_step(c, tid, mode, budget)
        if r.kind == "stuck":
            return Execution("Stuck", steps, c, reason=r.reason, stuck_tid=tid,
                             stuck_redex=summarize(r.redex), header=header or {})
        if record:
            steps.append(TraceStep(i, tid, r.rule, summarize(r.redex),
                                   ghost_deltas(c.state, r.config.state, r.events, r.forks)))
        else:
            steps.append(TraceStep(i, tid, r.rule, ""))
        if on_step is not None:
            on_step(i, c, r)
        c = r.config
        i += 1
        if r.kind == "aborted":
            return Execution("Aborted", steps, c, header=header or {})


def replay(p: S.Prog, tids, mode: str = "sound", step_cap: int = None) -> Execution:
    tids = tuple(tids)
    cap = step_cap if step_cap is not None else max(len(tids), 1)
    return run(p, Scripted(tids), cap, mode)


def script_from(p: S.Prog, chooser, length: int, mode: str = "sound", config=None):
    """Build a schedule of at most ``length`` choices by consulting
    ``chooser(step, config, runnable)`` at every step."""
    c = config or init_config(p)
    out = []
    for i in range(length):
        runnable = c.runnable()
        if not runnable:
            break
        t = chooser(i, c, runnable)
        r = machine_step(c, t, mode)
        out.append(t)
        if r.kind != "ok":
            break
        c = r.config
    return out


# Exploration -------------------------------------------------------------------

@dataclass
class ExploreReport:
    terminals: Counter
    witnesses: dict
    truncated: bool
    visited: int
    invariant_failures: list = field(default_factory=list)
    max_depth: int = 0

    @property
    def stuck(self):
        return {k: v for k, v in self.witnesses.items() if k.startswith("Stuck")}

    @property
    def stuck_count(self):
        return sum(n for k, n in self.terminals.items() if k.startswith("Stuck"))


def explore(p: S.Prog, depth_cap: int = 2000, visited_cap: int = 10**6, mode: str = "sound",
            invariant=None, budget: int = DEFAULT_BUDGET) -> ExploreReport:
    """Depth-first search over scheduler choices with state memoisation.

    ``invariant(config)`` may return a message; failures are collected with
    the schedule that reached them.
    """
    if depth_cap < 1 or visited_cap < 1:
        raise ValueError("caps must be positive")
    terminals = Counter()
    witnesses = {}
    failures = []
    visited = set()
    truncated = False
    max_depth = 0
    root = init_config(p)
    path = []
    # each frame: [config, runnable tids, next index]
    stack = []

    def enter(c, depth):
        nonlocal truncated, max_depth
        h = canonical_hash(c)
        if h in visited:
            # a state is expanded once; if its first visit hit the depth cap
            # the report is already marked truncated, so nothing is lost
            return False
        if len(visited) >= visited_cap:
            truncated = True
            return False
        visited.add(h)
        max_depth = max(max_depth, depth)
        if invariant is not None:
            msg = invariant(c)
            if msg:
                failures.append((msg, list(path)))
        runnable = c.runnable()
        if not runnable:
            terminals["AllFinished"] += 1
            witnesses.setdefault("AllFinished", list(path))
            return False
        if depth >= depth_cap:
            truncated = True
            return False
        stack.append([c, runnable, 0])
        return True

    enter(root, 0)
    while stack:
        frame = stack[-1]
        c, runnable, k = frame
        if k >= len(runnable):
            stack.pop()
            if path:
                path.pop()
            continue
        frame[2] = k + 1
        tid = runnable[k]
        r = machine_step(c, tid, mode, budget)
        path.append(tid)
        if r.kind == "stuck":
            key = f"Stuck:{r.reason.kind}"
            terminals[key] += 1
            witnesses.setdefault(key, list(path))
            path.pop()
            continue
        if r.kind == "aborted":
            terminals["Aborted"] += 1
            witnesses.setdefault("Aborted", list(path))
            path.pop()
            continue
        if not enter(r.config, len(stack)):
            path.pop()
    return ExploreReport(terminals, witnesses, truncated, len(visited), failures, max_depth)


# Path fuel ---------------------------------------------------------------------------

@dataclass
class FuelReport:
    tid: int
    sequence: list
    monotone: bool
    problems: list


def _parse_key(text):
    if "@" in text:
        s, d = text.split("@", 1)
        return int(s), wf.parse_degree(d)
    return wf.parse_degree(text)


def path_fuel_check(ex: Execution, thread_path: int) -> FuelReport:
    """Replay the ghost deltas recorded in ``ex`` for one thread and check
    that its path fuel never grows and strictly shrinks at each call."""
    header = ex.header
    dom = wf.parse_domain(header["degrees"])
    steps = ex.steps
    tids = {1} | {s.tid for s in steps} | {f["tid"] for s in steps for f in s.deltas.get("fork", [])}
    if thread_path not in tids:
        raise KeyError(f"thread {thread_path} does not occur in the run")
    cp, ep = Counter(), Counter()
    start = None
    if thread_path == 1:
        cp = Counter(wf.parse_degree(d) for d in header["init_callperms"])
        start = 0
    own = [s.index for s in steps if s.tid == thread_path]
    last = own[-1] if own else -1
    # last Expect of each signal on this thread's permissions
    last_expect = {}
    for s in steps:
        for t, sig, _d in s.deltas.get("expect", []):
            if t == thread_path:
                last_expect[sig] = s.index

    def fuel(j):
        out = Counter(+cp)
        for (sig, d), n in ep.items():
            if n <= 0:
                continue
            copies = last_expect.get(sig, -1) - j + 1
            if copies > 0:
                out[d] += n * copies
        return +out

    sequence = []
    problems = []
    for s in steps:
        if start is None:
            for f in s.deltas.get("fork", []):
                if f["tid"] == thread_path:
                    cp = Counter({_parse_key(k): n for k, n in f["cp"].items()})
                    ep = Counter({_parse_key(k): n for k, n in f["ep"].items()})
                    start = s.index + 1
            continue
        if s.index > last:
            break
        key = str(thread_path)
        dcp = s.deltas.get("cp", {}).get(key)
        dep = s.deltas.get("ep", {}).get(key)
        mine = s.tid == thread_path
        if not (dcp or dep or mine):
            continue
        before = fuel(s.index)
        for k, n in (dcp or {}).items():
            cp[_parse_key(k)] += n
        for k, n in (dep or {}).items():
            ep[_parse_key(k)] += n
        after = fuel(s.index + 1)
        if not sequence:
            sequence.append(before)
        sequence.append(after)
        if any(n < 0 for n in cp.values()) or any(n < 0 for n in ep.values()):
            problems.append((s.index, "negative permission count"))
            continue
        decreased = wf.dm_less(dom, after, before)
        if mine and s.rule == "BetaS" and not decreased:
            problems.append((s.index, "call did not decrease path fuel"))
        elif not decreased and after != before:
            problems.append((s.index, "path fuel increased"))
    return FuelReport(thread_path, sequence, not problems, problems)
