"""Command-line front end: run, erase, check, explore, fuel, corpus."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus
from . import erasure
from . import scheduler as sched
from . import syntax as S

EXIT_OK = 0
EXIT_STUCK = 2
EXIT_CAP = 3
EXIT_INPUT = 4
EXIT_TRUNCATED = 5
EXIT_IO = 10

MODES = {"sound": "sound", "unsound": "unsound_expect", "plain": "plain", "strict": "strict"}


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _load_source(ref: str):
    """Return (display name, text) for a path or ``corpus:NAME``."""
    if ref.startswith("corpus:"):
        name = ref[len("corpus:"):]
        try:
            return name, corpus.load_text(name)
        except KeyError as exc:
            raise CliError(EXIT_IO, str(exc.args[0])) from None
    path = Path(ref)
    try:
        return path.stem, path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {ref}: {exc.strerror}") from None


def _load_prog(ref: str, check: bool = True):
    name, text = _load_source(ref)
    try:
        p = S.parse(text)
    except S.ParseError as exc:
        raise CliError(EXIT_INPUT, f"parse error in {ref}: {exc}") from None
    if check:
        rep = S.check_aux_discipline(p)
        if not rep.ok:
            raise CliError(EXIT_INPUT, _discipline_text(rep))
    return name, p


def _discipline_text(rep) -> str:
    lines = [f"discipline violation [{v.clause}]: {v.message} at {'/'.join(v.location) or 'top'}"
             for v in rep.violations]
    return "\n".join(lines)


def _read_script(spec: str):
    path = Path(spec)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read schedule {spec}: {exc.strerror}") from None
    first = text.lstrip()[:1]
    if first == "{":
        try:
            return sched.load_trace(path).schedule
        except (ValueError, KeyError) as exc:
            raise CliError(EXIT_INPUT, f"malformed trace {spec}: {exc}") from None
    try:
        return [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise CliError(EXIT_INPUT, f"schedule {spec} must list thread ids") from None


def _policy(args):
    pol = args.policy
    if pol == "rr":
        return sched.RoundRobin()
    if pol == "random":
        return sched.RandomFair(args.seed if args.seed is not None else 0)
    if pol.startswith("script:"):
        return sched.Scripted(tuple(_read_script(pol[len("script:"):])))
    raise CliError(EXIT_INPUT, f"unknown policy {pol!r}")


def _write(path, text):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror}") from None


def _status_exit(status: str) -> int:
    if status in ("AllFinished", "Aborted"):
        return EXIT_OK
    if status == "Stuck":
        return EXIT_STUCK
    return EXIT_CAP


def cmd_run(args) -> int:
    _name, p = _load_prog(args.program, check=not args.no_check)
    policy = _policy(args)
    ex = sched.run(p, policy, args.cap, MODES[args.mode])
    if args.trace:
        _write(args.trace, ex.trace_text())
    n = len(ex.steps)
    if ex.status == "Stuck":
        print(f"Stuck after {n} steps: thread {ex.stuck_tid} at step {n}: {ex.reason}")
        print(f"  redex: {ex.stuck_redex}")
    elif ex.status == "StepCapExceeded":
        print(f"StepCapExceeded after {n} steps")
    else:
        print(f"{ex.status} in {n} steps")
    print(f"final hash {ex.final_hash:016x}")
    return _status_exit(ex.status)


def cmd_erase(args) -> int:
    _name, p = _load_prog(args.program, check=False)
    try:
        plain = erasure.erase_prog(p)
    except erasure.DisciplineViolation as exc:
        raise CliError(EXIT_INPUT, _discipline_text(exc.report)) from None
    text = S.pretty_print(plain) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_check(args) -> int:
    _name, p = _load_prog(args.program, check=False)
    rep = S.check_aux_discipline(p)
    if rep.ok:
        print("ok")
        return EXIT_OK
    print(_discipline_text(rep))
    return EXIT_INPUT


def cmd_explore(args) -> int:
    name, p = _load_prog(args.program, check=not args.no_check)
    mode = MODES[args.mode]
    rep = sched.explore(p, args.depth, args.visited, mode)
    for key in sorted(rep.terminals):
        print(f"{key}: {rep.terminals[key]}")
    print(f"visited {rep.visited} states, max depth {rep.max_depth}, truncated={str(rep.truncated).lower()}")
    if rep.stuck:
        key = sorted(rep.stuck)[0]
        schedule = rep.stuck[key]
        ex = sched.replay(p, schedule, mode)
        out = args.trace or f"{name}.witness.jsonl"
        _write(out, ex.trace_text())
        print(f"witness for {key} ({len(ex.steps)} steps) written to {out}")
        return EXIT_STUCK
    if rep.truncated:
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_fuel(args) -> int:
    try:
        ex = sched.load_trace(args.trace_file)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.trace_file}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_INPUT, f"malformed trace: {exc}") from None
    try:
        rep = sched.path_fuel_check(ex, args.tid)
    except KeyError as exc:
        raise CliError(EXIT_INPUT, str(exc.args[0])) from None
    except (ValueError, TypeError) as exc:
        raise CliError(EXIT_INPUT, f"malformed trace: {exc}") from None
    print(f"thread {rep.tid}: {len(rep.sequence)} path-fuel samples, monotone={str(rep.monotone).lower()}")
    if rep.sequence:
        print(f"  first {_fmt_ms(rep.sequence[0])}  last {_fmt_ms(rep.sequence[-1])}")
    for idx, msg in rep.problems[:10]:
        print(f"  step {idx}: {msg}")
    return EXIT_OK if rep.monotone else EXIT_STUCK


def _fmt_ms(ms) -> str:
    return "{" + ", ".join(f"{d}x{n}" if n > 1 else str(d)
                           for d, n in sorted(ms.items(), key=lambda kv: str(kv[0]))) + "}"


def cmd_corpus(args) -> int:
    if args.action == "list":
        for e in corpus.entries():
            tags = [t for t, on in (("sound", e.sound), ("reconstructed", e.reconstructed),
                                    ("erased-only", e.erased_only), ("fixture", e.invalid)) if on]
            print(f"{e.name:28s} {e.description}" + (f"  [{', '.join(tags)}]" if tags else ""))
        return EXIT_OK
    try:
        paths = corpus.emit(args.out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write corpus: {exc.strerror}") from None
    for path in paths:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ghostlang", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, policy=False, explore=False):
        p.add_argument("program", help="a .hlt file or corpus:NAME")
        p.add_argument("--mode", choices=sorted(MODES), default="sound")
        p.add_argument("--trace", help="write the trace (or witness) here")
        p.add_argument("--no-check", action="store_true",
                       help="skip the auxiliary-code discipline check")
        if policy:
            p.add_argument("--policy", default="rr", help="rr | random | script:<file>")
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--cap", type=int, default=sched.DEFAULT_CAP)
        if explore:
            p.add_argument("--depth", type=int, default=2000)
            p.add_argument("--visited", type=int, default=10**6)

    common(sub.add_parser("run", help="run a program under a scheduler"), policy=True)
    common(sub.add_parser("explore", help="explore all interleavings up to caps"), explore=True)
    p = sub.add_parser("erase", help="erase auxiliary code")
    p.add_argument("program")
    p.add_argument("--out")
    p = sub.add_parser("check", help="check the auxiliary-code discipline")
    p.add_argument("program")
    p = sub.add_parser("fuel", help="path-fuel diagnostic over a recorded trace")
    p.add_argument("trace_file")
    p.add_argument("tid", type=int)
    p = sub.add_parser("corpus", help="list or emit the bundled programs")
    p.add_argument("action", choices=("list", "emit"), nargs="?", default="list")
    p.add_argument("--out", help="directory for emit (default: $GHOSTLANG_CORPUS_DIR or ./corpus)")
    return ap


COMMANDS = {"run": cmd_run, "erase": cmd_erase, "check": cmd_check,
            "explore": cmd_explore, "fuel": cmd_fuel, "corpus": cmd_corpus}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "cap", 1) is not None and getattr(args, "cap", 1) < 1:
        print("error: --cap must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except sched.ReplayDivergence as exc:
        print(f"error: replay diverged: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
