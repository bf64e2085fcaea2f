import json
import subprocess
import sys

import pytest

from ghostlang import corpus
from ghostlang.cli import main


def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_reports_steps(capsys):
    code, out, _ = cli(capsys, "run", "corpus:flag")
    assert code == 0
    assert out.startswith("AllFinished in 17 steps")


def test_run_writes_replayable_trace(capsys, tmp_path):
    trace = tmp_path / "t.jsonl"
    code, out, _ = cli(capsys, "run", "corpus:ticketlock2", "--policy", "random", "--seed", "4",
                       "--trace", str(trace))
    assert code == 0
    again = tmp_path / "again.jsonl"
    code, out2, _ = cli(capsys, "run", "corpus:ticketlock2", "--policy", f"script:{trace}",
                        "--trace", str(again))
    assert code == 0
    body = lambda p: p.read_text().splitlines()[1:]
    assert body(trace) == body(again)
    assert out.splitlines()[-1] == out2.splitlines()[-1]


def test_run_stuck_exit_code(capsys, tmp_path):
    src = tmp_path / "bad.hlt"
    src.write_text("degrees = atoms(1)\nlevels = atoms(1)\ninit_callperms = []\nmain =\n"
                   "  let f = fun x -> x in\n  f 1\n")
    code, out, _ = cli(capsys, "run", str(src))
    assert code == 2
    assert "MissingCallPerm" in out and "thread 1" in out


def test_run_cap_exit_code(capsys):
    code, out, _ = cli(capsys, "run", "corpus:flag", "--cap", "3")
    assert code == 3 and out.startswith("StepCapExceeded")


def test_unsound_mode_flag(capsys):
    code, out, _ = cli(capsys, "run", "corpus:unsound_livelock", "--mode", "unsound", "--cap", "2000")
    assert code == 3
    code, out, _ = cli(capsys, "run", "corpus:unsound_livelock")
    assert code == 2 and "ExpectWithoutPermission" in out


def test_parse_error_exit_code(capsys, tmp_path):
    src = tmp_path / "broken.hlt"
    src.write_text("main =\n  let x = in x\n")
    code, _, err = cli(capsys, "run", str(src))
    assert code == 4 and "parse error" in err


def test_discipline_error_exit_code(capsys, tmp_path):
    src = tmp_path / "leak.hlt"
    src.write_text("main =\n  let ghost g = 1 in\n  let r = g + 1 in\n  ()\n")
    assert cli(capsys, "check", str(src))[0] == 4
    assert cli(capsys, "run", str(src))[0] == 4
    assert cli(capsys, "erase", str(src))[0] == 4


def test_missing_file_exit_code(capsys, tmp_path):
    assert cli(capsys, "run", str(tmp_path / "nope.hlt"))[0] == 10
    assert cli(capsys, "run", "corpus:nope")[0] == 10


def test_erase_is_idempotent(capsys, tmp_path):
    first = tmp_path / "a.hlt"
    second = tmp_path / "b.hlt"
    assert cli(capsys, "erase", "corpus:motivating_client", "--out", str(first))[0] == 0
    assert cli(capsys, "erase", str(first), "--out", str(second))[0] == 0
    assert first.read_bytes() == second.read_bytes()
    assert "ghost" not in first.read_text()


def test_explore_exit_codes(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, out, _ = cli(capsys, "explore", "corpus:flag")
    assert code == 0 and "truncated=false" in out
    code, out, _ = cli(capsys, "explore", "corpus:flag_missing_set")
    assert code == 2
    witness = tmp_path / "flag_missing_set.witness.jsonl"
    footer = json.loads(witness.read_text().splitlines()[-1])
    assert footer["status"] == "Stuck"
    code, out, _ = cli(capsys, "explore", "corpus:flag", "--depth", "3")
    assert code == 5


def test_fuel_command(capsys, tmp_path):
    trace = tmp_path / "t.jsonl"
    cli(capsys, "run", "corpus:flag", "--trace", str(trace))
    code, out, _ = cli(capsys, "fuel", str(trace), "2")
    assert code == 0 and "monotone=true" in out
    assert cli(capsys, "fuel", str(trace), "7")[0] == 4
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    assert cli(capsys, "fuel", str(bad), "1")[0] == 4


def test_corpus_commands(capsys, tmp_path):
    code, out, _ = cli(capsys, "corpus", "list")
    assert code == 0 and "cohortlock" in out
    code, out, _ = cli(capsys, "corpus", "emit", "--out", str(tmp_path))
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(
        e.file_name for e in corpus.entries())


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "ghostlang", "run", "corpus:flag"],
                       capture_output=True, text=True, timeout=60)
    assert r.returncode == 0
    assert r.stdout.startswith("AllFinished")


def test_bad_cap(capsys):
    assert cli(capsys, "run", "corpus:flag", "--cap", "0")[0] == 4


def test_fuel_flags_injected_call_perm(capsys, tmp_path):
    trace = tmp_path / "t.jsonl"
    cli(capsys, "run", "corpus:flag", "--trace", str(trace))
    lines = trace.read_text().splitlines()
    for k, line in enumerate(lines):
        row = json.loads(line)
        if row.get("tid") == 2 and row.get("i", 0) > 8:
            row["d"].setdefault("cp", {})["2"] = {"(1,0)": 1}
            lines[k] = json.dumps(row)
            break
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    code, out, _ = cli(capsys, "fuel", str(bad), "2")
    assert code == 2 and "monotone=false" in out


def test_explore_ticketlock_clean_and_defective(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli(capsys, "explore", "corpus:ticketlock2")[0] == 0
    code, out, _ = cli(capsys, "explore", "corpus:ticketlock2_nofairness")
    assert code == 2 and "MissingCallPerm" in out
    assert (tmp_path / "ticketlock2_nofairness.witness.jsonl").exists()
    assert cli(capsys, "explore", "corpus:cohortlock_small", "--depth", "50")[0] == 5


def test_seed_gives_byte_identical_traces(capsys, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for p in (a, b):
        cli(capsys, "run", "corpus:cohortlock", "--policy", "random", "--seed", "17",
            "--trace", str(p))
    assert a.read_bytes() == b.read_bytes()


def test_witness_trace_replays_to_stuck(capsys, tmp_path):
    witness = tmp_path / "w.jsonl"
    assert cli(capsys, "explore", "corpus:flag_missing_set", "--trace", str(witness))[0] == 2
    code, out, _ = cli(capsys, "run", "corpus:flag_missing_set", "--policy", f"script:{witness}")
    assert code == 2 and "UnfulfilledObligations" in out
