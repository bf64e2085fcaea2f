"""Seeded defect programs, one per stuck reason, with the exact site
(thread, step index, redex kind) at which each must get stuck under
round-robin scheduling in sound mode."""

from dataclasses import dataclass


@dataclass(frozen=True)
class StuckFixture:
    name: str
    text: str
    reason: str
    tid: int
    step: int
    redex: str  # class name of the redex that fails
    detail: str  # rendered reason


STUCK_FIXTURES = [
    StuckFixture(
        "call_without_permission", """
degrees = atoms(1)
levels = atoms(1)
init_callperms = []
main =
  let f = fun x -> x + 1 in
  f 1
""", "MissingCallPerm", 1, 2, "App", "MissingCallPerm(1, bot)"),
    StuckFixture(
        "finish_holding_obligation", """
degrees = atoms(1)
levels = atoms(1)
init_callperms = []
main =
  let ghost s = NewSignal cur 0 in
  ()
""", "UnfulfilledObligations", 1, 2, "Finish", "UnfulfilledObligations(1, {(s0, (0))})"),
    StuckFixture(
        "expect_without_permission", """
degrees = atoms(1)
levels = atoms(1)
init_callperms = []
main =
  let ghost s = NewSignal cur 0 in
  fork [s] { let a = 1 in let b = a + 1 in let c = b + 1 in ghost { SetSignal cur s } };
  ghost { Expect cur s bot };
  ()
""", "ExpectWithoutPermission", 1, 5, "LetAux", "ExpectWithoutPermission(1, 0, bot)"),
    StuckFixture(
        "expect_on_set_signal", """
degrees = atoms(2)
levels = atoms(1)
name TOP = (1)
init_callperms = [TOP]
main =
  let ghost s = NewSignal cur 0 in
  ghost { NewExpectPerm cur s TOP bot; SetSignal cur s; Expect cur s bot };
  ()
""", "ExpectOnSetSignal", 1, 1, "LetAux", "ExpectOnSetSignal(0)"),
    StuckFixture(
        "expect_above_own_obligation", """
degrees = atoms(2)
levels = atoms(2)
name TOP = (1)
init_callperms = [TOP]
main =
  let ghost low = NewSignal cur 0 in
  let ghost high = NewSignal cur 1 in
  ghost { NewExpectPerm cur high TOP bot; Expect cur high bot };
  ghost { SetSignal cur low; SetSignal cur high }
""", "LevelNotBelowObligations", 1, 2, "LetAux",
        "LevelNotBelowObligations((1), {(s0, (0)), (s1, (1))})"),
    StuckFixture(
        "lower_to_same_degree", """
degrees = lexsum(atoms(1), atoms(1))
levels = atoms(1)
name A = (1,0)
init_callperms = [A]
main =
  ghost { lower A to 2 times A at cur };
  ()
""", "DegreeNotLower", 1, 0, "LetAux", "DegreeNotLower((1,0), (1,0))"),
    StuckFixture(
        "fork_transfers_missing_obligation", """
degrees = atoms(1)
levels = atoms(1)
init_callperms = []
main =
  let ghost s = NewSignal cur 0 in
  fork [s] { ghost { SetSignal cur s } };
  fork [s] { () };
  ()
""", "ObligationNotHeld", 1, 5, "Fork", "ObligationNotHeld(1, 0)"),
    StuckFixture(
        "compare_closures", """
degrees = atoms(1)
levels = atoms(1)
init_callperms = []
main =
  let f = fun x -> x in
  let b = f = f in
  ()
""", "UnsafeValueCompare", 1, 2, "BinOp", "UnsafeValueCompare"),
]
