"""Two threads wait on each other's signal inside a cyclic lock wait.

In sound mode Expect needs an expect permission, so the run gets stuck at
the first unpaid wait.  With the unsound Expect rule the waits mint their
own call permissions and an alternating fair schedule runs forever.
"""
from ghostlang import corpus, scheduler as sc

CAP = 20_000
e = corpus.get("unsound_livelock")

sound = sc.run(e.prog, sc.RoundRobin(), CAP, "sound", record=False)
print(f"sound mode:   {sound.status_text()}")

script = sc.script_from(e.prog, e.adversarial, CAP, "unsound_expect")
ex = sc.run(e.prog, sc.Scripted(tuple(script)), CAP, "unsound_expect", record=False)
print(f"unsound mode: {ex.status_text()} after {len(ex.steps)} steps")
