"""Explore every interleaving of a ticket lock client whose waiters do not
compensate for being bypassed, then replay the stuck witness it finds.

The clean client explores with no stuck terminals for comparison.
"""
import sys
import tempfile
from pathlib import Path

from ghostlang import corpus, scheduler as sc

for name in ("ticketlock2", "ticketlock2_nofairness"):
    rep = sc.explore(corpus.get(name).prog, 2000, 10**6)
    print(f"{name}: {rep.visited} states, terminals {dict(rep.terminals)}, "
          f"truncated={rep.truncated}")

e = corpus.get("ticketlock2_nofairness")
rep = sc.explore(e.prog, 2000, 10**6)
key = sorted(rep.stuck)[0]
witness = sc.replay(e.prog, rep.stuck[key])
path = Path(tempfile.gettempdir()) / "ticketlock2_nofairness.witness.jsonl"
witness.write_trace(path)
print(f"witness for {key}: {len(witness.steps)} steps, written to {path}")

again = sc.replay(e.prog, sc.load_trace(path).schedule)
print(f"replayed: {again.status_text()}")
sys.exit(0 if again.final_hash == witness.final_hash else 1)
