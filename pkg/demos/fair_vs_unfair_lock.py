"""A looping client and a one-shot setter share a lock.

With the ticket lock the setter gets in even when the scheduler gives it
only one step in fifty.  With the test-and-set spinlock a crude
one-in-fifty schedule still lets the setter in, but a schedule that steps
the setter only while the lock is held keeps it out forever while running
both threads infinitely often.  That run hits the step cap.
"""
from ghostlang import corpus, erasure, scheduler as sc

CAP = 20_000


def starve_one_in(k):
    def choose(step, config, runnable):
        if 1 in runnable:
            return 1
        if 3 in runnable and step % k == 0:
            return 3
        return 2 if 2 in runnable else runnable[0]
    return choose


def show(label, prog, chooser, mode):
    script = sc.script_from(prog, chooser, CAP, mode)
    ex = sc.run(prog, sc.Scripted(tuple(script)), CAP, mode, record=False)
    print(f"{label:<44} {ex.status_text()} after {len(ex.steps)} steps")


ticket = corpus.get("distinguishing_ticketlock")
spin = corpus.get("distinguishing_spinlock")

show("ticket lock, setter gets 1 step in 50", ticket.prog, starve_one_in(50), "sound")
show("ticket lock (erased), setter 1 step in 50", erasure.erase_prog(ticket.prog),
     starve_one_in(50), "plain")
show("spinlock, setter gets 1 step in 50", spin.prog, starve_one_in(50), "plain")
show("spinlock, setter tries only while lock held", spin.prog, spin.adversarial, "plain")
