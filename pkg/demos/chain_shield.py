"""Synthesize a shield for a four-state chain and watch random runs under it.

State 2 is a trap behind action ``b``; state 3 is the goal.  States 0 and 1
look alike, so the shield has to work on the support {0, 1}.
"""

from beliefshield import parse_model, rollout, synthesize
from beliefshield.runtime import UniformStream, reaches, violates

CHAIN = """
pomdp
states: 4
actions: a b
observations: u v w
start: 0:0.5 1:0.5
T: 0 a 1 1.0
T: 0 b 2 1.0
T: 1 a 3 1.0
T: 1 b 0 1.0
T: 2 a 2 1.0
T: 2 b 2 1.0
T: 3 a 3 1.0
T: 3 b 3 1.0
O: 0 u 1.0
O: 1 u 1.0
O: 2 v 1.0
O: 3 w 1.0
R: 1 a 10
label reach: 3
label avoid: 2
"""


def main():
    m = parse_model(CHAIN)
    sh = synthesize(m)
    print("shield table:")
    for b, acts in sorted(sh.table.items()):
        print(f"  {b}: {sorted(m.actions[a] for a in acts)}")

    u = UniformStream(0)
    for shield in (None, sh):
        runs = [rollout(m, lambda b, allowed: u.choice(allowed), u, 50, shield=shield) for _ in range(1000)]
        label = "shielded" if shield else "unshielded"
        print(f"{label:>10}: reached {sum(reaches(m, r) for r in runs)}/1000, "
              f"trapped {sum(violates(m, r) for r in runs)}/1000")


if __name__ == "__main__":
    main()
