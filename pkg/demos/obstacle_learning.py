"""Shielded vs unshielded REINFORCE on the Obstacle grid.

Prints the last smoothed normalized return and the number of episodes that
hit a trap while learning.  Takes about a minute.
"""

import sys

from beliefshield.domains import generate
from beliefshield.learn import TrainConfig, train
from beliefshield.runtime import ShieldSchedule
from beliefshield.synthesis import synthesize


def main(episodes=2000, seeds=3):
    d = generate("obstacle")
    sh = synthesize(d.pomdp, d.spec)
    print(f"obstacle: {d.pomdp.n_states} states, {len(sh.table)} winning supports")
    for sched in ("always-on", "off", "sudden:1000", "smooth:1000:0.001"):
        schedule = ShieldSchedule.parse(sched)
        finals, viol = [], 0
        for seed in range(seeds):
            c = train(d, sh, TrainConfig(episodes=episodes, seed=seed, schedule=schedule))
            finals.append(c.column("smooth_norm")[-1])
            viol += c.violations_during
        print(f"{sched:>22}: final return {sum(finals) / len(finals):.3f}, violations while learning {viol}")


if __name__ == "__main__":
    main(*map(int, sys.argv[1:]))
