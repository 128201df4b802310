"""Intercept: catch a robot before it leaves through one of two exits.

Layout
------
* exits at the top corners ``(0, N-1)`` and ``(N-1, N-1)``;
* the robot starts at the bottom of the corridor column ``x = N//2`` and
  the agent at the top of it;
* the robot moves every other step, uniformly among the moves that bring it
  closer to its nearer exit (both exits when tied);
* a robot in the corridor column is always observed; elsewhere it is seen
  only within Chebyshev distance ``radius`` of the agent;
* agent moves against a wall leave it in place;
* meeting the robot (same cell after either move) pays +1000, the robot
  escaping costs -1000, each agent move costs -1.
"""

from __future__ import annotations

from ..model import Specification
from .base import MOVES, DomainConfig, GeneratedDomain, NORMALIZATION, add, clip_move, explore, manhattan

EVENTS = ("meet", "escape", "sink")


def generate_intercept(c: DomainConfig) -> GeneratedDomain:
    n, radius = c.grid_size, c.radius
    mid = n // 2
    exits = ((0, n - 1), (n - 1, n - 1))
    actions = list(MOVES)

    def robot_moves(r):
        d = [manhattan(r, e) for e in exits]
        targets = [e for e, de in zip(exits, d) if de == min(d)]
        out = set()
        for e in targets:
            for dx, dy in MOVES.values():
                q = (r[0] + dx, r[1] + dy)
                if 0 <= q[0] < n and 0 <= q[1] < n and manhattan(q, e) < manhattan(r, e):
                    out.add(q)
        return sorted(out)

    def step(k, a):
        if k in EVENTS:
            return {"sink": 1.0}
        agent, robot, phase = k
        new = clip_move(agent, MOVES[a], n)
        if new == robot:
            return {"meet": 1.0}
        if not phase:
            return {(new, robot, 1): 1.0}
        out = {}
        options = robot_moves(robot)
        for q in options:
            if q == new:
                add(out, "meet", 1 / len(options))
            elif q in exits:
                add(out, "escape", 1 / len(options))
            else:
                add(out, (new, q, 0), 1 / len(options))
        return out

    def observe(k):
        if k in EVENTS:
            return {k: 1.0}
        agent, robot, _ = k
        seen = robot[0] == mid or max(abs(agent[0] - robot[0]), abs(agent[1] - robot[1])) <= radius
        tail = f"_r{robot[0]}.{robot[1]}" if seen else "_r?"
        return {f"x{agent[0]}y{agent[1]}{tail}": 1.0}

    def reward(k, a):
        if k == "meet":
            return 1000.0
        if k == "escape":
            return -1000.0
        return 0.0 if k == "sink" else -1.0

    def labels(k):
        return {"meet": ("reach",), "escape": ("avoid",), "sink": ("terminal",)}.get(k, ())

    initial = {((mid, n - 1), (mid, 0), 0): 1.0}
    m, ids = explore(initial, actions, lambda k: actions, step, observe, reward, labels,
                     lambda k: k if isinstance(k, str) else f"x{k[0][0]}y{k[0][1]}_r{k[1][0]}.{k[1][1]}_p{k[2]}")
    potential = {}
    for k, i in ids.items():
        if k in EVENTS:
            potential[i] = -2.0 * n if k == "escape" else 0.0
        else:
            potential[i] = -float(manhattan(k[0], k[1]))
    return GeneratedDomain(c, m, Specification.from_model(m), NORMALIZATION["intercept"], potential,
                           optimal_return=None, layout={"exits": exits, "corridor": mid})
