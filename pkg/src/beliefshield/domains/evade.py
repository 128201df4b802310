"""Evade: cross a band patrolled by a fast adversary and reach the door.

Layout
------
* the agent starts at ``(0, 0)``; the door is ``(N-1, N-1)``;
* the adversary lives in the band of rows ``{N//2 - 1, N//2}`` and starts
  uniformly on band cells with ``x >= N//2``;
* per agent move the adversary makes two random sub-moves inside the band
  (uniform over its in-band neighbours);
* the agent is caught when it moves onto the adversary or the adversary
  passes through or stops on the agent's new cell;
* moves off the grid are not offered; ``scan`` keeps the agent in place and
  reveals the adversary's position in the next observation;
* otherwise the adversary is seen only within Manhattan distance ``radius``;
* reaching the door pays +10.
"""

from __future__ import annotations

from ..model import Specification
from .base import MOVES, DomainConfig, GeneratedDomain, NORMALIZATION, add, manhattan, explore, on_grid_moves

EVENTS = ("door", "caught", "sink")


def generate_evade(c: DomainConfig) -> GeneratedDomain:
    n, radius = c.grid_size, c.radius
    band = tuple(r for r in (n // 2 - 1, n // 2) if 0 < r < n - 1) or (n // 2,)
    door = (n - 1, n - 1)
    actions = list(MOVES) + ["scan"]

    def adversary_moves(p):
        return [(p[0] + dx, p[1] + dy) for dx, dy in MOVES.values()
                if 0 <= p[0] + dx < n and p[1] + dy in band]

    # distribution over (intermediate cell, final cell) after two sub-moves
    paths: dict = {}
    for x in range(n):
        for y in band:
            out: dict = {}
            first = adversary_moves((x, y))
            for q1 in first:
                second = adversary_moves(q1)
                for q2 in second:
                    add(out, (q1, q2), 1.0 / (len(first) * len(second)))
            paths[(x, y)] = out

    def available(k):
        if k in EVENTS:
            return actions
        return on_grid_moves(k[0], n) + ["scan"]

    def step(k, a):
        if k in EVENTS:
            return {"sink": 1.0}
        agent, adv, _ = k
        if a == "scan":
            new = agent
        else:
            new = (agent[0] + MOVES[a][0], agent[1] + MOVES[a][1])
        if new == adv:
            return {"caught": 1.0}
        out = {}
        for (q1, q2), p in paths[adv].items():
            if new in (q1, q2):
                add(out, "caught", p)
            elif new == door:
                add(out, "door", p)
            else:
                add(out, (new, q2, a == "scan"), p)
        return out

    def observe(k):
        if k in EVENTS:
            return {k: 1.0}
        agent, adv, scanned = k
        seen = scanned or manhattan(agent, adv) <= radius
        tail = f"_a{adv[0]}.{adv[1]}" if seen else "_a?"
        return {f"x{agent[0]}y{agent[1]}{tail}": 1.0}

    def reward(k, a):
        return 10.0 if k == "door" else 0.0

    def labels(k):
        return {"door": ("reach",), "caught": ("avoid",), "sink": ("terminal",)}.get(k, ())

    starts = [(x, y) for y in band for x in range(n // 2, n)]
    initial = {((0, 0), q, False): 1.0 / len(starts) for q in starts}
    m, ids = explore(initial, actions, available, step, observe, reward, labels,
                     lambda k: k if isinstance(k, str) else
                     f"x{k[0][0]}y{k[0][1]}_a{k[1][0]}.{k[1][1]}{'_s' if k[2] else ''}")
    potential = {}
    for k, i in ids.items():
        if k in EVENTS:
            potential[i] = -2.0 * n if k == "caught" else 0.0
        else:
            potential[i] = -float(manhattan(k[0], door))
    return GeneratedDomain(c, m, Specification.from_model(m), NORMALIZATION["evade"], potential,
                           optimal_return=10.0, layout={"door": door, "band": band})
