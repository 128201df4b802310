"""Avoid: reach the far corner without meeting two patrollers.

Layout
------
* the agent starts at ``(0, 0)``; the goal is ``(N-1, N-1)``;
* each patroller circles a fixed rectangular loop of six cells in a fixed
  direction, advancing 1 or 2 cells per step with probability 1/2, and
  starts uniformly on its loop;
* the agent is caught when a patroller passes through or stops on the
  agent's new cell, or the agent moves onto a patroller;
* moves off the grid are not offered;
* a patroller's position is observed only within Manhattan distance
  ``radius`` of the agent;
* rewards: -1 per move, +1000 at the goal, -1000 when caught.
"""

from __future__ import annotations

from itertools import product

from ..model import Specification
from .base import (MOVES, DomainConfig, GeneratedDomain, NORMALIZATION, UnsupportedParameter, add, explore,
                   manhattan, on_grid_moves)

EVENTS = ("goal", "caught", "sink")


def rectangle_loop(x0: int, y0: int, w: int = 3) -> tuple:
    """The ``2w`` cells of a ``w x 2`` block, counter-clockwise from its lower-left cell."""
    return tuple([(x0 + i, y0) for i in range(w)] + [(x0 + i, y0 + 1) for i in reversed(range(w))])


def routes_for(n: int) -> tuple[tuple, tuple]:
    if n < 5:
        raise UnsupportedParameter("avoid needs a grid of at least 5x5")
    a = rectangle_loop(max(2, n // 2 - 1), 1)
    b = rectangle_loop(1, max(3, n // 2))
    for r in (a, b):
        if any(not (0 < x < n - 1 and 0 < y < n - 1) for x, y in r):
            raise UnsupportedParameter(f"patrol routes do not fit a {n}x{n} grid")
    return a, b


def generate_avoid(c: DomainConfig) -> GeneratedDomain:
    n, radius = c.grid_size, c.radius
    goal = (n - 1, n - 1)
    routes = routes_for(n)
    actions = list(MOVES)

    def advance(route, i):
        """[(probability, cells swept including the final one, final index)]"""
        k = len(route)
        return [(0.5, {route[(i + 1) % k]}, (i + 1) % k),
                (0.5, {route[(i + 1) % k], route[(i + 2) % k]}, (i + 2) % k)]

    def available(k):
        return actions if k in EVENTS else on_grid_moves(k[0], n)

    def step(k, a):
        if k in EVENTS:
            return {"sink": 1.0}
        agent, ia, ib = k
        new = (agent[0] + MOVES[a][0], agent[1] + MOVES[a][1])
        if new in (routes[0][ia], routes[1][ib]):
            return {"caught": 1.0}
        out = {}
        for (pa, swept_a, ja), (pb, swept_b, jb) in product(advance(routes[0], ia), advance(routes[1], ib)):
            p = pa * pb
            if new in swept_a or new in swept_b:
                add(out, "caught", p)
            elif new == goal:
                add(out, "goal", p)
            else:
                add(out, (new, ja, jb), p)
        return out

    def observe(k):
        if k in EVENTS:
            return {k: 1.0}
        agent, ia, ib = k
        parts = [f"x{agent[0]}y{agent[1]}"]
        for tag, route, i in (("a", routes[0], ia), ("b", routes[1], ib)):
            parts.append(f"{tag}{i}" if manhattan(agent, route[i]) <= radius else f"{tag}?")
        return {"_".join(parts): 1.0}

    def reward(k, a):
        if k == "goal":
            return 1000.0
        if k == "caught":
            return -1000.0
        return 0.0 if k == "sink" else -1.0

    def labels(k):
        return {"goal": ("reach",), "caught": ("avoid",), "sink": ("terminal",)}.get(k, ())

    na, nb = len(routes[0]), len(routes[1])
    initial = {((0, 0), ia, ib): 1.0 / (na * nb) for ia in range(na) for ib in range(nb)}
    m, ids = explore(initial, actions, available, step, observe, reward, labels,
                     lambda k: k if isinstance(k, str) else f"x{k[0][0]}y{k[0][1]}_a{k[1]}b{k[2]}")
    potential = {}
    for k, i in ids.items():
        if k in EVENTS:
            potential[i] = -2.0 * n if k == "caught" else 0.0
        else:
            potential[i] = -float(manhattan(k[0], goal))
    # shortest route: 2(N-1) moves, the last one into the goal pays 1000 on the next step
    best = 1000.0 - 2 * (n - 1)
    return GeneratedDomain(c, m, Specification.from_model(m), NORMALIZATION["avoid"], potential,
                           optimal_return=best, layout={"goal": goal, "routes": routes})
