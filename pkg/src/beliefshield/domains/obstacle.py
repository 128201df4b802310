"""Obstacle: cross a grid with hidden traps while only sensing trap/exit cells.

Layout
------
* every cell of the ``N x N`` grid is a state, plus one absorbing ``sink``;
* the agent starts uniformly in the 2x2 block at the origin;
* the exit is the far corner ``(N-1, N-1)``;
* ``N*N // 9`` trap cells are drawn from a generator seeded by ``N`` (redrawn
  deterministically until the shield wins from the start block);
* a move advances 1 or 2 cells with probability 1/2 each, stopping at walls;
* observations: ``trap``, ``exit`` or ``none`` (position is never observed);
* rewards: -1 per move, -1000 on leaving a trap, +1000 on leaving the exit.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..model import Specification
from ..synthesis import synthesize
from .base import MOVES, DomainConfig, GeneratedDomain, NORMALIZATION, clip_move, explore, manhattan

START_BLOCK = ((0, 0), (1, 0), (0, 1), (1, 1))


def _traps(n: int, attempt: int) -> frozenset:
    rng = np.random.default_rng([n, attempt])
    cells = [(x, y) for x in range(n) for y in range(n)
             if (x, y) not in START_BLOCK and (x, y) != (n - 1, n - 1)]
    k = max(1, n * n // 9)
    pick = rng.choice(len(cells), size=min(k, len(cells)), replace=False)
    return frozenset(cells[i] for i in sorted(pick))


def _build(c: DomainConfig, traps: frozenset) -> GeneratedDomain:
    n = c.grid_size
    exit_ = (n - 1, n - 1)
    start = [p for p in START_BLOCK if p[0] < n and p[1] < n and p != exit_]
    actions = list(MOVES)

    def step(k, a):
        if k == "sink" or k in traps or k == exit_:
            return {"sink": 1.0}
        out = {}
        for dist in (1, 2):
            t = clip_move(k, MOVES[a], n, dist)
            out[t] = out.get(t, 0.0) + 0.5
        return out

    def observe(k):
        if k in traps:
            return {"trap": 1.0}
        if k == exit_:
            return {"exit": 1.0}
        return {"none": 1.0}

    def reward(k, a):
        if k == "sink":
            return 0.0
        if k in traps:
            return -1000.0
        if k == exit_:
            return 1000.0
        return -1.0

    def labels(k):
        if k == "sink":
            return ("terminal",)
        if k in traps:
            return ("avoid", "trap")
        if k == exit_:
            return ("reach",)
        return ()

    cells = [(x, y) for y in range(n) for x in range(n)]
    m, ids = explore(
        {p: 1.0 / len(start) for p in start}, actions, lambda k: actions, step, observe, reward, labels,
        lambda k: k if k == "sink" else f"x{k[0]}y{k[1]}", extra_states=cells + ["sink"])
    potential = {i: (0.0 if k == "sink" else -float(manhattan(k, exit_))) for k, i in ids.items()}
    return GeneratedDomain(c, m, Specification.from_model(m), NORMALIZATION["obstacle"], potential,
                           optimal_return=None, layout={"traps": sorted(traps), "exit": exit_, "start": start})


def generate_obstacle(c: DomainConfig, max_attempts: int = 64) -> GeneratedDomain:
    last = None
    for attempt in range(max_attempts):
        d = _build(c, _traps(c.grid_size, attempt))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sh = synthesize(d.pomdp, d.spec)
        if not sh.uncovered_initial:
            d.layout["attempt"] = attempt
            return d
        last = d
    return last
