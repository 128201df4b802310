"""Refuel: reach the far corner on a battery that must be recharged at stations.

Layout
------
* start ``(0, 0)`` with a full battery or one level less (1/2 each);
* goal ``(N-1, N-1)``; obstacles on the diagonal ``(i, i)`` for
  ``1 < i < N-2`` (on small grids ``0 < i < N-1``);
* recharge stations at ``(N-1, 0)`` and ``(0, N-1)``;
* a move uses one unit and advances 1 cell (p=0.7) or 2 cells (p=0.3),
  stopping at walls; moves off the grid are not offered;
* ``recharge`` is offered on stations only and refills the battery;
* running dry away from a station, or landing on an obstacle, ends the run badly;
* the position is observed exactly, the battery level up to +-1 (uniform).
"""

from __future__ import annotations

from ..model import Specification
from .base import (MOVES, DomainConfig, GeneratedDomain, NORMALIZATION, add, clip_move, explore, manhattan,
                   on_grid_moves)

EVENTS = ("goal", "crash", "empty", "sink")


def obstacles_for(n: int) -> frozenset:
    inner = [(i, i) for i in range(1, n - 1)]
    # keep the two diagonal cells nearest the corners open on large grids
    if len(inner) > 2:
        inner = inner[1:-1]
    return frozenset(inner)


def generate_refuel(c: DomainConfig) -> GeneratedDomain:
    n, cap = c.grid_size, c.energy
    goal = (n - 1, n - 1)
    stations = frozenset({(n - 1, 0), (0, n - 1)})
    blocked = obstacles_for(n)
    actions = list(MOVES) + ["recharge"]

    def available(k):
        if k in EVENTS:
            return actions
        x, y, e = k
        acts = on_grid_moves((x, y), n) if e > 0 else []
        if (x, y) in stations:
            acts = acts + ["recharge"]
        return acts

    def land(pos, e):
        if pos == goal:
            return "goal"
        if pos in blocked:
            return "crash"
        if e == 0 and pos not in stations:
            return "empty"
        return (pos[0], pos[1], e)

    def step(k, a):
        if k in EVENTS:
            return {"sink": 1.0}
        x, y, e = k
        if a == "recharge":
            return {(x, y, cap): 1.0}
        out = {}
        add(out, land(clip_move((x, y), MOVES[a], n, 1), e - 1), 0.7)
        add(out, land(clip_move((x, y), MOVES[a], n, 2), e - 1), 0.3)
        return out

    def observe(k):
        if k in EVENTS:
            return {k: 1.0}
        x, y, e = k
        out = {}
        for lvl in (e - 1, e, e + 1):
            add(out, f"x{x}y{y}b{min(max(lvl, 0), cap)}", 1 / 3)
        return out

    def reward(k, a):
        return 10.0 if k == "goal" else 0.0

    def labels(k):
        return {"goal": ("reach",), "crash": ("avoid",), "empty": ("avoid",), "sink": ("terminal",)}.get(k, ())

    initial = {(0, 0, cap): 0.5, (0, 0, cap - 1): 0.5} if cap > 1 else {(0, 0, cap): 1.0}
    m, ids = explore(initial, actions, available, step, observe, reward, labels,
                     lambda k: k if isinstance(k, str) else f"x{k[0]}y{k[1]}e{k[2]}")
    potential = {}
    for k, i in ids.items():
        if k in EVENTS:
            potential[i] = -2.0 * n if k in ("crash", "empty") else 0.0
        else:
            potential[i] = -float(manhattan(k[:2], goal))
    return GeneratedDomain(c, m, Specification.from_model(m), NORMALIZATION["refuel"], potential,
                           optimal_return=10.0,
                           layout={"goal": goal, "stations": sorted(stations), "obstacles": sorted(blocked)})
