"""Rocks: collect a good rock and deliver it to the drop-off zone.

Layout
------
* the agent starts at ``(0, 0)``; the drop-off is ``(N-1, N-1)``;
* two rocks sit at ``(1, N-2)`` and ``(N-2, 1)``; their qualities are drawn
  uniformly from (good, good), (good, bad), (bad, good);
* moves are deterministic, moves off the grid are not offered;
* ``sample`` is offered next to a rock and reveals its quality in the next
  observation; ``collect`` is offered on a rock while empty-handed;
* collecting a good rock pays +10, a bad one -10 and ends the run;
  moving onto the drop-off with a rock pays +10 and ends the run.
"""

from __future__ import annotations

from ..model import Specification
from .base import (MOVES, DomainConfig, GeneratedDomain, NORMALIZATION, UnsupportedParameter, explore, manhattan,
                   on_grid_moves)

QUALITIES = ((True, True), (True, False), (False, True))
EVENTS = ("delivered", "spoiled")


def generate_rocks(c: DomainConfig) -> GeneratedDomain:
    n = c.grid_size
    if n < 4:
        raise UnsupportedParameter("rocks needs a grid of at least 4x4")
    rocks = ((1, n - 2), (n - 2, 1))
    drop = (n - 1, n - 1)
    actions = list(MOVES) + ["sample", "collect"]

    def adjacent_rock(pos):
        for i, r in enumerate(rocks):
            if manhattan(pos, r) == 1:
                return i
        return None

    def available(k):
        if k in EVENTS:
            return actions
        pos, _, carry, _ = k
        acts = on_grid_moves(pos, n)
        if adjacent_rock(pos) is not None:
            acts.append("sample")
        if not carry and pos in rocks:
            acts.append("collect")
        return acts

    def step(k, a):
        if k in EVENTS:
            return {k: 1.0}
        pos, q, carry, _ = k
        if a == "sample":
            return {(pos, q, carry, "good" if q[adjacent_rock(pos)] else "bad"): 1.0}
        if a == "collect":
            return {(pos, q, True, None) if q[rocks.index(pos)] else "spoiled": 1.0}
        new = (pos[0] + MOVES[a][0], pos[1] + MOVES[a][1])
        if carry and new == drop:
            return {"delivered": 1.0}
        return {(new, q, carry, None): 1.0}

    def observe(k):
        if k in EVENTS:
            return {k: 1.0}
        pos, _, carry, seen = k
        return {f"x{pos[0]}y{pos[1]}{'_c' if carry else ''}{'_' + seen if seen else ''}": 1.0}

    def reward(k, a):
        if k in EVENTS:
            return 0.0
        pos, q, carry, _ = k
        if a == "collect":
            return 10.0 if q[rocks.index(pos)] else -10.0
        if carry and a in MOVES and (pos[0] + MOVES[a][0], pos[1] + MOVES[a][1]) == drop:
            return 10.0
        return 0.0

    def labels(k):
        return {"delivered": ("reach", "terminal"), "spoiled": ("avoid", "terminal")}.get(k, ())

    initial = {((0, 0), q, False, None): 1 / len(QUALITIES) for q in QUALITIES}
    m, ids = explore(initial, actions, available, step, observe, reward, labels,
                     lambda k: k if isinstance(k, str) else
                     f"x{k[0][0]}y{k[0][1]}_q{''.join('G' if g else 'B' for g in k[1])}"
                     f"{'_c' if k[2] else ''}{'_' + k[3] if k[3] else ''}")

    def phi(k):
        if k == "delivered":
            return 0.0
        if k == "spoiled":
            return -4.0 * n
        pos, q, carry, _ = k
        if carry:
            return -float(manhattan(pos, drop))
        return -float(min(manhattan(pos, r) + manhattan(r, drop) for r, good in zip(rocks, q) if good))

    potential = {i: phi(k) for k, i in ids.items()}
    return GeneratedDomain(c, m, Specification.from_model(m), NORMALIZATION["rocks"], potential,
                           optimal_return=20.0, layout={"rocks": rocks, "drop": drop})
