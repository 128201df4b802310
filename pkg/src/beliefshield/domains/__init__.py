"""Benchmark POMDP generators.

>>> d = generate(DomainConfig("obstacle"))
>>> d.pomdp.n_states
37
"""

from __future__ import annotations

from collections import deque

from ..model import Pomdp, serialize_model
from .avoid import generate_avoid
from .base import (DEFAULTS, DOMAINS, NORMALIZATION, REFERENCE_STATE_COUNTS, DomainConfig, GeneratedDomain,
                   UnsupportedParameter, VariantMismatch, dense_reward, normalize_return, shaping_term)
from .evade import generate_evade
from .intercept import generate_intercept
from .obstacle import generate_obstacle
from .refuel import generate_refuel
from .rocks import generate_rocks

_GENERATORS = {
    "refuel": generate_refuel,
    "obstacle": generate_obstacle,
    "avoid": generate_avoid,
    "evade": generate_evade,
    "intercept": generate_intercept,
    "rocks": generate_rocks,
}


def generate(c: DomainConfig | str, **params) -> GeneratedDomain:
    if isinstance(c, str):
        c = DomainConfig(c, **params)
    elif params:
        c = c.with_(**params)
    return _GENERATORS[c.name](c)


def emit_model(d: GeneratedDomain) -> str:
    return serialize_model(d.pomdp)


def goal_diameter(m: Pomdp) -> int:
    """Largest graph distance to REACH over the states reachable from the start.

    Distances ignore probabilities and observations; states that cannot reach
    REACH at all (e.g. absorbing failures) are skipped.
    """
    preds: list[set[int]] = [set() for _ in range(m.n_states)]
    for s in range(m.n_states):
        for a in m.available[s]:
            for t in m.succ[s][a]:
                preds[t].add(s)
    dist = {s: 0 for s in m.reach}
    queue = deque(m.reach)
    while queue:
        t = queue.popleft()
        for s in preds[t]:
            if s not in dist:
                dist[s] = dist[t] + 1
                queue.append(s)
    seen = set(m.initial)
    queue = deque(m.initial)
    while queue:
        s = queue.popleft()
        if s in m.reach:
            continue
        for a in m.available[s]:
            for t in m.succ[s][a]:
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
    return max((dist[s] for s in seen if s in dist), default=0)


__all__ = [
    "DEFAULTS", "DOMAINS", "NORMALIZATION", "REFERENCE_STATE_COUNTS", "DomainConfig", "GeneratedDomain",
    "UnsupportedParameter", "VariantMismatch", "dense_reward", "emit_model", "generate", "goal_diameter",
    "normalize_return", "shaping_term",
]
