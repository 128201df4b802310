"""Belief-support state estimation (graph only) and an exact Bayes filter."""

from __future__ import annotations

from typing import Iterable, Mapping

import numpy as np

from .model import TOL, Pomdp

Support = tuple  # sorted tuple of state ids


class EmptySupport(Exception):
    """The observed trace is impossible under the model graph."""


class UnavailableAction(Exception):
    pass


class ZeroProbabilityObservation(Exception):
    pass


def as_support(states: Iterable[int]) -> Support:
    return tuple(sorted(set(int(s) for s in states)))


def initial_support(m: Pomdp, z0) -> Support:
    z0 = m.observation_index(z0)
    b = tuple(s for s in sorted(m.initial) if m.initial[s] > 0 and z0 in m.obs[s])
    if not b:
        raise EmptySupport(f"observation {m.observations[z0]!r} is impossible initially")
    return b


def initial_supports(m: Pomdp) -> dict[int, Support]:
    """Every first observation consistent with ``I``, mapped to its support."""
    out: dict[int, set[int]] = {}
    for s in m.initial:
        for z in m.emits[s]:
            out.setdefault(z, set()).add(s)
    return {z: as_support(b) for z, b in sorted(out.items())}


def offered_actions(m: Pomdp, b: Support) -> frozenset[int]:
    """Actions available in *every* state of the support."""
    it = iter(b)
    acts = m.available[next(it)]
    for s in it:
        acts = acts & m.available[s]
    return acts


def successors_by_observation(m: Pomdp, b: Support, a: int) -> dict[int, Support]:
    """All nonempty ``(B' | B, a, z)`` keyed by ``z``."""
    groups: dict[int, set[int]] = {}
    succ, emits = m.succ, m.emits
    for s in b:
        if a not in m.available[s]:
            raise UnavailableAction(f"action {m.actions[a]!r} unavailable in state {s}")
        for t in succ[s][a]:
            for z in emits[t]:
                g = groups.get(z)
                if g is None:
                    groups[z] = {t}
                else:
                    g.add(t)
    return {z: tuple(sorted(g)) for z, g in sorted(groups.items())}


def update_support(m: Pomdp, b: Support, a, z) -> Support:
    a, z = m.action_index(a), m.observation_index(z)
    out = set()
    for s in b:
        if a not in m.available[s]:
            raise UnavailableAction(f"action {m.actions[a]!r} unavailable in state {s}")
        for t in m.succ[s][a]:
            if z in m.obs[t]:
                out.add(t)
    if not out:
        raise EmptySupport(f"observation {m.observations[z]!r} impossible after {m.actions[a]!r} from {b}")
    return tuple(sorted(out))


def bayes_update(m: Pomdp, b: Mapping[int, float], a, z) -> dict[int, float]:
    a, z = m.action_index(a), m.observation_index(z)
    post: dict[int, float] = {}
    for s, p in b.items():
        if p <= 0:
            continue
        for t, q in m.trans[s][a].items():
            o = m.obs[t].get(z, 0.0)
            if o > 0:
                post[t] = post.get(t, 0.0) + p * q * o
    total = sum(post.values())
    if total <= 0:
        raise ZeroProbabilityObservation(f"observation {m.observations[z]!r} has probability 0")
    return {t: v / total for t, v in sorted(post.items())}


def initial_belief(m: Pomdp, z0) -> dict[int, float]:
    z0 = m.observation_index(z0)
    post = {s: p * m.obs[s].get(z0, 0.0) for s, p in m.initial.items()}
    post = {s: v for s, v in post.items() if v > 0}
    total = sum(post.values())
    if total <= 0:
        raise ZeroProbabilityObservation(f"observation {m.observations[z0]!r} has probability 0 initially")
    return {s: v / total for s, v in sorted(post.items())}


def support_feature_vector(b: Iterable[int], n_states: int) -> np.ndarray:
    v = np.zeros(n_states, dtype=np.int8)
    v[list(b)] = 1
    return v


class Estimator:
    """Tracks ``supp(b)`` along one episode; optionally also the exact belief."""

    def __init__(self, model: Pomdp, track_belief: bool = False):
        self.model = model
        self.track_belief = track_belief
        self.current: Support | None = None
        self.belief: dict[int, float] | None = None
        self.steps = 0

    def reset(self, z0) -> Support:
        self.current = initial_support(self.model, z0)
        self.belief = initial_belief(self.model, z0) if self.track_belief else None
        self.steps = 0
        return self.current

    def step(self, a, z) -> Support:
        if self.current is None:
            raise RuntimeError("call reset() with the first observation before step()")
        self.current = update_support(self.model, self.current, a, z)
        if self.track_belief:
            self.belief = bayes_update(self.model, self.belief, a, z)
            assert set(self.belief) == set(self.current), "belief and support disagree"
        self.steps += 1
        return self.current

    def offered(self) -> frozenset[int]:
        return offered_actions(self.model, self.current)


class SupportTable:
    """Interns supports as integer ids and memoizes updates.

    Used by simulation loops, where the same ``(B, a, z)`` triples recur.
    """

    def __init__(self, model: Pomdp):
        self.model = model
        self.supports: list[Support] = []
        self.index: dict[Support, int] = {}
        self._next: dict[tuple[int, int, int], int] = {}
        self._offered: list[tuple[int, ...]] = []
        self._initial: dict[int, int] = {}

    def intern(self, b: Support) -> int:
        i = self.index.get(b)
        if i is None:
            i = len(self.supports)
            self.index[b] = i
            self.supports.append(b)
            self._offered.append(tuple(sorted(offered_actions(self.model, b))))
        return i

    def initial(self, z0: int) -> int:
        i = self._initial.get(z0)
        if i is None:
            i = self._initial[z0] = self.intern(initial_support(self.model, z0))
        return i

    def update(self, bid: int, a: int, z: int) -> int:
        key = (bid, a, z)
        i = self._next.get(key)
        if i is None:
            i = self._next[key] = self.intern(update_support(self.model, self.supports[bid], a, z))
        return i

    def offered(self, bid: int) -> tuple[int, ...]:
        return self._offered[bid]


def belief_is_normalized(b: Mapping[int, float]) -> bool:
    return abs(sum(b.values()) - 1.0) <= TOL
