"""Shared pieces of the benchmark generators: configs, explicit-model builder, rewards."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Hashable, Iterable, Mapping

from ..model import Pomdp, Specification, build_pomdp

DOMAINS = ("refuel", "obstacle", "avoid", "evade", "intercept", "rocks")

# default parameters per domain; avoid runs on a 6x6 grid
DEFAULTS = {
    "refuel": dict(grid_size=6, energy=8, episode_cap=100),
    "obstacle": dict(grid_size=6, episode_cap=100),
    "avoid": dict(grid_size=6, radius=3, episode_cap=100),
    "evade": dict(grid_size=6, radius=2, episode_cap=350),
    "intercept": dict(grid_size=7, radius=1, episode_cap=100),
    "rocks": dict(grid_size=6, episode_cap=100),
}

# reward normalization: (raw + offset) / scale
NORMALIZATION = {
    "rocks": (10.0, 30.0),
    "refuel": (0.0, 10.0),
    "evade": (0.0, 10.0),
    "avoid": (1000.0, 2000.0),
    "intercept": (1000.0, 2000.0),
    "obstacle": (1000.0, 2000.0),
}

# state counts of the reference benchmark encodings, for reporting only
REFERENCE_STATE_COUNTS = {"rocks": 331, "refuel": 270, "evade": 4232, "avoid": 5976, "intercept": 4705, "obstacle": 37}

MOVES = {"east": (1, 0), "west": (-1, 0), "north": (0, 1), "south": (0, -1)}


class UnsupportedParameter(ValueError):
    pass


class VariantMismatch(ValueError):
    pass


@dataclass(frozen=True)
class DomainConfig:
    name: str
    grid_size: int | None = None
    radius: int | None = None
    energy: int | None = None
    episode_cap: int | None = None
    reward_variant: str = "sparse"

    def __post_init__(self):
        if self.name not in DEFAULTS:
            raise UnsupportedParameter(f"unknown domain {self.name!r}; choose from {', '.join(DOMAINS)}")
        for k, v in DEFAULTS[self.name].items():
            if getattr(self, k) is None:
                object.__setattr__(self, k, v)
        if self.grid_size < 2:
            raise UnsupportedParameter("grid size must be >= 2")
        if self.radius is not None and not 0 <= self.radius < self.grid_size:
            raise UnsupportedParameter("radius must be smaller than the grid size")
        if self.energy is not None and self.energy < 1:
            raise UnsupportedParameter("energy must be >= 1")
        if self.episode_cap < 1:
            raise UnsupportedParameter("episode cap must be >= 1")
        if self.reward_variant not in ("sparse", "dense-shaped"):
            raise UnsupportedParameter(f"unknown reward variant {self.reward_variant!r}")

    def with_(self, **kw) -> "DomainConfig":
        return replace(self, **kw)


@dataclass
class GeneratedDomain:
    config: DomainConfig
    pomdp: Pomdp
    spec: Specification
    normalization: tuple[float, float]
    potential: dict[int, float]
    optimal_return: float | None = None
    layout: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.config.name

    @property
    def dense_potential(self) -> dict[int, float] | None:
        return self.potential if self.config.reward_variant == "dense-shaped" else None

    @property
    def episode_cap(self) -> int:
        return self.config.episode_cap


def normalize_return(d: GeneratedDomain | str, raw_return: float) -> float:
    offset, scale = NORMALIZATION[d if isinstance(d, str) else d.name]
    return (raw_return + offset) / scale


def shaping_term(d: GeneratedDomain, s: int, s_next: int) -> float:
    """Potential difference ``phi(s') - phi(s)``; terminal states have potential 0."""
    return d.potential.get(s_next, 0.0) - d.potential.get(s, 0.0)


def dense_reward(d: GeneratedDomain, s: int, a, s_next: int | None = None) -> float:
    """Shaped reward for ``(s, a)``.

    With ``s_next`` the realized potential difference is added (what the
    learner sees); without it the expectation over successors is used.
    """
    if d.config.reward_variant != "dense-shaped":
        raise VariantMismatch(f"domain {d.name} was generated with the sparse reward")
    m = d.pomdp
    a = m.action_index(a)
    r = m.R(s, a)
    if s_next is not None:
        return r + shaping_term(d, s, s_next)
    return r + sum(p * shaping_term(d, s, t) for t, p in m.trans[s][a].items())


def manhattan(p, q) -> int:
    return abs(p[0] - q[0]) + abs(p[1] - q[1])


def clip_move(pos, delta, n, dist: int = 1):
    x = min(max(pos[0] + delta[0] * dist, 0), n - 1)
    y = min(max(pos[1] + delta[1] * dist, 0), n - 1)
    return x, y


def on_grid_moves(pos, n) -> list[str]:
    return [a for a, (dx, dy) in MOVES.items() if 0 <= pos[0] + dx < n and 0 <= pos[1] + dy < n]


def add(dist: dict, key, p: float):
    dist[key] = dist.get(key, 0.0) + p


def explore(
    initial: Mapping[Hashable, float],
    actions: list[str],
    available: Callable[[Hashable], Iterable[str]],
    step: Callable[[Hashable, str], Mapping[Hashable, float]],
    observe: Callable[[Hashable], Mapping[str, float]],
    reward: Callable[[Hashable, str], float],
    labels: Callable[[Hashable], Iterable[str]],
    name: Callable[[Hashable], str],
    extra_states: Iterable[Hashable] = (),
) -> tuple[Pomdp, dict[Hashable, int]]:
    """Breadth-first construction of an explicit model from structured states.

    Only states reachable from ``initial`` (plus ``extra_states``) are kept;
    ids follow discovery order, so the result is deterministic.
    """
    ids: dict[Hashable, int] = {}
    order: list[Hashable] = []
    queue: deque = deque()

    def visit(k):
        if k not in ids:
            ids[k] = len(order)
            order.append(k)
            queue.append(k)
        return ids[k]

    for k in initial:
        visit(k)
    for k in extra_states:
        visit(k)
    a_ix = {a: i for i, a in enumerate(actions)}
    obs_names: list[str] = []
    obs_ix: dict[str, int] = {}
    trans, obs, rewards, avail, labs = {}, {}, {}, {}, {}
    while queue:
        k = queue.popleft()
        i = ids[k]
        acts = list(available(k))
        avail[i] = {a_ix[a] for a in acts}
        for a in acts:
            row = {}
            for k2, p in step(k, a).items():
                if p > 0:
                    j = visit(k2)
                    row[j] = row.get(j, 0.0) + p
            trans[(i, a_ix[a])] = row
            r = reward(k, a)
            if r:
                rewards[(i, a_ix[a])] = r
        o = {}
        for zname, p in observe(k).items():
            if zname not in obs_ix:
                obs_ix[zname] = len(obs_names)
                obs_names.append(zname)
            o[obs_ix[zname]] = o.get(obs_ix[zname], 0.0) + p
        obs[i] = o
        for lab in labels(k):
            labs.setdefault(lab, set()).add(i)
    m = build_pomdp(
        len(order), actions, obs_names,
        {ids[k]: p for k, p in initial.items()},
        trans, obs, rewards, labs, avail,
        [name(k) for k in order])
    return m, ids
