"""Executing shields: schedules, action masking, simulation and violation accounting."""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .estimator import SupportTable
from .model import Pomdp
from .synthesis import Shield


class SupportNotWinning(Exception):
    """The run reached a support outside the shield table."""


class EmptyMask(Exception):
    pass


# ---------------------------------------------------------------------------
# schedules

@dataclass(frozen=True)
class ShieldSchedule:
    kind: str = "always-on"
    k0: int = 0
    alpha: float = 1e-3
    p: float = 1.0

    KINDS = ("always-on", "off", "sudden-off", "smooth-off", "fixed-probability")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.k0 < 0:
            raise ValueError("k0 must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    @classmethod
    def parse(cls, text: str) -> "ShieldSchedule":
        """``always-on | off | sudden:K | smooth:K[:ALPHA] | prob:P``"""
        parts = text.split(":")
        try:
            if parts[0] in ("always-on", "on") and len(parts) == 1:
                return cls("always-on")
            if parts[0] in ("off", "none") and len(parts) == 1:
                return cls("off", p=0.0)
            if parts[0] == "sudden" and len(parts) == 2:
                return cls("sudden-off", k0=int(parts[1]))
            if parts[0] == "smooth" and len(parts) in (2, 3):
                alpha = float(parts[2]) if len(parts) == 3 else 1e-3
                return cls("smooth-off", k0=int(parts[1]), alpha=alpha)
            if parts[0] == "prob" and len(parts) == 2:
                return cls("fixed-probability", p=float(parts[1]))
        except ValueError as e:
            raise ValueError(f"bad schedule {text!r}: {e}") from None
        raise ValueError(f"bad schedule {text!r}")

    def __str__(self):
        return {
            "always-on": "always-on",
            "off": "off",
            "sudden-off": f"sudden:{self.k0}",
            "smooth-off": f"smooth:{self.k0}:{self.alpha:g}",
            "fixed-probability": f"prob:{self.p:g}",
        }[self.kind]

    @property
    def uses_shield(self) -> bool:
        return self.kind != "off" and not (self.kind == "fixed-probability" and self.p == 0)


def shield_probability(s: ShieldSchedule, episode: int) -> float:
    if episode < 0:
        raise ValueError("episode must be >= 0")
    if s.kind == "always-on":
        return 1.0
    if s.kind == "off":
        return 0.0
    if s.kind == "sudden-off":
        return 1.0 if episode < s.k0 else 0.0
    if s.kind == "smooth-off":
        if episode < s.k0:
            return 1.0
        return max(0.0, 1.0 - s.alpha * (episode - s.k0))
    return s.p


# ---------------------------------------------------------------------------
# masking

def mask_actions(sh: Shield, b, offered: Iterable[int], active: bool) -> frozenset[int]:
    offered = frozenset(offered)
    if not active:
        return offered
    allowed = sh.table.get(tuple(b))
    if allowed is None:
        raise SupportNotWinning(f"support {tuple(b)} is not in the shield table")
    out = offered & allowed
    if not out:
        raise EmptyMask(f"shield leaves no action at support {tuple(b)}")
    return out


class UniformStream:
    """Buffered uniform draws from a seeded numpy generator."""

    def __init__(self, seed, block: int = 8192):
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.block = block
        self._buf: list[float] = []
        self._i = 0

    def __call__(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self.rng.random(self.block).tolist()
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u

    def choice(self, seq: Sequence):
        return seq[int(self() * len(seq))]


class ShieldedRandomPolicy:
    """Uniform choice over the shield-allowed actions (fair and admissible)."""

    def __init__(self, sh: Shield | None, rng_seed=None):
        self.shield = sh
        self.uniform = UniformStream(rng_seed)

    def allowed(self, b, offered, active: bool = True) -> tuple[int, ...]:
        if self.shield is None:
            return tuple(sorted(offered))
        return tuple(sorted(mask_actions(self.shield, b, offered, active)))

    def __call__(self, b, offered, active: bool = True) -> int:
        return self.uniform.choice(self.allowed(b, offered, active))


# ---------------------------------------------------------------------------
# simulation

class Simulator:
    """Samples trajectories of a :class:`Pomdp` with a seeded stream."""

    def __init__(self, m: Pomdp, uniform: UniformStream):
        self.m = m
        self.u = uniform
        self.trans_cum, self.obs_cum, self.init_cum = m.sampling_tables()

    @staticmethod
    def _draw(table, u):
        keys, cum = table
        return keys[min(bisect_right(cum, u), len(keys) - 1)]

    def reset(self) -> tuple[int, int]:
        s = self._draw(self.init_cum, self.u())
        return s, self._draw(self.obs_cum[s], self.u())

    def step(self, s: int, a: int) -> tuple[int, int, float]:
        t = self._draw(self.trans_cum[s][a], self.u())
        z = self._draw(self.obs_cum[t], self.u())
        return t, z, self.m.reward.get((s, a), 0.0)


def terminal_states(m: Pomdp) -> frozenset[int]:
    """Episodes end on entering these: the ``terminal`` label, else REACH and AVOID."""
    if "terminal" in m.labels:
        return m.labels["terminal"]
    return m.reach | m.avoid


@dataclass
class Step:
    state: int
    support: tuple[int, ...]
    observation: int
    allowed: tuple[int, ...]
    action: int | None
    reward: float


@dataclass
class Trace:
    steps: list[Step] = field(default_factory=list)
    left_region: bool = False

    @property
    def states(self) -> list[int]:
        return [st.state for st in self.steps]

    @property
    def total_reward(self) -> float:
        return sum(st.reward for st in self.steps)


def rollout(m: Pomdp, policy: Callable, uniform: UniformStream, cap: int,
            shield: Shield | None = None, p_shield: float = 1.0,
            table: SupportTable | None = None) -> Trace:
    """One episode.  ``policy(support, allowed_actions) -> action``.

    The shield coin is flipped per step with probability ``p_shield``.  When
    the run has left the winning region (possible only after unshielded
    steps) the shield abstains and the trace is flagged.
    """
    table = table or SupportTable(m)
    sim = Simulator(m, uniform)
    term = terminal_states(m)
    s, z = sim.reset()
    bid = table.initial(z)
    trace = Trace()
    reached = False
    for _ in range(cap):
        if s in term:
            break
        b = table.supports[bid]
        offered = table.offered(bid)
        reached = reached or s in m.reach
        active = shield is not None and (p_shield >= 1.0 or uniform() < p_shield)
        if active and b not in shield.table:
            if not (reached or trace.left_region):
                trace.left_region = True
            active = False
        allowed = tuple(sorted(mask_actions(shield, b, offered, active))) if active else offered
        if not allowed:
            # the states of the support share no action: the run is stuck
            break
        a = policy(b, allowed)
        t, z2, r = sim.step(s, a)
        trace.steps.append(Step(s, b, z, allowed, a, r))
        s, z = t, z2
        bid = table.update(bid, a, z)
    trace.steps.append(Step(s, table.supports[bid], z, (), None, 0.0))
    return trace


def reaches(m: Pomdp, trace: Trace) -> bool:
    return any(s in m.reach for s in trace.states)


def violates(m: Pomdp, trace: Trace) -> bool:
    return any(s in m.avoid for s in trace.states)


# ---------------------------------------------------------------------------
# violation accounting

@dataclass
class ViolationLedger:
    avoid: frozenset[int]
    # one (phase, violated, p_shield) entry per recorded episode
    flags: list[tuple[str, bool, float]] = field(default_factory=list)
    during: int = 0
    after: int = 0

    def record_episode(self, trace, phase: str = "during", p_shield: float = 1.0) -> bool:
        """Flag the episode if any visited state is an AVOID state (once per episode)."""
        if phase not in ("during", "after"):
            raise ValueError(f"unknown phase {phase!r}")
        states = trace.states if isinstance(trace, Trace) else trace
        violated = any(s in self.avoid for s in states)
        self.flags.append((phase, violated, p_shield))
        if violated:
            if phase == "during":
                self.during += 1
            else:
                self.after += 1
        return violated

    @property
    def total(self) -> int:
        return self.during + self.after

    def to_csv(self) -> str:
        lines = ["episode,violated,phase,p_shield"]
        lines += [f"{i},{int(v)},{ph},{p:.10g}" for i, (ph, v, p) in enumerate(self.flags)]
        return "\n".join(lines) + "\n"
