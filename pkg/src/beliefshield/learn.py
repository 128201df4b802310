"""Small-scale learning harness: REINFORCE with a linear softmax and tabular Q-learning.

Every action choice goes through the shield according to a switch-off
schedule.  Agents see one of three inputs:

* ``obs``     one-hot of the current observation;
* ``support`` indicator vector of the belief support;
* ``stacked`` observation, support and the mask of allowed actions.

Inputs are kept as lists of active feature indices, so a linear policy is
``theta[active].sum(0)`` and the tabular learner keys on the index tuple.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domains import GeneratedDomain, normalize_return
from .estimator import SupportTable
from .runtime import ShieldSchedule, Simulator, UniformStream, shield_probability, terminal_states
from .synthesis import Shield

CURVE_HEADER = ("idx", "return", "norm_return", "smooth_norm", "viol_during", "viol_after", "p_shield")
REPRS = {"obs": "observation-onehot", "support": "support-bitvector", "stacked": "stacked"}


class ConfigInvalid(ValueError):
    pass


class NumericalError(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# inputs

@dataclass(frozen=True)
class FeatureRepr:
    kind: str = "support"

    def __post_init__(self):
        kind = {v: k for k, v in REPRS.items()}.get(self.kind, self.kind)
        if kind not in REPRS:
            raise ConfigInvalid(f"unknown representation {self.kind!r}; choose from obs, support, stacked")
        object.__setattr__(self, "kind", kind)

    def length(self, m) -> int:
        if self.kind == "obs":
            return m.n_observations
        if self.kind == "support":
            return m.n_states
        return m.n_observations + m.n_states + m.n_actions

    def active(self, m, z: int, b: Sequence[int], allowed: Sequence[int]) -> tuple[int, ...]:
        """Indices of the nonzero (all ones) entries of the feature vector."""
        if self.kind == "obs":
            return (z,)
        if self.kind == "support":
            return tuple(b)
        nz, ns = m.n_observations, m.n_states
        return (z,) + tuple(nz + s for s in b) + tuple(nz + ns + a for a in allowed)

    def vector(self, m, z: int, b: Sequence[int], allowed: Sequence[int]) -> np.ndarray:
        v = np.zeros(self.length(m))
        v[list(self.active(m, z, b, allowed))] = 1.0
        return v


# ---------------------------------------------------------------------------
# configuration and results

@dataclass(frozen=True)
class TrainConfig:
    agent: str = "reinforce"
    episodes: int | None = 5000
    steps: int | None = None
    eval_interval: int | None = None
    eval_episodes: int = 10
    gamma: float = 1.0
    learning_rate: float | None = None
    epsilon: float = 0.1
    seed: int = 0
    schedule: ShieldSchedule = ShieldSchedule()
    repr: FeatureRepr = FeatureRepr("support")
    episode_cap: int | None = None

    def __post_init__(self):
        if isinstance(self.schedule, str):
            object.__setattr__(self, "schedule", ShieldSchedule.parse(self.schedule))
        if isinstance(self.repr, str):
            object.__setattr__(self, "repr", FeatureRepr(self.repr))
        if self.agent not in ("reinforce", "qlearning", "random"):
            raise ConfigInvalid(f"unknown agent {self.agent!r}")
        if (self.episodes is None) == (self.steps is None):
            raise ConfigInvalid("give exactly one of episodes and steps")
        if (self.episodes or 0) < 0 or (self.steps or 0) < 0:
            raise ConfigInvalid("training budget must be >= 0")
        if self.eval_interval is None:
            object.__setattr__(self, "eval_interval", 100 if self.episodes is not None else 1000)
        if self.eval_interval <= 0 or self.eval_episodes <= 0:
            raise ConfigInvalid("evaluation interval and episode count must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigInvalid("discount must lie in [0, 1]")
        if self.learning_rate is None:
            object.__setattr__(self, "learning_rate", 0.1 if self.agent == "reinforce" else 0.2)
        if self.learning_rate < 0:
            raise ConfigInvalid("learning rate must be >= 0")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigInvalid("epsilon must lie in [0, 1]")
        if self.episode_cap is not None and self.episode_cap < 1:
            raise ConfigInvalid("episode cap must be >= 1")


@dataclass
class LearningCurve:
    rows: list[tuple] = field(default_factory=list)
    final_block_violations: int = 0
    left_region_episodes: int = 0
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        j = CURVE_HEADER.index(name)
        return [r[j] for r in self.rows]

    @property
    def violations_during(self) -> int:
        return self.meta.get("viol_during", self.rows[-1][4] if self.rows else 0)

    @property
    def violations_after(self) -> int:
        return self.final_block_violations

    @property
    def final_smoothed(self) -> float:
        return self.rows[-1][3] if self.rows else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for idx, ret, norm, smooth, vd, va, p in self.rows:
            w.writerow([idx, f"{ret:.10g}", f"{norm:.10g}", f"{smooth:.10g}", vd, va, f"{p:.10g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LearningCurve":
        r = csv.reader(io.StringIO(text))
        header = tuple(next(r))
        if header != CURVE_HEADER:
            raise ValueError(f"unexpected curve header {header}")
        rows = [(int(a), float(b), float(c), float(d), int(e), int(f), float(g)) for a, b, c, d, e, f, g in r]
        return cls(rows)


def smooth_curve(values: Sequence[float], window: int = 5) -> list[float]:
    """Trailing mean over the last ``min(window, i + 1)`` entries.

    >>> smooth_curve([1, 2, 3, 4, 5, 6])
    [1.0, 1.5, 2.0, 2.5, 3.0, 4.0]
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    return [float(np.mean(values[max(0, i - window + 1):i + 1])) for i in range(len(values))]


# ---------------------------------------------------------------------------
# updates

def masked_softmax(logits: np.ndarray, allowed: Sequence[int]) -> np.ndarray:
    """Probabilities over all actions, exactly 0 outside ``allowed``."""
    p = np.zeros(logits.shape[0])
    sel = logits[list(allowed)]
    e = np.exp(sel - sel.max())
    p[list(allowed)] = e / e.sum()
    return p


def log_policy_gradient(theta: np.ndarray, active: Sequence[int], allowed: Sequence[int], a: int) -> np.ndarray:
    """``d/dtheta log pi(a | x)`` for the linear masked softmax."""
    idx = list(active)
    pi = masked_softmax(theta[idx].sum(0), allowed)
    g = np.zeros_like(theta)
    row = -pi
    row[a] += 1.0
    g[idx] = row
    return g


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    g = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        g[t] = acc
    return g


def reinforce_update(theta: np.ndarray, trace: Sequence[tuple], gamma: float, lr: float) -> np.ndarray:
    """One episodic policy-gradient step, in place.

    ``trace`` holds ``(active, allowed, action, reward)`` per step, or
    ``(active, allowed, action, reward, probs)`` with the probabilities used
    when acting (saves recomputing them).
    """
    if not trace or lr == 0:
        return theta
    returns = discounted_returns([t[3] for t in trace], gamma)
    # all probabilities come from the pre-update parameters
    pis = [step[4] if len(step) > 4 else masked_softmax(theta[list(step[0])].sum(0), step[1]) for step in trace]
    for step, g, pi in zip(trace, returns, pis):
        if g == 0.0:
            continue
        active, allowed, a = step[0], step[1], step[2]
        idx = list(active)
        row = -pi[list(allowed)]
        row[list(allowed).index(a)] += 1.0
        theta[np.ix_(idx, list(allowed))] += lr * g * row
    if not np.all(np.isfinite(theta)):
        bad = np.argwhere(~np.isfinite(theta))[:5].tolist()
        raise NumericalError(f"non-finite policy parameters at {bad} (lr={lr}, gamma={gamma})")
    return theta


def q_update(table: dict, x, a: int, r: float, x_next, allowed_next: Iterable[int], gamma: float, lr: float,
             terminal: bool = False) -> dict:
    """Tabular Q-learning step; the bootstrap max ranges over ``allowed_next``."""
    if lr == 0:
        return table
    q = table.setdefault(x, {})
    old = q.get(a, 0.0)
    boot = 0.0
    if not terminal:
        nxt = table.get(x_next, {})
        boot = max((nxt.get(b, 0.0) for b in allowed_next), default=0.0)
    q[a] = old + lr * (r + gamma * boot - old)
    return table


# ---------------------------------------------------------------------------
# training

class _Agent:
    def __init__(self, d: GeneratedDomain, cfg: TrainConfig, uniform: UniformStream):
        self.m = d.pomdp
        self.cfg = cfg
        self.u = uniform
        self.repr = cfg.repr
        self.theta = np.zeros((cfg.repr.length(self.m), self.m.n_actions))
        self.q: dict = {}
        self.term = terminal_states(self.m)
        self.masks: dict[int, tuple[int, ...]] = {}
        self._feat: dict = {}
        self._probs: dict = {}

    def allowed(self, sh: Shield | None, bid: int, b, offered) -> tuple[int, ...] | None:
        """Shield mask at ``bid``, or None when the support is outside the table."""
        mask = self.masks.get(bid)
        if mask is None:
            allowed = sh.table.get(b)
            if allowed is None:
                return None
            mask = self.masks[bid] = tuple(a for a in offered if a in allowed)
        return mask

    def features(self, z, bid, b, allowed) -> tuple[int, ...]:
        key = (z, bid, allowed)
        f = self._feat.get(key)
        if f is None:
            f = self._feat[key] = self.repr.active(self.m, z, b, allowed)
        return f

    def probs(self, f, allowed) -> np.ndarray:
        # theta only changes between episodes, so this cache is cleared then
        key = (f, allowed)
        p = self._probs.get(key)
        if p is None:
            p = self._probs[key] = masked_softmax(self.theta[list(f)].sum(0), allowed)
        return p

    def act(self, f, allowed, greedy: bool):
        kind = self.cfg.agent
        if kind == "random":
            return self.u.choice(allowed), None
        if kind == "reinforce":
            p = self.probs(f, allowed)
            if greedy:
                return max(allowed, key=lambda a: (p[a], -a)), p
            u, acc = self.u(), 0.0
            for a in allowed:
                acc += p[a]
                if u < acc:
                    return a, p
            return allowed[-1], p
        q = self.q.get(f, {})
        if not greedy and self.u() < self.cfg.epsilon:
            return self.u.choice(allowed), None
        best = max(q.get(a, 0.0) for a in allowed)
        return min(a for a in allowed if q.get(a, 0.0) == best), None

    def end_episode(self, trace):
        if self.cfg.agent == "reinforce":
            reinforce_update(self.theta, trace, self.cfg.gamma, self.cfg.learning_rate)
            self._probs.clear()


@dataclass
class _Episode:
    raw_return: float
    violated: bool
    left_region: bool
    steps: int


def _run_episode(d, agent: _Agent, sim: Simulator, table: SupportTable, sh: Shield | None, p: float,
                 coin: UniformStream, cap: int, learn: bool, greedy: bool, eval_mode: bool) -> _Episode:
    m = d.pomdp
    term = agent.term
    avoid = m.avoid
    dense = d.config.reward_variant == "dense-shaped"
    pot = d.potential
    scale = d.normalization[1]
    cfg = agent.cfg
    s, z = sim.reset()
    bid = table.initial(z)
    raw = 0.0
    violated = s in avoid
    left = False
    trace = []
    prev = None  # pending Q transition (f, a, r)
    for t in range(cap):
        b = table.supports[bid]
        offered = table.offered(bid)
        if sh is not None and p > 0 and (eval_mode or p >= 1.0 or coin() < p):
            allowed = agent.allowed(sh, bid, b, offered)
            if allowed is None:
                left = left or s not in m.reach
                allowed = offered
        else:
            allowed = offered
        f = agent.features(z, bid, b, allowed)
        if learn and prev is not None:
            q_update(agent.q, prev[0], prev[1], prev[2], f, allowed, cfg.gamma, cfg.learning_rate)
        a, probs = agent.act(f, allowed, greedy)
        s2, z, r = sim.step(s, a)
        raw += r
        if learn:
            rt = r + (pot.get(s2, 0.0) - pot.get(s, 0.0) if dense else 0.0)
            rt /= scale
            if cfg.agent == "reinforce":
                trace.append((f, allowed, a, rt, probs))
            elif cfg.agent == "qlearning":
                prev = (f, a, rt)
        s = s2
        violated = violated or s in avoid
        bid = table.update(bid, a, z)
        if s in term:
            break
    if learn:
        if prev is not None:
            if s in term:
                q_update(agent.q, prev[0], prev[1], prev[2], None, (), cfg.gamma, cfg.learning_rate, terminal=True)
            else:
                # cut off by the episode cap: bootstrap from where the run stopped
                b, offered = table.supports[bid], table.offered(bid)
                allowed = (agent.allowed(sh, bid, b, offered) if sh is not None and p > 0 else None) or offered
                q_update(agent.q, prev[0], prev[1], prev[2], agent.features(z, bid, b, allowed), allowed,
                         cfg.gamma, cfg.learning_rate)
        agent.end_episode(trace)
    return _Episode(raw, violated, left, t + 1)


def train(d: GeneratedDomain, sh: Shield | None, cfg: TrainConfig) -> LearningCurve:
    """Train one agent and return its evaluation curve (deterministic in ``cfg.seed``)."""
    if cfg.schedule.uses_shield:
        if sh is None:
            raise ConfigInvalid(f"schedule {cfg.schedule} needs a shield")
        if sh.uncovered_initial or not sh.table:
            raise ConfigInvalid("shield does not cover the initial supports")
    else:
        sh = None
    m = d.pomdp
    cap = cfg.episode_cap or d.episode_cap
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    agent = _Agent(d, cfg, UniformStream(np.random.default_rng(seeds[0])))
    table = SupportTable(m)
    train_sim = Simulator(m, UniformStream(np.random.default_rng(seeds[1])))
    eval_u = UniformStream(np.random.default_rng(seeds[2]))
    eval_agent_u = agent.u
    curve = LearningCurve(meta={"domain": d.name, "agent": cfg.agent, "seed": cfg.seed,
                                "schedule": str(cfg.schedule), "repr": cfg.repr.kind})
    norms: list[float] = []
    viol_during = viol_after = 0
    episode = steps = 0
    next_eval = cfg.eval_interval
    budget_steps = cfg.steps is not None

    def done():
        return steps >= cfg.steps if budget_steps else episode >= cfg.episodes

    while not done():
        p = shield_probability(cfg.schedule, episode)
        ep = _run_episode(d, agent, train_sim, table, sh, p, agent.u, cap, learn=True,
                          greedy=False, eval_mode=False)
        episode += 1
        steps += ep.steps
        viol_during += ep.violated
        curve.left_region_episodes += ep.left_region
        counter = steps if budget_steps else episode
        while counter >= next_eval:
            # evaluation uses its own streams so it does not perturb training
            p_eval = shield_probability(cfg.schedule, episode)
            eval_sim = Simulator(m, eval_u)
            agent.u = eval_u
            block = [_run_episode(d, agent, eval_sim, table, sh, p_eval, eval_u, cap, learn=False,
                                  greedy=cfg.agent != "random", eval_mode=True)
                     for _ in range(cfg.eval_episodes)]
            agent.u = eval_agent_u
            mean_ret = float(np.mean([e.raw_return for e in block]))
            curve.final_block_violations = sum(e.violated for e in block)
            viol_after += curve.final_block_violations
            norms.append(normalize_return(d, mean_ret))
            smooth = smooth_curve(norms)[-1]
            curve.rows.append((next_eval, mean_ret, norms[-1], smooth, viol_during, viol_after, p_eval))
            next_eval += cfg.eval_interval
    curve.meta["viol_during"] = viol_during
    curve.meta["viol_eval"] = viol_after
    curve.meta["episodes"] = episode
    curve.meta["steps"] = steps
    return curve


# ---------------------------------------------------------------------------
# experiment matrix

@dataclass(frozen=True)
class Condition:
    schedule: str = "always-on"
    repr: str = "support"

    def label(self) -> str:
        return f"{self.schedule.replace(':', '-')}_{self.repr}"


@dataclass
class ExperimentBundle:
    curves: dict[tuple, LearningCurve] = field(default_factory=dict)
    baselines: dict[tuple, LearningCurve] = field(default_factory=dict)
    failures: list[tuple[tuple, str]] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    def aggregate(self) -> dict[tuple, list[float]]:
        """Mean smoothed normalized return per (domain, condition) across seeds."""
        groups: dict[tuple, list[LearningCurve]] = {}
        for (dom, cond, seed), c in sorted(self.curves.items(), key=lambda kv: repr(kv[0])):
            groups.setdefault((dom, cond), []).append(c)
        out = {}
        for k, cs in groups.items():
            n = min(len(c.rows) for c in cs)
            out[k] = [float(np.mean([c.rows[i][3] for c in cs])) for i in range(n)]
        return out

    def total_violations(self) -> int:
        """AVOID visits over training and evaluation episodes of every cell."""
        cs = list(self.curves.values()) + list(self.baselines.values())
        return sum(c.meta.get("viol_during", 0) + c.meta.get("viol_eval", 0) for c in cs)


def _cell(args):
    key, d, sh, cfg = args
    try:
        return key, train(d, sh, cfg), None
    except Exception as e:  # reported, not raised: one bad cell should not sink the matrix
        return key, None, f"{type(e).__name__}: {e}"


def run_matrix(domains: Sequence[GeneratedDomain], conditions: Sequence[Condition], seeds: Sequence[int],
               shields: dict[str, Shield], base: TrainConfig = TrainConfig(), workers: int = 1) -> ExperimentBundle:
    """Train every (domain, condition, seed) cell plus random baselines.

    One random-policy baseline is produced per domain and shield condition
    (using the first seed).  Failed cells are listed in ``failures``.
    """
    bundle = ExperimentBundle(seeds=list(seeds))
    jobs = []
    for d in domains:
        sh = shields.get(d.name)
        for cond in conditions:
            for seed in seeds:
                cfg = _with(base, seed=seed, schedule=cond.schedule, repr=cond.repr)
                jobs.append((("curve", d.name, cond, seed), d, sh, cfg))
        if seeds:
            for sched in sorted({c.schedule for c in conditions}):
                cfg = _with(base, agent="random", seed=seeds[0], schedule=sched, repr="obs")
                jobs.append((("baseline", d.name, sched, seeds[0]), d, sh, cfg))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_cell, jobs))
    else:
        results = [_cell(j) for j in jobs]
    for key, curve, err in results:
        if err is not None:
            bundle.failures.append((key, err))
        elif key[0] == "curve":
            bundle.curves[key[1:]] = curve
        else:
            bundle.baselines[key[1:]] = curve
    return bundle


def _with(cfg: TrainConfig, **kw) -> TrainConfig:
    fields = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
    fields.update(kw)
    if fields["agent"] == "random":
        fields["learning_rate"] = 0.0
    return TrainConfig(**fields)


def write_bundle(bundle: ExperimentBundle, outdir) -> Path:
    """One curve CSV per cell plus ``manifest.json`` with SHA-256 checksums."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    cells = []
    items = [("curve", k, c) for k, c in bundle.curves.items()] + [("baseline", k, c) for k, c in bundle.baselines.items()]
    for kind, key, curve in sorted(items, key=lambda t: (t[0], repr(t[1]))):
        dom, cond, seed = key
        label = cond.label() if isinstance(cond, Condition) else f"{str(cond).replace(':', '-')}_random"
        name = f"{kind}_{dom}_{label}_s{seed}.csv"
        text = curve.to_csv()
        (out / name).write_text(text)
        cells.append({"file": name, "kind": kind, "domain": dom, "condition": label, "seed": seed,
                      "sha256": hashlib.sha256(text.encode()).hexdigest(),
                      "final_smooth_norm": curve.final_smoothed if curve.rows else None,
                      "viol_during": curve.violations_during, "viol_after": curve.violations_after})
    manifest = {"seeds": bundle.seeds, "cells": cells,
                "failures": [{"cell": repr(k), "error": e} for k, e in bundle.failures]}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path
