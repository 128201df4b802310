"""Explicit POMDP representation, text format, and partial-model relations.

States, actions and observations are dense integer ids; names are kept for
I/O only.  Observations are emitted by the state *arrived in*: a step applies
``a`` in ``s``, samples ``s'`` from ``P(.|s,a)``, samples ``z`` from
``O(.|s')`` and pays ``R(s,a)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

TOL = 1e-9


class ModelError(Exception):
    """Base class for model construction and parsing problems."""


class ModelSyntaxError(ModelError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class ModelValidationError(ModelError):
    def __init__(self, invariant: str, detail: str = ""):
        super().__init__(f"{invariant}: {detail}" if detail else invariant)
        self.invariant = invariant


class VocabularyMismatch(ModelError):
    pass


def _normalized(dist: Mapping[int, float], what: str, where: str) -> dict[int, float]:
    out = {}
    for k, p in dist.items():
        if not (-TOL <= p <= 1 + TOL) or math.isnan(p):
            raise ModelValidationError(what, f"probability {p} out of range at {where}")
        if p > 0:
            out[k] = float(p)
    total = math.fsum(out.values())
    if abs(total - 1.0) > TOL:
        raise ModelValidationError(what, f"sums to {total!r} at {where}")
    # leave round-off alone so that parse(serialize(m)) reproduces m exactly
    if abs(total - 1.0) > 1e-12:
        out = {k: p / total for k, p in out.items()}
    return out


@dataclass(frozen=True, eq=False)
class Pomdp:
    """An explicit, immutable POMDP.

    ``trans[s][a]`` is a sparse ``{s': p}`` map (empty for unavailable
    actions), ``obs[s]`` a sparse ``{z: p}`` map and ``reward`` a sparse
    ``{(s, a): r}`` map.  ``labels`` holds named state sets; ``reach`` and
    ``avoid`` are the ones synthesis cares about.
    """

    state_names: tuple[str, ...]
    actions: tuple[str, ...]
    observations: tuple[str, ...]
    initial: Mapping[int, float]
    available: tuple[frozenset[int], ...]
    trans: tuple[tuple[Mapping[int, float], ...], ...]
    obs: tuple[Mapping[int, float], ...]
    reward: Mapping[tuple[int, int], float] = field(default_factory=dict)
    labels: Mapping[str, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        self._validate()
        # graph-only views, used by the estimator and synthesis
        succ = tuple(tuple(tuple(sorted(row)) for row in per_s) for per_s in self.trans)
        emits = tuple(tuple(sorted(o)) for o in self.obs)
        object.__setattr__(self, "succ", succ)
        object.__setattr__(self, "emits", emits)
        object.__setattr__(self, "_cache", {})

    # -- basic shape -------------------------------------------------------
    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    @property
    def reach(self) -> frozenset[int]:
        return self.labels.get("reach", frozenset())

    @property
    def avoid(self) -> frozenset[int]:
        return self.labels.get("avoid", frozenset())

    def action_index(self, a) -> int:
        if isinstance(a, (int, np.integer)):
            return int(a)
        return self.actions.index(a)

    def observation_index(self, z) -> int:
        if isinstance(z, (int, np.integer)):
            return int(z)
        return self.observations.index(z)

    def state_index(self, s) -> int:
        if isinstance(s, (int, np.integer)):
            return int(s)
        return self.state_names.index(s)

    def R(self, s: int, a) -> float:
        return self.reward.get((s, self.action_index(a)), 0.0)

    # -- validation --------------------------------------------------------
    def _validate(self):
        n, na, nz = len(self.state_names), len(self.actions), len(self.observations)
        if n == 0:
            raise ModelValidationError("states", "model has no states")
        if len(set(self.state_names)) != n:
            raise ModelValidationError("states", "duplicate state names")
        if len(set(self.actions)) != na or len(set(self.observations)) != nz:
            raise ModelValidationError("names", "duplicate action or observation names")
        if len(self.available) != n or len(self.trans) != n or len(self.obs) != n:
            raise ModelValidationError("shape", "per-state tables must have one entry per state")
        _check_ids(self.initial, n, "initial distribution")
        _normalized(self.initial, "initial distribution", "start")
        for s in range(n):
            if not self.available[s]:
                raise ModelValidationError("available actions", f"state {s} has no available action")
            if len(self.trans[s]) != na:
                raise ModelValidationError("shape", f"state {s} needs one transition row per action")
            for a in range(na):
                row = self.trans[s][a]
                if a in self.available[s]:
                    _check_ids(row, n, f"transition row ({s},{a})")
                    _normalized(row, "transition distribution", f"({s},{self.actions[a]})")
                elif any(p > 0 for p in row.values()):
                    raise ModelValidationError(
                        "available actions", f"unavailable action {self.actions[a]} has transitions at {s}")
            _check_ids(self.obs[s], nz, f"observation row {s}")
            _normalized(self.obs[s], "observation distribution", f"state {s}")
        for name, members in self.labels.items():
            _check_ids(dict.fromkeys(members, 1.0), n, f"label {name}")
        if self.reach & self.avoid:
            raise ModelValidationError("labels", "reach and avoid overlap")
        for (s, a), r in self.reward.items():
            if not (0 <= s < n and 0 <= a < na) or not math.isfinite(r):
                raise ModelValidationError("reward", f"bad entry ({s},{a})={r}")

    # -- sampling tables (lazily built, cached) ----------------------------
    def sampling_tables(self):
        """Cumulative tables ``(trans_cum, obs_cum, init_cum)`` for inverse-CDF draws."""
        if "sampling" not in self._cache:
            def cum(d: Mapping[int, float]):
                keys = sorted(d)
                c = np.cumsum([d[k] for k in keys]).tolist()
                if c:
                    c[-1] = 1.0
                return keys, c
            trans_cum = tuple(
                tuple(cum(self.trans[s][a]) for a in range(self.n_actions)) for s in range(self.n_states))
            obs_cum = tuple(cum(o) for o in self.obs)
            self._cache["sampling"] = (trans_cum, obs_cum, cum(self.initial))
        return self._cache["sampling"]

    def graph_fingerprint(self) -> str:
        """SHA-256 over the graph structure only (supports, not probabilities)."""
        if "fingerprint" not in self._cache:
            h = hashlib.sha256()
            h.update(repr((self.n_states, self.actions, self.observations)).encode())
            h.update(repr(sorted(self.initial)).encode())
            h.update(repr([sorted(av) for av in self.available]).encode())
            h.update(repr(self.succ).encode())
            h.update(repr(self.emits).encode())
            h.update(repr(sorted((k, sorted(v)) for k, v in self.labels.items())).encode())
            self._cache["fingerprint"] = h.hexdigest()
        return self._cache["fingerprint"]


def _check_ids(d, bound, where):
    for k in d:
        if not (isinstance(k, (int, np.integer)) and 0 <= k < bound):
            raise ModelValidationError("identifiers", f"id {k!r} out of range in {where}")


@dataclass(frozen=True)
class Specification:
    """Reach-avoid ``<REACH, AVOID>`` or avoid-only ``<AVOID>``."""

    kind: str
    reach: frozenset[int]
    avoid: frozenset[int]

    def __post_init__(self):
        if self.kind not in ("reach-avoid", "avoid"):
            raise ValueError(f"unknown specification kind {self.kind!r}")
        object.__setattr__(self, "reach", frozenset(self.reach))
        object.__setattr__(self, "avoid", frozenset(self.avoid))
        if self.reach & self.avoid:
            raise ValueError("reach and avoid sets overlap")
        if not self.avoid:
            raise ValueError("avoid set must be nonempty")
        if (self.kind == "reach-avoid") != bool(self.reach):
            raise ValueError("reach set must be nonempty exactly for reach-avoid specifications")

    @classmethod
    def from_model(cls, m: Pomdp, kind: str = "reach-avoid") -> "Specification":
        reach = m.reach if kind == "reach-avoid" else frozenset()
        return cls(kind, reach, m.avoid)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "reach": sorted(self.reach), "avoid": sorted(self.avoid)}


def build_pomdp(
    n_states: int,
    actions: Sequence[str],
    observations: Sequence[str],
    initial: Mapping[int, float],
    transitions: Mapping[tuple[int, int], Mapping[int, float]],
    observe: Mapping[int, Mapping[int, float]],
    rewards: Mapping[tuple[int, int], float] | None = None,
    labels: Mapping[str, Iterable[int]] | None = None,
    available: Mapping[int, Iterable[int]] | None = None,
    state_names: Sequence[str] | None = None,
) -> Pomdp:
    """Assemble a :class:`Pomdp` from sparse dictionaries.

    Actions default to available wherever a transition row is given; a state
    with no rows at all gets every action.
    """
    na = len(actions)
    if not isinstance(observe, Mapping):
        observe = dict(enumerate(observe))
    if available is None:
        avail = {}
        for (s, a) in transitions:
            avail.setdefault(s, set()).add(a)
        available = avail
    av = tuple(frozenset(available.get(s, range(na))) for s in range(n_states))
    trans = tuple(
        tuple(
            _normalized(transitions.get((s, a), {}), "transition distribution", f"({s},{actions[a]})")
            if a in av[s] else {}
            for a in range(na))
        for s in range(n_states))
    obs = tuple(_normalized(observe.get(s, {}), "observation distribution", f"state {s}") for s in range(n_states))
    return Pomdp(
        state_names=tuple(state_names) if state_names is not None else tuple(str(i) for i in range(n_states)),
        actions=tuple(actions),
        observations=tuple(observations),
        initial=_normalized(initial, "initial distribution", "start"),
        available=av,
        trans=trans,
        obs=obs,
        reward={k: float(v) for k, v in (rewards or {}).items() if v != 0},
        labels={k: frozenset(v) for k, v in (labels or {}).items()},
    )


# ---------------------------------------------------------------------------
# text format

def _tokens(line: str) -> list[str]:
    return line.split("#", 1)[0].split()


def parse_model(text: str) -> Pomdp:
    """Parse the line-oriented model format into a validated :class:`Pomdp`."""
    n = None
    names: list[str] = []
    actions: list[str] = []
    observations: list[str] = []
    start: dict[int, float] = {}
    T: dict[tuple[int, int], dict[int, float]] = {}
    O: dict[int, dict[int, float]] = {}
    R: dict[tuple[int, int], float] = {}
    avail: dict[int, set[int]] = {}
    labels: dict[str, set[int]] = {}
    seen_header = False

    def sid(tok, ln):
        if tok in name_ix:
            return name_ix[tok]
        try:
            v = int(tok)
        except ValueError:
            raise ModelSyntaxError(ln, f"unknown state {tok!r}") from None
        if n is None or not 0 <= v < n:
            raise ModelSyntaxError(ln, f"state {tok!r} out of range")
        return v

    def lookup(tok, table, kind, ln):
        try:
            return table[tok]
        except KeyError:
            raise ModelSyntaxError(ln, f"unknown {kind} {tok!r}") from None

    def prob(tok, ln):
        try:
            return float(tok)
        except ValueError:
            raise ModelSyntaxError(ln, f"expected a number, got {tok!r}") from None

    name_ix: dict[str, int] = {}
    act_ix: dict[str, int] = {}
    obs_ix: dict[str, int] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        tok = _tokens(raw)
        if not tok:
            continue
        head = tok[0]
        if not seen_header:
            if tok != ["pomdp"]:
                raise ModelSyntaxError(ln, "expected header line 'pomdp'")
            seen_header = True
            continue
        if head in ("T:", "O:", "R:", "avail:", "start:", "label") and (n is None or not actions or not observations):
            raise ModelSyntaxError(ln, "states, actions and observations must be declared first")
        if head == "states:":
            if len(tok) < 2:
                raise ModelSyntaxError(ln, "states: needs a count")
            try:
                n = int(tok[1])
            except ValueError:
                raise ModelSyntaxError(ln, "state count must be an integer") from None
            names = tok[2:]
            if names and len(names) != n:
                raise ModelSyntaxError(ln, f"{len(names)} names for {n} states")
            name_ix = {nm: i for i, nm in enumerate(names)}
        elif head == "actions:":
            actions = tok[1:]
            act_ix = {a: i for i, a in enumerate(actions)}
        elif head == "observations:":
            observations = tok[1:]
            obs_ix = {z: i for i, z in enumerate(observations)}
        elif head == "start:":
            for item in tok[1:]:
                s, _, p = item.rpartition(":")
                if not s:
                    raise ModelSyntaxError(ln, f"start entry {item!r} must be state:prob")
                start[sid(s, ln)] = start.get(sid(s, ln), 0.0) + prob(p, ln)
        elif head == "T:":
            if len(tok) != 5:
                raise ModelSyntaxError(ln, "T: <s> <a> <s'> <p>")
            s, a, t = sid(tok[1], ln), lookup(tok[2], act_ix, "action", ln), sid(tok[3], ln)
            T.setdefault((s, a), {})[t] = prob(tok[4], ln)
        elif head == "O:":
            if len(tok) != 4:
                raise ModelSyntaxError(ln, "O: <s> <z> <p>")
            s, z = sid(tok[1], ln), lookup(tok[2], obs_ix, "observation", ln)
            O.setdefault(s, {})[z] = prob(tok[3], ln)
        elif head == "R:":
            if len(tok) != 4:
                raise ModelSyntaxError(ln, "R: <s> <a> <r>")
            R[(sid(tok[1], ln), lookup(tok[2], act_ix, "action", ln))] = prob(tok[3], ln)
        elif head == "avail:":
            if len(tok) < 3:
                raise ModelSyntaxError(ln, "avail: <s> <a...>")
            avail[sid(tok[1], ln)] = {lookup(a, act_ix, "action", ln) for a in tok[2:]}
        elif head == "label":
            if len(tok) < 2 or not tok[1].endswith(":"):
                raise ModelSyntaxError(ln, "label <name>: <s...>")
            labels.setdefault(tok[1][:-1], set()).update(sid(s, ln) for s in tok[2:])
        else:
            raise ModelSyntaxError(ln, f"unknown directive {head!r}")
    if not seen_header:
        raise ModelSyntaxError(1, "empty document")
    if n is None:
        raise ModelSyntaxError(0, "missing states: section")

    available = {s: avail.get(s, set(range(len(actions)))) for s in range(n)}
    return build_pomdp(n, actions, observations, start, T, O, R, labels, available, names or None)


def _fmt(p: float) -> str:
    return repr(float(p))


def serialize_model(m: Pomdp) -> str:
    """Inverse of :func:`parse_model` (exact float round trip)."""
    numeric = m.state_names == tuple(str(i) for i in range(m.n_states))
    nm = (lambda s: str(s)) if numeric else (lambda s: m.state_names[s])
    out = ["pomdp"]
    out.append(f"states: {m.n_states}" + ("" if numeric else " " + " ".join(m.state_names)))
    out.append("actions: " + " ".join(m.actions))
    out.append("observations: " + " ".join(m.observations))
    out.append("start: " + " ".join(f"{nm(s)}:{_fmt(p)}" for s, p in sorted(m.initial.items())))
    full = frozenset(range(m.n_actions))
    for s in range(m.n_states):
        if m.available[s] != full:
            out.append(f"avail: {nm(s)} " + " ".join(m.actions[a] for a in sorted(m.available[s])))
    for s in range(m.n_states):
        for a in range(m.n_actions):
            for t, p in sorted(m.trans[s][a].items()):
                out.append(f"T: {nm(s)} {m.actions[a]} {nm(t)} {_fmt(p)}")
    for s in range(m.n_states):
        for z, p in sorted(m.obs[s].items()):
            out.append(f"O: {nm(s)} {m.observations[z]} {_fmt(p)}")
    for (s, a), r in sorted(m.reward.items()):
        out.append(f"R: {nm(s)} {m.actions[a]} {_fmt(r)}")
    for name in sorted(m.labels):
        out.append(f"label {name}: " + " ".join(nm(s) for s in sorted(m.labels[name])))
    return "\n".join(out) + "\n"


def load_model(path) -> Pomdp:
    with open(path, encoding="utf-8") as f:
        return parse_model(f.read())


# ---------------------------------------------------------------------------
# partial-model relations

def _check_vocab(m: Pomdp, other: Pomdp):
    if (m.n_states, m.actions, m.observations) != (other.n_states, other.actions, other.observations):
        raise VocabularyMismatch("models differ in states, actions or observations")


def is_graph_preserving(m: Pomdp, m_prime: Pomdp) -> bool:
    """True iff transition and observation supports coincide exactly."""
    _check_vocab(m, m_prime)
    return m.succ == m_prime.succ and m.emits == m_prime.emits


def overapproximates(m_prime: Pomdp, m: Pomdp) -> bool:
    """True iff every positive transition/observation of ``m`` is positive in ``m_prime``."""
    _check_vocab(m, m_prime)
    for s in range(m.n_states):
        if not set(m.emits[s]) <= set(m_prime.emits[s]):
            return False
        for a in range(m.n_actions):
            if not set(m.succ[s][a]) <= set(m_prime.succ[s][a]):
                return False
    return True


def perturb_probabilities(m: Pomdp, rng: np.random.Generator) -> Pomdp:
    """Graph-preserving copy of ``m`` with fresh random positive probabilities."""
    def redraw(d):
        keys = sorted(d)
        w = rng.uniform(0.05, 1.0, size=len(keys))
        w = w / w.sum()
        return {k: float(p) for k, p in zip(keys, w)}
    trans = {(s, a): redraw(m.trans[s][a])
             for s in range(m.n_states) for a in m.available[s]}
    obs = {s: redraw(m.obs[s]) for s in range(m.n_states)}
    return build_pomdp(m.n_states, m.actions, m.observations, redraw(m.initial), trans, obs,
                       m.reward, m.labels, {s: m.available[s] for s in range(m.n_states)}, m.state_names)


def random_pomdp(
    rng: np.random.Generator,
    n_states: int = 6,
    n_actions: int = 2,
    n_observations: int = 3,
    max_branch: int = 2,
    reach_observable: bool = True,
    absorbing_labels: bool = True,
) -> Pomdp:
    """Small random POMDP with one reach and one avoid state.

    With ``reach_observable`` the reach states emit a dedicated observation
    (the last one) and nothing else does, so certainty about reaching the goal
    coincides with actually being there.
    """
    if n_states < 3:
        raise ValueError("need at least 3 states")
    nz = n_observations
    reach = {n_states - 1}
    avoid = {n_states - 2}
    ordinary_obs = nz - 1 if reach_observable else nz
    if ordinary_obs < 1:
        raise ValueError("too few observations")
    trans, obs, available = {}, {}, {}
    for s in range(n_states):
        if absorbing_labels and (s in reach or s in avoid):
            available[s] = set(range(n_actions))
            for a in range(n_actions):
                trans[(s, a)] = {s: 1.0}
        else:
            k = int(rng.integers(1, n_actions + 1))
            acts = sorted(rng.choice(n_actions, size=k, replace=False).tolist())
            available[s] = set(acts)
            for a in acts:
                b = int(rng.integers(1, max_branch + 1))
                tgt = rng.choice(n_states, size=b, replace=False)
                w = rng.uniform(0.1, 1.0, size=b)
                trans[(s, a)] = {int(t): float(p) for t, p in zip(tgt, w / w.sum())}
        if reach_observable and s in reach:
            obs[s] = {nz - 1: 1.0}
        else:
            b = int(rng.integers(1, min(2, ordinary_obs) + 1))
            zs = rng.choice(ordinary_obs, size=b, replace=False)
            w = rng.uniform(0.1, 1.0, size=b)
            obs[s] = {int(z): float(p) for z, p in zip(zs, w / w.sum())}
    candidates = [s for s in range(n_states) if s not in reach and s not in avoid]
    k = int(rng.integers(1, min(3, len(candidates)) + 1))
    init = rng.choice(candidates, size=k, replace=False)
    initial = {int(s): 1.0 / k for s in init}
    # fix rounding so the distribution sums to exactly 1
    first = int(init[0])
    initial[first] = 1.0 - sum(p for s, p in initial.items() if s != first)
    return build_pomdp(
        n_states,
        [f"a{i}" for i in range(n_actions)],
        [f"z{i}" for i in range(nz)],
        initial, trans, obs, {}, {"reach": reach, "avoid": avoid}, available)
