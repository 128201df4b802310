"""Winning regions of the belief-support MDP and maximally permissive shields.

The support MDP is explored forward from every initial support.  Winning
regions are greatest fixpoints over (node, action) pairs:

* avoid: repeatedly drop actions that may lead out of the region and nodes
  left without actions;
* reach-avoid: additionally drop nodes containing a state from which no
  target can be reached through allowed edges, until nothing changes.  This
  check runs on (state, support) pairs.

A support is *bad* if it contains an AVOID state and a *target* if all of
its states are REACH states.
"""

from __future__ import annotations

import json
import time
import warnings
from collections import deque
from itertools import combinations
from dataclasses import dataclass, field
from typing import Collection, Mapping

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .estimator import (Support, as_support, initial_supports, offered_actions, successors_by_observation,
                        update_support)
from .model import Pomdp, Specification

DEFAULT_MAX_NODES = 2 ** 22
SHIELD_FORMAT = "belief-support-shield/1"


class SizeLimitExceeded(Exception):
    pass


class PolicyIncomplete(Exception):
    pass


class InitialNotWinning(UserWarning):
    pass


@dataclass
class SupportMdp:
    model: Pomdp
    spec: Specification
    nodes: list[Support]
    index: dict[Support, int]
    offered: list[frozenset[int]]
    # edges[i][a] maps observation -> successor node id; empty for bad/target nodes
    edges: list[dict[int, dict[int, int]]]
    bad: list[bool]
    target: list[bool]
    initial: dict[int, int]

    def __len__(self):
        return len(self.nodes)

    def successors(self, i: int, a: int) -> set[int]:
        return set(self.edges[i][a].values())


def build_support_mdp(m: Pomdp, spec: Specification, max_nodes: int = DEFAULT_MAX_NODES) -> SupportMdp:
    """Forward closure of the belief-support MDP from all initial supports."""
    avoid, reach = spec.avoid, spec.reach
    use_targets = spec.kind == "reach-avoid"
    nodes: list[Support] = []
    index: dict[Support, int] = {}
    offered: list[frozenset[int]] = []
    bad: list[bool] = []
    target: list[bool] = []
    queue: deque[int] = deque()

    def intern(b: Support) -> int:
        i = index.get(b)
        if i is None:
            i = len(nodes)
            if i >= max_nodes:
                raise SizeLimitExceeded(f"support MDP exceeds {max_nodes} nodes")
            index[b] = i
            nodes.append(b)
            offered.append(offered_actions(m, b))
            bad.append(any(s in avoid for s in b))
            target.append(use_targets and all(s in reach for s in b))
            queue.append(i)
        return i

    # per (state, action): observation -> successor states; shared by every support
    fan: dict[tuple[int, int], dict[int, set[int]]] = {}

    def split(b: Support, a: int) -> dict[int, Support]:
        groups: dict[int, set[int]] = {}
        for s in b:
            f = fan.get((s, a))
            if f is None:
                f = fan[(s, a)] = {z: set(ts) for z, ts in successors_by_observation(m, (s,), a).items()}
            for z, ts in f.items():
                g = groups.get(z)
                if g is None:
                    groups[z] = set(ts)
                else:
                    g |= ts
        return {z: tuple(sorted(g)) for z, g in sorted(groups.items())}

    initial = {z: intern(b) for z, b in initial_supports(m).items()}
    edges: list[dict[int, dict[int, int]]] = []
    while queue:
        i = queue.popleft()
        while len(edges) <= i:
            edges.append({})
        if bad[i] or target[i]:
            continue
        b = nodes[i]
        out = edges[i]
        for a in sorted(offered[i]):
            out[a] = {z: intern(nb) for z, nb in split(b, a).items()}
    while len(edges) < len(nodes):
        edges.append({})
    return SupportMdp(m, spec, nodes, index, offered, edges, bad, target, initial)


@dataclass
class WinningRegion:
    winning: set[Support]
    allowed: dict[Support, frozenset[int]]
    rounds: int = 0
    # size of the candidate region after each round, for monotonicity checks
    history: list[int] = field(default_factory=list)


def _predecessors(g: SupportMdp) -> list[list[tuple[int, int]]]:
    pred: list[list[tuple[int, int]]] = [[] for _ in g.nodes]
    for i, per_a in enumerate(g.edges):
        for a, succ in per_a.items():
            for j in set(succ.values()):
                pred[j].append((i, a))
    return pred


def _pair_predecessors(g: SupportMdp):
    """Predecessors in the product of states and supports.

    Pair ``(s, B)`` with ``s in B`` gets id ``base[i] + k`` where ``B`` is
    node ``i`` and ``s = B[k]``.  Returns ``(base, owner, pred)`` with
    ``pred[q'] = [(q, a), ...]``.
    """
    m = g.model
    base, owner = [], []
    for i, b in enumerate(g.nodes):
        base.append(len(owner))
        owner.extend([i] * len(b))
    pos = [{s: k for k, s in enumerate(b)} for b in g.nodes]
    pred: list[list[tuple[int, int]]] = [[] for _ in owner]
    fan = {}
    for i, per_a in enumerate(g.edges):
        b = g.nodes[i]
        for a, by_z in per_a.items():
            for k, s in enumerate(b):
                q = base[i] + k
                f = fan.get((s, a))
                if f is None:
                    f = fan[(s, a)] = [(z, t) for t in m.succ[s][a] for z in m.emits[t]]
                for z, t in f:
                    j = by_z[z]
                    pred[base[j] + pos[j][t]].append((q, a))
    return base, owner, pred


def _fixpoint(g: SupportMdp, with_reachability: bool) -> WinningRegion:
    n = len(g.nodes)
    target = g.target if with_reachability else [False] * n
    in_u = [not b for b in g.bad]
    allowed = [set(g.offered[i]) if target[i] else set(g.edges[i]) for i in range(n)]
    pred = _predecessors(g)
    if with_reachability:
        base, owner, ppred = _pair_predecessors(g)

    removed = deque(i for i in range(n) if not in_u[i])
    for i in range(n):
        if in_u[i] and not target[i] and not allowed[i]:
            in_u[i] = False
            removed.append(i)

    def prune():
        # steps (1) and (2): drop actions with a successor outside U, then dead nodes
        while removed:
            j = removed.popleft()
            for i, a in pred[j]:
                if in_u[i] and not target[i] and a in allowed[i]:
                    allowed[i].discard(a)
                    if not allowed[i]:
                        in_u[i] = False
                        removed.append(i)

    history = []
    rounds = 0
    while True:
        rounds += 1
        prune()
        if with_reachability:
            # step (3): every state of a surviving support must reach a target
            # through allowed edges.  The search runs on (state, support) pairs;
            # on supports alone a trapped member state would go unnoticed.
            ok = [False] * len(owner)
            frontier = deque(q for q in range(len(owner)) if in_u[owner[q]] and target[owner[q]])
            for q in frontier:
                ok[q] = True
            while frontier:
                q2 = frontier.popleft()
                for q, a in ppred[q2]:
                    i = owner[q]
                    if not ok[q] and in_u[i] and a in allowed[i]:
                        ok[q] = True
                        frontier.append(q)
            for i in range(n):
                if in_u[i] and not all(ok[base[i]:base[i] + len(g.nodes[i])]):
                    in_u[i] = False
                    removed.append(i)
        history.append(sum(in_u))
        if not removed:
            break

    winning = {g.nodes[i] for i in range(n) if in_u[i]}
    table = {g.nodes[i]: frozenset(allowed[i]) for i in range(n) if in_u[i]}
    return WinningRegion(winning, table, rounds, history)


def compute_winning_reach_avoid(g: SupportMdp) -> WinningRegion:
    """Almost-sure reach-avoid region; targets are absorbing winners."""
    return _fixpoint(g, with_reachability=True)


def compute_winning_avoid(g: SupportMdp) -> WinningRegion:
    """Safety region: greatest fixpoint of action pruning, no reachability step."""
    return _fixpoint(g, with_reachability=False)


@dataclass(eq=False)
class Shield:
    """Permissive policy over winning supports: ``table[B]`` is the allowed action set."""

    spec: Specification
    table: dict[Support, frozenset[int]]
    fingerprint: str
    action_names: tuple[str, ...]
    uncovered_initial: list[Support] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def __eq__(self, other):
        if not isinstance(other, Shield):
            return NotImplemented
        return (self.spec == other.spec and self.table == other.table
                and self.action_names == other.action_names)

    def __contains__(self, b) -> bool:
        return tuple(b) in self.table

    def __len__(self):
        return len(self.table)

    def allowed(self, b: Support) -> frozenset[int]:
        return self.table[tuple(b)]

    def allowed_names(self, b: Support) -> list[str]:
        return [self.action_names[a] for a in sorted(self.table[tuple(b)])]

    def to_dict(self) -> dict:
        return {
            "format": SHIELD_FORMAT,
            "spec": self.spec.to_dict(),
            "fingerprint": self.fingerprint,
            "actions": list(self.action_names),
            "metadata": self.metadata,
            "uncovered_initial": [list(b) for b in sorted(self.uncovered_initial)],
            "table": [
                {"support": list(b), "allowed": [self.action_names[a] for a in sorted(self.table[b])]}
                for b in sorted(self.table)
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "Shield":
        if d.get("format") != SHIELD_FORMAT:
            raise ValueError(f"not a shield document (format={d.get('format')!r})")
        names = tuple(d["actions"])
        ix = {a: i for i, a in enumerate(names)}
        sp = d["spec"]
        spec = Specification(sp["kind"], frozenset(sp["reach"]), frozenset(sp["avoid"]))
        table = {tuple(e["support"]): frozenset(ix[a] for a in e["allowed"]) for e in d["table"]}
        return cls(spec, table, d["fingerprint"], names,
                   [tuple(b) for b in d.get("uncovered_initial", [])], dict(d.get("metadata", {})))

    @classmethod
    def loads(cls, text: str) -> "Shield":
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Shield":
        with open(path, encoding="utf-8") as f:
            return cls.loads(f.read())


def extract_shield(w: WinningRegion, spec: Specification, m: Pomdp, g: SupportMdp | None = None) -> Shield:
    initial = list(initial_supports(m).values())
    uncovered = sorted(b for b in initial if b not in w.winning)
    meta = {"winning": len(w.winning), "rounds": w.rounds}
    if g is not None:
        meta["nodes"] = len(g.nodes)
    sh = Shield(spec, dict(w.allowed), m.graph_fingerprint(), m.actions, uncovered, meta)
    if uncovered:
        warnings.warn(InitialNotWinning(f"{len(uncovered)} initial support(s) outside the winning region: "
                                        f"{uncovered[:5]}"), stacklevel=2)
    return sh


def synthesize(m: Pomdp, spec: Specification | None = None, max_nodes: int = DEFAULT_MAX_NODES) -> Shield:
    """Build the support MDP, solve it and extract the shield in one call."""
    spec = spec or Specification.from_model(m)
    t0 = time.perf_counter()
    g = build_support_mdp(m, spec, max_nodes)
    w = compute_winning_reach_avoid(g) if spec.kind == "reach-avoid" else compute_winning_avoid(g)
    sh = extract_shield(w, spec, m, g)
    sh.elapsed = time.perf_counter() - t0
    return sh


# ---------------------------------------------------------------------------
# independent checks

def _as_actions(m: Pomdp, choice) -> tuple[int, ...]:
    if isinstance(choice, (str, int, np.integer)):
        return (m.action_index(choice),)
    return tuple(sorted(m.action_index(a) for a in choice))


def verify_winning_policy(m: Pomdp, policy: Mapping[Support, object], spec: Specification,
                          start: Collection[int] | None = None) -> bool:
    """Check a support-based policy on the product chain of (state, support).

    ``policy`` maps supports to an action, or to a set of actions that are
    all taken with positive probability (e.g. uniform over a shield's
    allowed set).  REACH states are absorbing for the check.  The policy is
    winning iff no AVOID state is reachable and, for reach-avoid, every
    bottom strongly connected component contains a REACH state.
    """
    reach_avoid = spec.kind == "reach-avoid"
    if start is None:
        roots = [(s, b) for b in initial_supports(m).values() for s in b]
    else:
        b0 = as_support(start)
        roots = [(s, b0) for s in b0]
    ids: dict[tuple[int, Support], int] = {}
    rows: list[int] = []
    cols: list[int] = []
    is_reach: list[bool] = []
    stack = []
    for r in roots:
        if r not in ids:
            ids[r] = len(ids)
            is_reach.append(r[0] in spec.reach)
            stack.append(r)
    acts_cache: dict[Support, tuple[int, ...]] = {}
    upd: dict[tuple[Support, int, int], Support] = {}
    while stack:
        s, b = stack.pop()
        if s in spec.avoid:
            return False
        if reach_avoid and s in spec.reach:
            continue
        acts = acts_cache.get(b)
        if acts is None:
            if b not in policy:
                raise PolicyIncomplete(f"policy undefined on reachable support {b}")
            acts = acts_cache[b] = _as_actions(m, policy[b])
            if not acts:
                raise PolicyIncomplete(f"policy allows no action on support {b}")
        src = ids[(s, b)]
        for a in acts:
            if a not in m.available[s]:
                raise PolicyIncomplete(f"action {m.actions[a]!r} unavailable in state {s} of support {b}")
            for t in m.succ[s][a]:
                for z in m.emits[t]:
                    key = (b, a, z)
                    nb = upd.get(key)
                    if nb is None:
                        nb = upd[key] = update_support(m, b, a, z)
                    node = (t, nb)
                    j = ids.get(node)
                    if j is None:
                        j = ids[node] = len(ids)
                        is_reach.append(t in spec.reach)
                        stack.append(node)
                    rows.append(src)
                    cols.append(j)
    if not reach_avoid:
        return True
    n = len(ids)
    adj = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    ncomp, label = connected_components(adj, directed=True, connection="strong")
    # a component is bottom iff no edge leaves it
    leaves = np.zeros(ncomp, dtype=bool)
    if rows:
        r, c = np.asarray(rows), np.asarray(cols)
        leaves[label[r][label[r] != label[c]]] = True
    has_reach = np.zeros(ncomp, dtype=bool)
    has_reach[label[np.asarray(is_reach, dtype=bool)]] = True
    return bool(np.all(has_reach[~leaves]))


def brute_force_winning_supports(m: Pomdp, spec: Specification, candidates: Collection[Support],
                                 permissive: bool = True) -> set[Support]:
    """Winning supports by exhaustive search over support-based tables.

    For each candidate support the search assigns a nonempty action set
    (a single action with ``permissive=False``) on demand to the supports
    reachable under the partial table, pruning as soon as a support
    containing an AVOID state shows up, and hands complete tables to
    :func:`verify_winning_policy`.  Exponential; meant for models with a
    handful of states.
    """
    reach_avoid = spec.kind == "reach-avoid"
    known: set[Support] = set()
    upd: dict[tuple[Support, int], list[Support]] = {}

    def succ(b, a):
        key = (b, a)
        if key not in upd:
            upd[key] = list(successors_by_observation(m, b, a).values())
        return upd[key]

    def closure(b0, assign):
        seen = {b0}
        order = [b0]
        k = 0
        pending = None
        while k < len(order):
            b = order[k]
            k += 1
            if any(s in spec.avoid for s in b):
                return False, None, None
            if reach_avoid and all(s in spec.reach for s in b):
                continue
            if b not in assign:
                if pending is None:
                    pending = b
                continue
            for a in assign[b]:
                for nb in succ(b, a):
                    if nb not in seen:
                        seen.add(nb)
                        order.append(nb)
        return True, pending, order

    def search(b0, assign):
        ok, pending, reached = closure(b0, assign)
        if not ok:
            return None
        if pending is None:
            if verify_winning_policy(m, assign, spec, start=b0):
                return reached
            return None
        acts = sorted(offered_actions(m, pending))
        choices = [c for k in range(len(acts), 0, -1) for c in combinations(acts, k)] if permissive \
            else [(a,) for a in acts]
        for c in choices:
            assign[pending] = c
            found = search(b0, assign)
            if found is not None:
                return found
            del assign[pending]
        return None

    for b0 in sorted(candidates):
        if b0 in known:
            continue
        reached = search(b0, {})
        if reached is not None:
            # every support visited by a winning memoryless policy is itself winning
            known.update(reached)
    return {b for b in candidates if b in known}
