"""Command-line entry point: ``beliefshield {synth,simulate,train,matrix,inspect}``.

Exit codes: 0 success, 1 runtime or model error, 2 usage or parse error.
Output files default to ``$BELIEFSHIELD_OUT`` (or the working directory).
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from pathlib import Path

from .domains import DOMAINS, REFERENCE_STATE_COUNTS, DomainConfig, generate, goal_diameter
from .estimator import SupportTable, initial_supports
from .learn import Condition, TrainConfig, run_matrix, train, write_bundle
from .model import ModelSyntaxError, Specification, load_model, serialize_model
from .runtime import ShieldSchedule, UniformStream, rollout
from .synthesis import InitialNotWinning, Shield, synthesize

OUT_ENV = "BELIEFSHIELD_OUT"


class UsageError(Exception):
    pass


class ShieldMismatch(Exception):
    pass


def _out_path(arg: str | None, default_name: str) -> Path:
    if arg:
        return Path(arg)
    return Path(os.environ.get(OUT_ENV, ".")) / default_name


def _add_source(p: argparse.ArgumentParser, required: bool = True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--model", help="model file in the text format")
    g.add_argument("--domain", choices=DOMAINS, help="generate a benchmark domain")
    p.add_argument("--n", type=int, help="grid size")
    p.add_argument("--radius", type=int)
    p.add_argument("--energy", type=int)
    p.add_argument("--cap", type=int, help="episode cap")
    p.add_argument("--reward", choices=("sparse", "dense-shaped"), default="sparse")


def _load_source(args):
    """(pomdp, domain-or-None) from --model or --domain."""
    if args.model:
        path = Path(args.model)
        if not path.is_file():
            raise UsageError(f"no such model file: {path}")
        return load_model(path), None
    d = generate(DomainConfig(args.domain, grid_size=args.n, radius=args.radius, energy=args.energy,
                              episode_cap=args.cap, reward_variant=args.reward))
    return d.pomdp, d


def _spec(m, kind: str) -> Specification:
    if kind == "avoid" and not m.avoid:
        raise UsageError("model has no 'avoid' label")
    if kind == "reach-avoid" and not (m.reach and m.avoid):
        raise UsageError("model needs both 'reach' and 'avoid' labels")
    return Specification.from_model(m, kind)


def _shield_for(m, spec, path: str | None, max_nodes: int | None = None) -> Shield:
    if path:
        if not Path(path).is_file():
            raise UsageError(f"no such shield file: {path}")
        sh = Shield.load(path)
        if sh.fingerprint != m.graph_fingerprint():
            raise ShieldMismatch(f"shield {path} was synthesized for a different model graph")
        return sh
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InitialNotWinning)
        return synthesize(m, spec, **({"max_nodes": max_nodes} if max_nodes else {}))


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    m, _ = _load_source(args)
    spec = _spec(m, args.spec)
    sh = _shield_for(m, spec, None, args.max_nodes)
    if not any(b in sh.table for b in initial_supports(m).values()):
        print(f"error: no initial support is winning ({len(sh.uncovered_initial)} uncovered)", file=sys.stderr)
        return 1
    out = _out_path(args.out, "shield.json")
    sh.save(out)
    print(f"nodes: {sh.metadata.get('nodes')}")
    print(f"winning: {len(sh.table)}")
    print(f"uncovered initial: {len(sh.uncovered_initial)}")
    print(f"shield: {out}")
    # timing goes to stderr so stdout stays reproducible
    print(f"time: {sh.elapsed:.3f}s", file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    m, d = _load_source(args)
    spec = _spec(m, args.spec)
    sh = None if args.policy == "random" else _shield_for(m, spec, args.shield)
    cap = args.cap or (d.episode_cap if d else 100)
    u = UniformStream(args.seed)
    table = SupportTable(m)
    names = m.state_names
    reached = 0
    for ep in range(args.episodes):
        tr = rollout(m, lambda b, allowed: u.choice(allowed), u, cap, shield=sh, table=table)
        if not args.quiet:
            print(f"# episode {ep}")
            for t, st in enumerate(tr.steps):
                act = m.actions[st.action] if st.action is not None else "-"
                print(f"{t}\t{names[st.state]}\t{{{','.join(names[s] for s in st.support)}}}\t"
                      f"{m.observations[st.observation]}\t[{','.join(m.actions[a] for a in st.allowed)}]\t{act}")
        final = tr.steps[-1].state
        reached += any(s in m.reach for s in tr.states)
        print(f"final state: {names[final]} return: {tr.total_reward:g}"
              f"{' (left winning region)' if tr.left_region else ''}")
    print(f"reached: {reached}/{args.episodes}")
    return 0


def cmd_train(args) -> int:
    _, d = _load_source(args)
    if d is None:
        raise UsageError("train needs --domain")
    cfg = TrainConfig(agent=args.agent, episodes=args.episodes, schedule=ShieldSchedule.parse(args.shield),
                      repr=args.repr, seed=args.seed, learning_rate=args.lr, episode_cap=args.cap)
    sh = _shield_for(d.pomdp, d.spec, args.shield_file) if cfg.schedule.uses_shield else None
    curve = train(d, sh, cfg)
    out = _out_path(args.out, f"curve_{d.name}_{args.agent}_s{args.seed}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(curve.to_csv())
    final = f"{curve.final_smoothed:.4f}" if curve.rows else "n/a"
    print(f"curve: {out}")
    print(f"final smoothed return: {final} violations during: {curve.violations_during} "
          f"after: {curve.violations_after}")
    return 0


def cmd_matrix(args) -> int:
    domains = [generate(DomainConfig(n, episode_cap=args.cap)) for n in args.domains]
    conditions = [Condition(s, r) for s in args.schedules for r in args.reprs]
    for c in conditions:
        ShieldSchedule.parse(c.schedule)
    seeds = list(range(args.seeds))
    shields = {}
    if seeds:
        for d in domains:
            shields[d.name] = _shield_for(d.pomdp, d.spec, None)
    base = TrainConfig(agent=args.agent, episodes=args.episodes, learning_rate=args.lr)
    bundle = run_matrix(domains, conditions, seeds, shields, base, workers=args.workers)
    manifest = write_bundle(bundle, _out_path(args.out, "matrix"))
    print(f"curves: {len(bundle.curves)} baselines: {len(bundle.baselines)} failures: {len(bundle.failures)}")
    print(f"manifest: {manifest}")
    for (dom, cond), vals in sorted(bundle.aggregate().items(), key=lambda kv: (kv[0][0], kv[0][1].label())):
        print(f"{dom}\t{cond.label()}\tfinal smoothed mean: {vals[-1] if vals else float('nan'):.4f}")
    for key, err in bundle.failures:
        print(f"failed {key}: {err}", file=sys.stderr)
    return 1 if bundle.failures else 0


def cmd_inspect(args) -> int:
    m, d = _load_source(args)
    print(f"states: {m.n_states}")
    print(f"actions: {m.n_actions}")
    print(f"observations: {m.n_observations}")
    print(f"transitions: {sum(len(m.succ[s][a]) for s in range(m.n_states) for a in m.available[s])}")
    for name in sorted(m.labels):
        print(f"label {name}: {len(m.labels[name])}")
    if d is not None:
        print(f"episode cap: {d.episode_cap}")
        print(f"goal diameter: {goal_diameter(m)}")
        print(f"reference states: {REFERENCE_STATE_COUNTS[d.name]}")
    if args.shield:
        if not Path(args.shield).is_file():
            raise UsageError(f"no such shield file: {args.shield}")
        sh = Shield.load(args.shield)
        same = sh.fingerprint == m.graph_fingerprint()
        print(f"shield supports: {len(sh.table)}")
        print(f"shield matches model: {'yes' if same else 'no'}")
    if args.emit_model:
        text = serialize_model(m)
        if args.emit_model == "-":
            sys.stdout.write(text)
        else:
            Path(args.emit_model).write_text(text)
            print(f"model: {args.emit_model}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beliefshield", description="Belief-support shields for POMDPs.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesize a shield")
    _add_source(s)
    s.add_argument("--spec", choices=("reach-avoid", "avoid"), default="reach-avoid")
    s.add_argument("--out")
    s.add_argument("--max-nodes", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("simulate", help="roll out a (shielded) random policy and print traces")
    _add_source(s)
    s.add_argument("--spec", choices=("reach-avoid", "avoid"), default="reach-avoid")
    s.add_argument("--policy", choices=("shielded-random", "random"), default="shielded-random")
    s.add_argument("--shield", help="shield file (synthesized on the fly if omitted)")
    s.add_argument("--episodes", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--quiet", action="store_true", help="only print the final state of each episode")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train", help="train one agent and write its learning curve")
    _add_source(s)
    s.add_argument("--agent", choices=("reinforce", "qlearning", "random"), default="reinforce")
    s.add_argument("--shield", default="always-on", help="always-on|off|sudden:K|smooth:K[:ALPHA]|prob:P")
    s.add_argument("--shield-file")
    s.add_argument("--repr", choices=("obs", "support", "stacked"), default="support")
    s.add_argument("--episodes", type=int, default=5000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lr", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("matrix", help="run an experiment matrix")
    s.add_argument("--domains", nargs="+", choices=DOMAINS, default=["obstacle"])
    s.add_argument("--schedules", nargs="+", default=["always-on", "off"])
    s.add_argument("--reprs", nargs="+", choices=("obs", "support", "stacked"), default=["support"])
    s.add_argument("--seeds", type=int, default=1, help="number of seeds (0, 1, ...)")
    s.add_argument("--agent", choices=("reinforce", "qlearning"), default="reinforce")
    s.add_argument("--episodes", type=int, default=5000)
    s.add_argument("--cap", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_matrix)

    s = sub.add_parser("inspect", help="print model (and shield) statistics")
    _add_source(s)
    s.add_argument("--shield")
    s.add_argument("--emit-model", metavar="PATH", help="write the model in the text format ('-' for stdout)")
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ModelSyntaxError, ValueError) as e:
        # bad flags, unparsable model/shield files, out-of-range parameters
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1

if __name__ == "__main__":
    sys.exit(main())
