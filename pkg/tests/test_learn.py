import numpy as np
import pytest

from beliefshield.domains import generate
from beliefshield.learn import (CURVE_HEADER, Condition, ConfigInvalid, FeatureRepr, LearningCurve, TrainConfig,
                                discounted_returns, log_policy_gradient, masked_softmax, q_update, reinforce_update,
                                run_matrix, smooth_curve, train, write_bundle)
from beliefshield.synthesis import synthesize


@pytest.fixture(scope="module")
def obstacle():
    d = generate("obstacle")
    return d, synthesize(d.pomdp, d.spec)


# smoothing

def test_smooth_examples():
    assert smooth_curve([1, 2, 3, 4, 5, 6], 5) == [1, 1.5, 2, 2.5, 3, 4]
    assert smooth_curve([0.3] * 7) == pytest.approx([0.3] * 7)
    assert smooth_curve([4, 1, 7], 1) == [4, 1, 7]
    assert smooth_curve([]) == []
    with pytest.raises(ValueError):
        smooth_curve([1], 0)


# policy gradient

def test_masked_probability_is_exactly_zero():
    p = masked_softmax(np.array([5.0, -1.0, 30.0, 0.0]), [0, 1, 3])
    assert p[2] == 0.0
    assert p.sum() == pytest.approx(1.0)


def test_log_policy_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(20):
        theta = rng.normal(size=(6, 4))
        active = sorted(rng.choice(6, size=3, replace=False).tolist())
        allowed = sorted(rng.choice(4, size=int(rng.integers(2, 5)), replace=False).tolist())
        a = int(rng.choice(allowed))

        def logp(t):
            return np.log(masked_softmax(t[active].sum(0), allowed)[a])

        num = np.zeros_like(theta)
        for i in range(6):
            for j in range(4):
                e = np.zeros_like(theta)
                e[i, j] = h
                num[i, j] = (logp(theta + e) - logp(theta - e)) / (2 * h)
        ana = log_policy_gradient(theta, active, allowed, a)
        assert np.allclose(ana, num, rtol=1e-5, atol=1e-8)
        # masked-out actions get no gradient
        assert not ana[:, [k for k in range(4) if k not in allowed]].any()


def test_reinforce_zero_return_leaves_parameters():
    theta = np.random.default_rng(1).normal(size=(3, 2))
    before = theta.copy()
    reinforce_update(theta, [((0, 2), (0, 1), 1, 0.0)], 1.0, 0.5)
    assert np.array_equal(theta, before)


def test_reinforce_equals_summed_gradients():
    rng = np.random.default_rng(2)
    theta = rng.normal(size=(5, 3))
    trace = [((0, 1), (0, 1, 2), 2, 1.0), ((1, 3), (0, 2), 0, -0.5), ((4,), (1, 2), 1, 2.0)]
    g = discounted_returns([t[3] for t in trace], 0.9)
    expected = theta + 0.1 * sum(gt * log_policy_gradient(theta, t[0], t[1], t[2]) for t, gt in zip(trace, g))
    reinforce_update(theta, trace, 0.9, 0.1)
    assert np.allclose(theta, expected)


def test_discounted_returns():
    assert discounted_returns([1, 1, 1], 0.5).tolist() == [1.75, 1.5, 1.0]


# Q-learning

def test_q_single_absorbing_update():
    table = q_update({}, "x", 0, 10.0, None, (), 1.0, 1.0, terminal=True)
    assert table == {"x": {0: 10.0}}


def test_q_zero_rate_is_a_no_op():
    table = {"x": {0: 1.0}}
    q_update(table, "x", 0, 10.0, "y", (0,), 1.0, 0.0)
    assert table == {"x": {0: 1.0}}


def test_q_bootstrap_only_over_allowed():
    table = {"y": {0: 1.0, 1: 100.0}}
    q_update(table, "x", 0, 0.0, "y", (0,), 1.0, 1.0)
    assert table["x"][0] == 1.0


# support MDP of T1 seen from the true state: (support, state) -> [(prob, reward, next support or None)]
T1_SUPPORTS = {
    ((0, 1), 0): [(0.5, 0.0, (1,)), (0.5, 10.0, None)],
    ((0, 1), 1): [(0.5, 0.0, None), (0.5, 0.0, (0,))],
    ((1,), 0): [(1.0, 10.0, None)],
    ((1,), 1): [(1.0, 0.0, (0,))],
    ((0,), 0): [(1.0, 0.0, (1,))],
    ((0,), 1): [(1.0, 0.0, None)],
}


def test_q_learning_converges_to_value_iteration_on_t1():
    gamma = 0.9
    q_star = {k: 0.0 for k in T1_SUPPORTS}
    for _ in range(500):
        v = {b: max(q_star[(b, a)] for a in (0, 1)) for b, _ in T1_SUPPORTS}
        q_star = {k: sum(p * (r + (gamma * v[nb] if nb else 0.0)) for p, r, nb in outs)
                  for k, outs in T1_SUPPORTS.items()}
    assert q_star[((0, 1), 0)] == pytest.approx(9.5)
    assert q_star[((0, 1), 1)] == pytest.approx(4.05)

    rng = np.random.default_rng(0)
    table: dict = {}
    visits: dict = {}
    for _ in range(20000):
        for (b, a), outs in T1_SUPPORTS.items():
            p, r, nb = outs[int(rng.choice(len(outs), p=[o[0] for o in outs]))]
            visits[(b, a)] = visits.get((b, a), 0) + 1
            q_update(table, b, a, r, nb, (0, 1), gamma, 1.0 / visits[(b, a)], terminal=nb is None)
    for (b, a), v in q_star.items():
        assert table[b][a] == pytest.approx(v, abs=0.1)


# features

def test_feature_representations(t1):
    assert FeatureRepr("obs").active(t1, 2, (0, 1), (0,)) == (2,)
    assert FeatureRepr("support").vector(t1, 0, (0, 1), (0,)).tolist() == [1, 1, 0, 0]
    v = FeatureRepr("stacked").vector(t1, 0, (1,), (0, 1))
    assert v.tolist() == [1, 0, 0, 0, 1, 0, 0, 1, 1]
    with pytest.raises(ConfigInvalid):
        FeatureRepr("pixels")


# training

@pytest.mark.parametrize("kw", [{"agent": "ppo"}, {"episodes": -1}, {"gamma": 1.5}, {"learning_rate": -1.0},
                                {"episodes": None}, {"steps": 10}, {"eval_episodes": 0}])
def test_bad_configs(kw):
    with pytest.raises(ConfigInvalid):
        TrainConfig(**kw)


def test_zero_episodes_gives_empty_curve(obstacle):
    d, sh = obstacle
    c = train(d, sh, TrainConfig(episodes=0))
    assert c.rows == []
    assert c.to_csv() == ",".join(CURVE_HEADER) + "\n"


def test_shield_required_for_shielded_schedules(obstacle):
    d, _ = obstacle
    with pytest.raises(ConfigInvalid):
        train(d, None, TrainConfig(episodes=10))


@pytest.mark.parametrize("agent", ["reinforce", "qlearning"])
def test_training_is_deterministic_and_safe(obstacle, agent):
    d, sh = obstacle
    cfg = TrainConfig(agent=agent, episodes=300, seed=3)
    a, b = train(d, sh, cfg), train(d, sh, cfg)
    assert a.to_csv() == b.to_csv()
    assert len(a.rows) == 3
    assert a.violations_during == 0 and a.meta["viol_eval"] == 0
    assert train(d, sh, TrainConfig(agent=agent, episodes=300, seed=4)).to_csv() != a.to_csv()


def test_unshielded_training_records_violations(obstacle):
    d, _ = obstacle
    c = train(d, None, TrainConfig(episodes=200, schedule="off"))
    assert c.violations_during > 0
    assert all(r[6] == 0.0 for r in c.rows)


def test_step_budget(obstacle):
    d, sh = obstacle
    c = train(d, sh, TrainConfig(episodes=None, steps=3000, eval_interval=1000))
    assert c.meta["steps"] >= 3000 and [r[0] for r in c.rows] == [1000, 2000, 3000]


def test_curve_csv_round_trip(obstacle):
    d, sh = obstacle
    c = train(d, sh, TrainConfig(episodes=200))
    again = LearningCurve.from_csv(c.to_csv())
    assert again.to_csv() == c.to_csv()


def test_run_matrix_cardinality(obstacle, tmp_path):
    d, sh = obstacle
    conds = [Condition("always-on"), Condition("off")]
    bundle = run_matrix([d], conds, [0], {d.name: sh}, TrainConfig(episodes=100))
    assert len(bundle.curves) == 2 and len(bundle.baselines) == 2 and not bundle.failures
    assert bundle.baselines[(d.name, "always-on", 0)].violations_during == 0
    manifest = write_bundle(bundle, tmp_path / "m")
    assert len(list((tmp_path / "m").glob("*.csv"))) == 4 and manifest.exists()


def test_aggregate_of_identical_curves(obstacle):
    d, sh = obstacle
    bundle = run_matrix([d], [Condition()], [0], {d.name: sh}, TrainConfig(episodes=200))
    c = bundle.curves[(d.name, Condition(), 0)]
    bundle.curves[(d.name, Condition(), 1)] = c
    assert bundle.aggregate()[(d.name, Condition())] == pytest.approx(c.column("smooth_norm"))
