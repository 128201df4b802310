import warnings

import pytest

from beliefshield.estimator import SupportTable
from beliefshield.model import parse_model
from beliefshield.runtime import (EmptyMask, ShieldedRandomPolicy, ShieldSchedule, SupportNotWinning, UniformStream,
                                  ViolationLedger, mask_actions, reaches, rollout, shield_probability, violates)
from beliefshield.synthesis import InitialNotWinning, Shield, synthesize


@pytest.mark.parametrize("sched,episode,p", [
    (ShieldSchedule("always-on"), 0, 1.0),
    (ShieldSchedule("always-on"), 10 ** 6, 1.0),
    (ShieldSchedule("sudden-off", k0=1000), 999, 1.0),
    (ShieldSchedule("sudden-off", k0=1000), 1000, 0.0),
    (ShieldSchedule("smooth-off", k0=1000, alpha=0.001), 1500, 0.5),
    (ShieldSchedule("smooth-off", k0=1000, alpha=0.001), 999, 1.0),
    (ShieldSchedule("smooth-off", k0=1000, alpha=0.001), 5000, 0.0),
    (ShieldSchedule("fixed-probability", p=0.3), 7, 0.3),
    (ShieldSchedule("off", p=0.0), 0, 0.0),
])
def test_shield_probability(sched, episode, p):
    assert shield_probability(sched, episode) == pytest.approx(p, abs=1e-12)


@pytest.mark.parametrize("kw", [{"p": 1.5}, {"p": -0.1}, {"alpha": 0.0}, {"k0": -1}, {"kind": "sometimes"}])
def test_schedule_invariants(kw):
    with pytest.raises(ValueError):
        ShieldSchedule(**kw)


def test_negative_episode():
    with pytest.raises(ValueError):
        shield_probability(ShieldSchedule(), -1)


@pytest.mark.parametrize("text", ["always-on", "off", "sudden:1000", "smooth:1000:0.001", "prob:0.25"])
def test_schedule_text_round_trip(text):
    assert str(ShieldSchedule.parse(text)) == text


@pytest.mark.parametrize("text", ["sudden", "smooth:x", "prob:2", "later"])
def test_schedule_parse_errors(text):
    with pytest.raises(ValueError):
        ShieldSchedule.parse(text)


def test_mask_examples(t1_shield):
    assert mask_actions(t1_shield, (0, 1), {0, 1}, True) == {0}
    assert mask_actions(t1_shield, (0, 1), {0, 1}, False) == {0, 1}
    with pytest.raises(SupportNotWinning):
        mask_actions(t1_shield, (2,), {0, 1}, True)


def test_empty_mask_is_an_error(t1_shield):
    with pytest.raises(EmptyMask):
        mask_actions(t1_shield, (0, 1), {1}, True)


def test_shielded_random_on_t1(t1, t1_shield):
    pol = ShieldedRandomPolicy(t1_shield, 0)
    u = UniformStream(1)
    table = SupportTable(t1)
    for _ in range(500):
        tr = rollout(t1, lambda b, allowed: pol(b, allowed), u, 50, shield=t1_shield, table=table)
        assert tr.steps[-1].state == 3
        assert 2 not in tr.states


def test_unshielded_random_on_t1_hits_the_trap(t1):
    u = UniformStream(0)
    runs = [rollout(t1, lambda b, allowed: u.choice(allowed), u, 50) for _ in range(200)]
    assert any(violates(t1, tr) for tr in runs)


def test_all_target_model_stops_at_once():
    m = parse_model("pomdp\nstates: 2\nactions: a\nobservations: z y\nstart: 0:1\nT: 0 a 0 1\nT: 1 a 1 1\n"
                    "O: 0 z 1\nO: 1 y 1\nlabel reach: 0\nlabel avoid: 1\n")
    sh = synthesize(m)
    tr = rollout(m, ShieldedRandomPolicy(sh, 0), UniformStream(0), 100, shield=sh)
    assert len(tr.steps) == 1 and tr.steps[0].action is None
    assert reaches(m, tr)


def test_same_seed_same_actions(t1, t1_shield):
    def actions(seed):
        u = UniformStream(seed)
        # rollout already masks; the policy only picks uniformly among what it is given
        pol = ShieldedRandomPolicy(None, seed)
        out = []
        for _ in range(20):
            tr = rollout(t1, pol, u, 30, shield=t1_shield, p_shield=0.5)
            out.append([st.action for st in tr.steps])
        return out

    assert actions(4) == actions(4)
    assert actions(4) != actions(5)


def test_leaving_the_region_is_flagged(t2):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", InitialNotWinning)
        sh = synthesize(t2)
    u = UniformStream(0)
    tr = rollout(t2, lambda b, allowed: allowed[0], u, 10, shield=sh)
    # {0,1} is not in the table, so the shield abstains from the first step
    assert tr.left_region


def test_ledger_examples(t1):
    led = ViolationLedger(t1.avoid)
    assert led.record_episode([0, 2, 2, 2]) is True
    assert led.during == 1
    assert led.record_episode([0, 1, 3], "after") is False
    assert led.record_episode([], "after") is False
    assert led.record_episode([2], "after") is True
    assert (led.during, led.after, led.total) == (1, 1, 2)
    with pytest.raises(ValueError):
        led.record_episode([0], "later")


def test_ledger_csv(t1):
    led = ViolationLedger(t1.avoid)
    led.record_episode([0, 1, 3], p_shield=0.5)
    led.record_episode([1, 0, 2], "after", p_shield=0.0)
    assert led.to_csv() == "episode,violated,phase,p_shield\n0,0,during,0.5\n1,1,after,0\n"


def test_loaded_shield_keeps_allowed_sets(t1_shield):
    again = Shield.loads(t1_shield.dumps())
    assert again.allowed((0, 1)) == frozenset({0})
