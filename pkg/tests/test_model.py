import numpy as np
import pytest

from beliefshield.model import (ModelSyntaxError, ModelValidationError, Specification, VocabularyMismatch,
                                build_pomdp, is_graph_preserving, overapproximates, parse_model,
                                perturb_probabilities, random_pomdp, serialize_model)

ONE_STATE = """pomdp
states: 1
actions: stay
observations: here
start: 0:1
T: 0 stay 0 1
O: 0 here 1
"""


def t1_variant(t1, trans=None, drop=None, extra=None):
    """Copy of T1 with some transition rows replaced."""
    rows = {(s, a): dict(t1.trans[s][a]) for s in range(4) for a in t1.available[s]}
    if drop:
        s, a, t = drop
        del rows[(s, a)][t]
        rows[(s, a)] = {k: v / sum(rows[(s, a)].values()) for k, v in rows[(s, a)].items()}
    if extra:
        s, a, t = extra
        rows[(s, a)] = {**{k: v / 2 for k, v in rows[(s, a)].items()}, t: 0.5}
    rows.update(trans or {})
    return build_pomdp(4, t1.actions, t1.observations, t1.initial, rows, t1.obs, t1.reward, t1.labels,
                       {s: t1.available[s] for s in range(4)}, t1.state_names)


def test_minimal_document():
    m = parse_model(ONE_STATE)
    assert (m.n_states, m.n_actions, m.n_observations) == (1, 1, 1)


def test_t1_document(t1):
    assert t1.n_states == 4 and t1.n_observations == 3
    assert t1.reach == {3} and t1.avoid == {2}
    assert t1.R(1, "a") == 10 and t1.R(0, "a") == 0
    assert t1.initial == {0: 0.5, 1: 0.5}


def test_row_summing_to_09_is_rejected():
    text = ONE_STATE.replace("T: 0 stay 0 1", "T: 0 stay 0 0.9")
    with pytest.raises(ModelValidationError) as e:
        parse_model(text)
    assert "transition distribution" in str(e.value)


def test_rows_within_tolerance_are_normalized():
    text = ONE_STATE.replace("T: 0 stay 0 1", "T: 0 stay 0 0.9999999999")
    m = parse_model(text)
    assert m.trans[0][0] == {0: 1.0}


@pytest.mark.parametrize("text,lineno", [
    ("states: 1\n", 1),
    ("pomdp\nT: 0 a 0 1\n", 2),
    ("pomdp\nstates: 1\nactions: a\nobservations: z\nstart: 0:1\nT: 0 a 7 1\n", 6),
    ("pomdp\nstates: 1\nactions: a\nobservations: z\nstart: 0:1\nT: 0 a 0 x\n", 6),
])
def test_syntax_errors_carry_line_numbers(text, lineno):
    with pytest.raises(ModelSyntaxError) as e:
        parse_model(text)
    assert e.value.lineno == lineno


def test_overlapping_labels_rejected():
    with pytest.raises(ModelValidationError):
        parse_model(ONE_STATE + "label reach: 0\nlabel avoid: 0\n")


def test_round_trip_t1(t1):
    m = parse_model(serialize_model(t1))
    assert serialize_model(m) == serialize_model(t1)
    assert m.graph_fingerprint() == t1.graph_fingerprint()


def test_graph_preserving_examples(t1, t2):
    assert is_graph_preserving(t1, t1)
    t2p = build_pomdp(4, t2.actions, t2.observations, t2.initial,
                      {**{(s, a): t2.trans[s][a] for s in range(4) for a in range(2)}, (0, 0): {1: 0.7, 2: 0.3}},
                      t2.obs, t2.reward, t2.labels)
    assert is_graph_preserving(t2, t2p)
    assert not is_graph_preserving(t1, t1_variant(t1, trans={(0, 1): {0: 1.0}}))


def test_overapproximation_examples(t1):
    bigger = t1_variant(t1, extra=(1, 0, 2))
    assert overapproximates(bigger, t1)
    assert overapproximates(t1, t1)
    smaller = t1_variant(t1, trans={(0, 1): {0: 1.0}})  # 0 -b-> 2 deleted
    assert not overapproximates(smaller, t1)


def test_vocabulary_mismatch(t1):
    with pytest.raises(VocabularyMismatch):
        is_graph_preserving(t1, parse_model(ONE_STATE))


def test_perturbation_keeps_graph(t2):
    rng = np.random.default_rng(3)
    m = perturb_probabilities(t2, rng)
    assert is_graph_preserving(t2, m)
    assert m.trans[0][0] != t2.trans[0][0]


def test_specification_rules(t1):
    assert Specification.from_model(t1).reach == {3}
    assert Specification.from_model(t1, "avoid").reach == frozenset()
    with pytest.raises(ValueError):
        Specification("reach-avoid", {2}, {2})


def test_random_pomdp_reach_is_observable():
    m = random_pomdp(np.random.default_rng(0), n_states=7, n_observations=4)
    z_goal = m.n_observations - 1
    for s in range(m.n_states):
        assert (z_goal in m.obs[s]) == (s in m.reach)
