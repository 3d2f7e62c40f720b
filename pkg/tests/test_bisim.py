import random

import pytest

from psfkit.bisim import (
    minimize, replay, rooted_weak_bisim, strong_bisim, tau_saturate,
    weak_bisim, BisimInputError,
)
from psfkit.semantics import Config, Lts
from psfkit.terms import Act, PEnd, Tau


def mk(transitions, n, terminating=(), truncated=False):
    """Tiny LTS literal: transitions as (from, label, to) with string labels."""
    states = [Config(PEnd()) for _ in range(n)]
    labeled = [(f, Tau if l == "tau" else Act(l), t) for f, l, t in transitions]
    return Lts(states, labeled, 0, set(terminating), truncated)


def test_a_plus_a_equals_a():
    two = mk([(0, "a", 1), (0, "a", 2)], 3, {1, 2})
    one = mk([(0, "a", 1)], 2, {1})
    assert strong_bisim(two, one).equivalent


def test_distributivity_fails_with_witness():
    # a.(b+c) vs a.b + a.c
    left = mk([(0, "a", 1), (1, "b", 2), (1, "c", 3)], 4, {2, 3})
    right = mk([(0, "a", 1), (0, "a", 2), (1, "b", 3), (2, "c", 4)], 5, {3, 4})
    r = strong_bisim(left, right)
    assert not r.equivalent
    assert r.witness is not None
    path = r.witness.principal_path()
    assert path[0].endswith(": a")
    assert replay(left, right, r.witness, "strong")


def test_strong_bisim_is_symmetric():
    a = mk([(0, "a", 1), (1, "b", 0)], 2)
    b = mk([(0, "a", 1), (1, "b", 2), (2, "a", 3), (3, "b", 0)], 4)
    assert strong_bisim(a, b).equivalent == strong_bisim(b, a).equivalent


def test_truncated_input_rejected():
    a = mk([(0, "a", 1)], 2, truncated=True)
    with pytest.raises(BisimInputError):
        strong_bisim(a, a)


def test_saturation_closes_tau_before_action():
    a = mk([(0, "tau", 1), (1, "a", 2)], 3, {2})
    sat = tau_saturate(a)
    assert any(f == 0 and str(l) == "a" for f, l, t in sat.transitions)
    # reflexive tau closure present
    assert all(any(f == s and str(l) == "tau" and t == s for f, l, t in sat.transitions)
               for s in range(3))


def test_saturation_without_tau_adds_only_reflexive_closure():
    a = mk([(0, "a", 1)], 2, {1})
    sat = tau_saturate(a)
    extra = [e for e in sat.transitions if str(e[1]) != "tau"]
    assert [(f, str(l), t) for f, l, t in extra] == [(0, "a", 1)]
    taus = [e for e in sat.transitions if str(e[1]) == "tau"]
    assert all(f == t for f, _, t in taus)


def test_termination_spreads_backwards_over_tau():
    a = mk([(0, "a", 1), (1, "tau", 2)], 3, {2})
    sat = tau_saturate(a)
    assert 1 in sat.terminating


def test_a_skip_weakly_equals_a_rooted():
    askip = mk([(0, "a", 1), (1, "tau", 2)], 3, {2})
    plain = mk([(0, "a", 1)], 2, {1})
    assert rooted_weak_bisim(askip, plain).equivalent


def test_skip_a_fails_the_root_condition():
    skipa = mk([(0, "tau", 1), (1, "a", 2)], 3, {2})
    plain = mk([(0, "a", 1)], 2, {1})
    r = rooted_weak_bisim(skipa, plain)
    assert not r.equivalent
    assert r.witness is not None and r.witness.kind == "root-tau"
    assert replay(skipa, plain, r.witness, "rweak")
    # but they are plain weakly bisimilar
    assert weak_bisim(skipa, plain).equivalent


def test_minimize_merges_duplicate_branches():
    two = mk([(0, "a", 1), (0, "a", 2)], 3, {1, 2})
    m = minimize(two, "strong")
    assert m.num_states == 2
    assert len(m.transitions) == 1
    assert strong_bisim(two, m).equivalent


def test_minimize_of_a_star_delta_is_itself():
    loop = mk([(0, "a", 0)], 1)
    m = minimize(loop, "strong")
    assert m.num_states == 1 and len(m.transitions) == 1


def test_minimize_is_idempotent():
    a = mk([(0, "a", 1), (0, "a", 2), (1, "b", 3), (2, "b", 3)], 4, {3})
    for kind in ("strong", "weak"):
        once = minimize(a, kind)
        twice = minimize(once, kind)
        assert once.num_states == twice.num_states
        assert len(once.transitions) == len(twice.transitions)


def random_lts(rng: random.Random, max_states: int = 8) -> Lts:
    n = rng.randint(1, max_states)
    labels = ["a", "b", "tau"]
    transitions = []
    for s in range(n):
        for _ in range(rng.randint(0, 3)):
            transitions.append((s, rng.choice(labels), rng.randrange(n)))
    terminating = {s for s in range(n) if rng.random() < 0.25}
    return mk(transitions, n, terminating)


@pytest.mark.parametrize("checker", [strong_bisim, rooted_weak_bisim])
def test_equivalence_laws_on_random_corpus(checker):
    rng = random.Random(42)
    corpus = [random_lts(rng) for _ in range(25)]
    for x in corpus:
        assert checker(x, x).equivalent, "reflexivity"
    pairs = [(rng.choice(corpus), rng.choice(corpus)) for _ in range(40)]
    for x, y in pairs:
        assert checker(x, y).equivalent == checker(y, x).equivalent, "symmetry"
    # transitivity over discovered equivalences
    for x in corpus:
        for y in corpus:
            if not checker(x, y).equivalent:
                continue
            for z in corpus:
                if checker(y, z).equivalent:
                    assert checker(x, z).equivalent, "transitivity"


def test_strong_implies_rooted_weak_on_corpus():
    rng = random.Random(7)
    corpus = [random_lts(rng) for _ in range(20)]
    for x in corpus:
        for y in corpus:
            if strong_bisim(x, y).equivalent:
                assert rooted_weak_bisim(x, y).equivalent


def test_witnesses_replay_on_corpus():
    rng = random.Random(3)
    corpus = [random_lts(rng) for _ in range(16)]
    checked = 0
    for x in corpus:
        for y in corpus:
            r = strong_bisim(x, y)
            if not r.equivalent:
                assert replay(x, y, r.witness, "strong"), "strong witness must replay"
                checked += 1
    assert checked > 0
