import random

import pytest

from tests.conftest import link

from psfkit.linker import flatten
from psfkit.runtime import (
    SessionError, calculator_demo, new_session, run_auto,
    scripted_binary_op, trace_stats,
)
from psfkit.syntax import parse_spec


TRIVIAL = """
process module T
begin
  atoms
    a
  processes
    Stuck
    Silent
  definitions
    Stuck = delta
    Silent = skip
end T
"""


@pytest.fixture(scope="module")
def trivial_spec():
    return flatten(parse_spec(TRIVIAL, "t"), "T")


@pytest.fixture(scope="module")
def demo_bundle():
    return calculator_demo()


def fresh_session(demo_bundle, seed=0):
    spec, _components, handlers = demo_bundle
    return new_session(spec, "Application", seed=seed, handlers=handlers, depth_bound=9)


def test_delta_root_has_no_transitions(trivial_spec):
    s = new_session(trivial_spec, "Stuck")
    assert s.enabled() == []
    assert not s.terminated


def test_skip_root_is_one_tau_to_termination(trivial_spec):
    s = new_session(trivial_spec, "Silent")
    enabled = s.enabled()
    assert [d.label_text for d in enabled] == ["tau"]
    s.fire(0)
    assert s.terminated


def test_client_server_session_offers_choices(sec3_cs_spec):
    s = new_session(sec3_cs_spec, "Application")
    labels = {d.label_text for d in s.enabled()}
    assert "input-data" in labels
    assert "primitive-operation" in labels  # the path into c-call
    assert "stop" in labels


def test_enabled_still_offers_choices_after_input_data(sec3_cs_spec):
    s = new_session(sec3_cs_spec, "Application")
    s.fire_label("input-data")
    labels = {d.label_text for d in s.enabled()}
    assert {"input-data", "primitive-operation", "stop"} <= labels


def test_fire_undo_restores_state_and_trace(demo_bundle):
    s = fresh_session(demo_bundle)
    key = s.config.key()
    s.fire_label("push(5)")
    assert len(s.trace) == 1
    s.undo()
    assert s.config.key() == key
    assert len(s.trace) == 0


def test_undo_redo_equals_replay_from_reset(demo_bundle):
    s = fresh_session(demo_bundle, seed=5)
    s.fire_label("push(2)")
    s.fire_label("push(3)")
    s.fire_label("add-op")
    s.undo()
    s.fire_label("add-op")
    net = [e.label for e in s.trace]
    key = s.config.key()
    s.reset()
    for label in net:
        s.fire_label(label)
    assert s.config.key() == key
    assert [e.label for e in s.trace] == net


def test_terminated_session_has_empty_enabled(demo_bundle):
    s = fresh_session(demo_bundle)
    s.fire_label("stop")
    s.fire_label("quit")
    s.fire_label("shutdown")
    assert s.terminated
    assert s.enabled() == []


def test_handler_pending_return_is_a_single_descriptor(demo_bundle):
    s = fresh_session(demo_bundle)
    s.fire_label("push(3)")
    s.fire_label("succ-op")
    s.fire_label("c-call(operator, primitive, succ(3))")
    s.fire_label("cs-request(operator, primitive, succ(3))")
    s.fire_label("s-call(primitive, succ(3))")
    returns = [d.label_text for d in s.enabled() if d.label_text.startswith("s-return")]
    assert returns == ["s-return(primitive, 4)"]


def test_same_seed_runs_identically(demo_bundle):
    spec, _c, handlers = demo_bundle
    a = new_session(spec, "Application", seed=11, handlers=handlers)
    b = new_session(spec, "Application", seed=11, handlers=handlers)
    run_auto(a, "random", max_steps=40)
    run_auto(b, "random", max_steps=40)
    assert [e.label for e in a.trace] == [e.label for e in b.trace]


def test_script_error_names_the_step(demo_bundle):
    s = fresh_session(demo_bundle)
    with pytest.raises(SessionError, match="script step 1"):
        run_auto(s, "script", ["push(1)", "no-such-label"])


def test_multiply_3_4_updates_operator_register(demo_bundle):
    s = fresh_session(demo_bundle)
    assert scripted_binary_op(s, "mul", "complex", 3, 4) == 12
    assert trace_stats(s, "s-call(primitive, succ(_))") == 12
    assert trace_stats(s, "c-return(complex, operator, 12)") == 1


def test_divide_and_monus(demo_bundle):
    s = fresh_session(demo_bundle)
    assert scripted_binary_op(s, "div", "complex", 13, 4) == 3
    s.reset()
    assert scripted_binary_op(s, "sub", "basic", 2, 5) == 0
    s.reset()
    assert scripted_binary_op(s, "div", "complex", 7, 0) == 0


def test_pred_of_zero_is_zero(demo_bundle):
    s = fresh_session(demo_bundle)
    s.fire_label("push(0)")
    s.fire_label("pred-op")
    s.fire_label("c-call(operator, primitive, pred(0))")
    s.fire_label("cs-request(operator, primitive, pred(0))")
    s.fire_label("s-call(primitive, pred(0))")
    s.fire_label("s-return(primitive, 0)")
    s.fire_label("cs-result(primitive, operator, 0)")
    s.fire_label("c-return(primitive, operator, 0)")
    assert trace_stats(s, "c-return(primitive, operator, 0)") == 1


def test_lessthan_uses_subtract_then_iszero(demo_bundle):
    s = fresh_session(demo_bundle)
    scripted_binary_op(s, "div", "complex", 2, 5)  # one lessthan round: 2 < 5
    assert trace_stats(s, "s-call(basic, sub(5, 2))") == 1
    assert trace_stats(s, "s-call(primitive, iszero(_))") >= 2


def test_iszero_encodes_booleans_as_numerals(demo_bundle):
    s = fresh_session(demo_bundle)
    s.fire_label("push(0)")
    s.fire_label("iszero-op")
    s.fire_label("c-call(operator, primitive, iszero(0))")
    s.fire_label("cs-request(operator, primitive, iszero(0))")
    s.fire_label("s-call(primitive, iszero(0))")
    assert str(s.pins["primitive"]) == "1"
    s.reset()
    s.fire_label("push(3)")
    s.fire_label("iszero-op")
    s.fire_label("c-call(operator, primitive, iszero(3))")
    s.fire_label("cs-request(operator, primitive, iszero(3))")
    s.fire_label("s-call(primitive, iszero(3))")
    assert str(s.pins["primitive"]) == "0"


def test_quit_count_in_a_completed_run(demo_bundle):
    s = fresh_session(demo_bundle)
    s.fire_label("stop")
    s.fire_label("quit")
    s.fire_label("shutdown")
    assert trace_stats(s, "quit") == 1
    assert trace_stats(s, "nothing(_)") == 0


def test_handler_results_match_pure_algebra(demo_bundle):
    # the pinned s-return instantiation is one of the symbolic step's instances
    s = fresh_session(demo_bundle)
    s.fire_label("push(3)")
    s.fire_label("succ-op")
    s.fire_label("c-call(operator, primitive, succ(3))")
    s.fire_label("cs-request(operator, primitive, succ(3))")
    s.fire_label("s-call(primitive, succ(3))")
    from psfkit.terms import Act, AtomPattern, unify_action
    symbolic = s.stepper.symbolic_steps(s.config.expr)
    wanted = s._parse_ground_label("s-return(primitive, 4)")
    assert any(
        st.free and isinstance(st.label, Act) and st.label.name == "s-return"
        and unify_action(AtomPattern(st.label.name, st.label.args), wanted) is not None
        for st in symbolic
    )


def test_shutdown_reachable_from_random_states(demo_bundle):
    spec, _c, handlers = demo_bundle
    bound = 4 + 2
    for seed in (1, 2, 3):
        s = new_session(spec, "Application", seed=seed, handlers=handlers)
        run_auto(s, "random", max_steps=17)
        if s.terminated:
            continue
        if not any(d.label_text == "quit" for d in s.enabled()):
            # drive to a quiescent point where stop is offered, then quit
            for _ in range(40):
                stops = [d for d in s.enabled() if d.label_text in ("stop", "quit")]
                if stops:
                    s.fire(stops[0].index)
                    if stops[0].label_text == "quit":
                        break
                else:
                    labels = [d.label_text for d in s.enabled()]
                    s.fire(0)
            else:
                pytest.fail("never reached a quit")
        else:
            s.fire_label("quit")
        steps = 0
        while not s.terminated and steps <= bound:
            candidates = [d for d in s.enabled() if d.label_text in ("tau", "shutdown")]
            assert candidates, f"stuck after quit: {[d.label_text for d in s.enabled()]}"
            s.fire(candidates[0].index)
            steps += 1
        assert s.terminated and steps <= bound


def test_grid_matches_native_arithmetic_sample(demo_bundle):
    rng = random.Random(13)
    s = fresh_session(demo_bundle)
    oracles = {
        ("add", "basic"): lambda a, b: a + b,
        ("sub", "basic"): lambda a, b: max(0, a - b),
        ("mul", "complex"): lambda a, b: a * b,
        ("div", "complex"): lambda a, b: a // b if b else 0,
    }
    for (op, server), oracle in oracles.items():
        for _ in range(4):
            a, b = rng.randrange(10), rng.randrange(10)
            assert scripted_binary_op(s, op, server, a, b) == oracle(a, b), (op, a, b)
            s.reset()


def test_pending_call_is_the_only_descriptor(demo_bundle):
    s = fresh_session(demo_bundle)
    s.fire_label("push(3)")
    s.fire_label("succ-op")
    s.fire_label("c-call(operator, primitive, succ(3))")
    s.fire_label("cs-request(operator, primitive, succ(3))")
    assert [d.label_text for d in s.enabled()] == ["s-call(primitive, succ(3))"]


def test_handler_exception_is_an_undoable_error_state(demo_bundle):
    spec, _c, handlers = demo_bundle
    broken = dict(handlers)
    def boom(stub, a):
        raise RuntimeError("boom")
    broken[("primitive", "succ")] = boom
    s = new_session(spec, "Application", handlers=broken, depth_bound=9)
    s.fire_label("push(3)")
    s.fire_label("succ-op")
    s.fire_label("c-call(operator, primitive, succ(3))")
    s.fire_label("cs-request(operator, primitive, succ(3))")
    s.fire_label("s-call(primitive, succ(3))")
    assert s.error is not None and "boom" in s.error
    s.undo()
    assert s.error is None
    assert s.trace[-1].label == "cs-request(operator, primitive, succ(3))"
