import os

import pytest

from tests.conftest import corpus_path, link, load_modules

from psfkit.bisim import strong_bisim
from psfkit.cslib import (
    ComponentDecl, GenerationError, compose, detect_roles, drop_comm_rule,
    generate_interfaces, library_modules, parse_manifest,
    quit_shutdown_closure,
)
from psfkit.linker import check
from psfkit.semantics import build_lts
from psfkit.syntax import parse_spec, pretty_print


def manifest(name):
    with open(os.path.join(corpus_path(), name), encoding="utf-8") as fh:
        return parse_manifest(fh.read())


def test_library_modules_are_byte_stable():
    a = [pretty_print(m) for m in library_modules()]
    b = [pretty_print(m) for m in library_modules()]
    assert a == b
    assert [m.name for m in library_modules()][0] == "ClientServerTypes"


def test_library_contains_the_request_communication(cs_lib):
    prims = next(m for m in cs_lib if m.name == "ClientServerPrimitives")
    rules = {f"{c.left} | {c.right} = {c.result}" for c in prims.communications}
    assert "cs-snd-request(o, d, s) | cs-rec-request(o, d, s) = cs-request(o, d, s)" in rules


def test_library_contains_control_and_quit_rule(cs_lib):
    env = next(m for m in cs_lib if m.name == "ClientServer")
    eqs = {e.name: e for e in env.definitions}
    from psfkit.syntax import RSeq, RCall
    control = eqs["ClientServerControl"].body
    assert isinstance(control, RSeq)
    assert isinstance(control.left, RCall) and control.left.name == "rec-quit"
    assert isinstance(control.right, RCall) and control.right.name == "snd-shutdown"
    rules = {f"{c.left} | {c.right} = {c.result}" for c in env.communications}
    assert "snd-quit | rec-quit = quit" in rules


def test_detect_roles_operator_and_primitive(sec3_cs_spec):
    op = detect_roles(sec3_cs_spec, "Operator")
    assert op.client_of == ["primitive"] and not op.is_server
    prim = detect_roles(sec3_cs_spec, "Primitive")
    assert prim.client_of == [] and prim.is_server


def test_detect_roles_basic_is_both(sec3_cs_full_spec):
    basic = detect_roles(sec3_cs_full_spec, "Basic")
    assert basic.client_of == ["primitive"] and basic.is_server
    complex_ = detect_roles(sec3_cs_full_spec, "Complex")
    assert complex_.client_of == ["primitive", "basic"] and complex_.is_server
    operator = detect_roles(sec3_cs_full_spec, "Operator")
    assert operator.client_of == ["primitive", "basic", "complex"]


def test_process_without_calls_has_empty_roles(sec2_spec):
    roles = detect_roles(sec2_spec, "Component2")
    assert roles.empty


def test_generated_pair_matches_the_handwritten_assembly(sec3_cs_spec):
    mods = load_modules("clientserver.psf", "section3_clientserver.psf")
    gen = generate_interfaces(sec3_cs_spec, manifest("operator_primitive.manifest"))
    assert [m.name for m in gen.modules] == ["C-Operator", "S-Primitive", "ApplicationSystem", "Application"]
    spec = compose(mods, gen)
    assert check(spec) == []
    a = build_lts(spec, "Application")
    b = build_lts(sec3_cs_spec, "Application")
    assert strong_bisim(a, b).equivalent


def test_generated_modules_reparse(sec3_cs_spec):
    gen = generate_interfaces(sec3_cs_spec, manifest("operator_primitive.manifest"))
    for m in gen.modules:
        assert parse_spec(pretty_print(m), "gen")[0] == m


def test_complex_component_gains_two_interfaces(sec3_cs_full_spec):
    mods = load_modules("clientserver.psf", "section3_clientserver_full.psf")
    gen = generate_interfaces(sec3_cs_full_spec, manifest("calculator.manifest"))
    c_complex = next(m for m in gen.modules if m.name == "C-Complex")
    bound = [b.pairs for imp in c_complex.imports for b in imp.bindings]
    assert (("client", "complex"), ("server", "primitive")) in bound
    assert (("client", "complex"), ("server", "basic")) in bound


def test_full_generation_is_untruncated_and_encapsulated(sec3_cs_full_spec):
    mods = load_modules("clientserver.psf", "section3_clientserver_full.psf")
    gen = generate_interfaces(sec3_cs_full_spec, manifest("calculator.manifest"))
    spec = compose(mods, gen)
    lts = build_lts(spec, "Application", max_states=100_000)
    assert not lts.truncated
    labels = {str(l) for _, l, _ in lts.transitions}
    assert not any(l.startswith(("cs-snd-", "cs-rec-")) for l in labels)
    assert any(l.startswith("cs-request(") for l in labels)
    assert any(l.startswith("cs-result(") for l in labels)


def test_regeneration_of_a_wrapped_system_is_rejected(sec3_cs_spec):
    with pytest.raises(GenerationError, match="already wrapped"):
        generate_interfaces(sec3_cs_spec, [ComponentDecl("operator", "C-Operator"),
                                           ComponentDecl("primitive", "S-Primitive")])


def test_empty_roles_component_is_rejected(sec2_spec):
    with pytest.raises(GenerationError, match="neither"):
        generate_interfaces(sec2_spec, [ComponentDecl("c1", "Component2")])


def test_duplicate_server_ids_are_rejected(sec3_cs_spec):
    comps = [ComponentDecl("operator", "Operator"), ComponentDecl("operator", "Primitive")]
    with pytest.raises(GenerationError, match="two components"):
        generate_interfaces(sec3_cs_spec, comps)


def test_quit_leads_to_termination_no_other_deadlocks(sec3_cs_spec):
    lts = build_lts(sec3_cs_spec, "Application")
    report = quit_shutdown_closure(lts, 2)
    assert report.clean
    assert report.quit_states > 0


def test_system_without_quit_is_vacuously_clean():
    spec = link("clientserver.psf", "section3_clientserver.psf")
    lts = build_lts(spec, "ApplicationSystem")  # no environment, no quit comm
    report = quit_shutdown_closure(lts, 2)
    assert report.vacuous and report.quit_ok


def test_shutdown_rule_removal_is_caught(sec3_cs_spec):
    mutant = drop_comm_rule(sec3_cs_spec, "shutdown")
    lts = build_lts(mutant, "Application")
    report = quit_shutdown_closure(lts, 2)
    assert not report.clean
    assert not report.quit_ok
    assert report.deadlocks_in_shutdown


def test_application_system_halves_commute(sec3_cs_spec):
    # CS-Primitive || CS-Operator vs the other way around
    from psfkit.semantics import Config, close_lts, initial_config, normalize
    from psfkit.terms import PPar
    both = []
    for display_pair in (("CS-Primitive", "CS-Operator"), ("CS-Operator", "CS-Primitive")):
        left = initial_config(sec3_cs_spec, display_pair[0]).expr
        right = initial_config(sec3_cs_spec, display_pair[1]).expr
        both.append(close_lts(sec3_cs_spec, Config(normalize(PPar(left, right)))))
    assert strong_bisim(both[0], both[1]).equivalent
