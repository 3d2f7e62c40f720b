import pytest

from tests.conftest import link, load_modules

from psfkit.linker import LinkError, check, flatten
from psfkit.semantics import normalize
from psfkit.syntax import parse_spec


def _definition(spec, display):
    keys = spec.by_display[display]
    assert len(keys) == 1, keys
    return spec.processes[keys[0]]


def test_every_library_module_links_clean(cs_lib, arch_lib):
    for mods in (cs_lib, arch_lib):
        for root in [m.name for m in mods]:
            spec = flatten(mods, root)
            assert check(spec) == [], root


def test_binding_instantiates_the_formal_constant(sec3_cs_spec):
    si = _definition(sec3_cs_spec, "S-I")
    assert [str(p) for p in si.params] == ["primitive"]
    body = str(normalize(si.body))
    assert "cs-rec-request(o, primitive, s)" in body
    assert "server" not in body


def test_rename_produces_the_renamed_client(sec3_cs_full_spec):
    sc = _definition(sec3_cs_full_spec, "SC-Basic")
    assert str(normalize(sc.body)) == "encaps(ClientH, C-Basic)"
    cs_op = _definition(sec3_cs_full_spec, "CS-Operator")
    assert str(normalize(cs_op.body)) == "encaps(ClientH, C-Operator)"


def test_diamond_imports_make_distinct_interface_copies(sec3_cs_full_spec):
    keys = sec3_cs_full_spec.by_display["C-I"]
    # operator->{primitive,basic,complex}, basic->primitive, complex->{primitive,basic}
    assert len(keys) == 6
    params = sorted(tuple(map(str, sec3_cs_full_spec.processes[k].params)) for k in keys)
    assert ("basic", "primitive") in params
    assert ("complex", "basic") in params
    assert ("complex", "primitive") in params
    assert ("operator", "complex") in params


def test_flatten_single_module_is_identity_embedding():
    text = """
process module M
begin
  atoms
    a
  processes
    M
  definitions
    M = a . M
end M
"""
    spec = flatten(parse_spec(text, "m"), "M")
    assert check(spec) == []
    assert list(spec.by_display) == ["M"]
    assert ("a", 0) in spec.atoms


def test_flatten_is_deterministic():
    mods = load_modules("clientserver.psf", "section3_clientserver_full.psf")
    a = flatten(mods, "Application")
    b = flatten(mods, "Application")
    assert list(a.processes) == list(b.processes)
    assert [str(normalize(d.body)) for d in a.processes.values()] == [
        str(normalize(d.body)) for d in b.processes.values()
    ]


def test_every_section3_symbol_appears_exactly_once(sec3_cs_full_spec):
    spec = sec3_cs_full_spec
    for const in ("operator", "primitive", "basic", "complex"):
        assert len([fn for fn in spec.func_index[(const, 0)]]) == 1
    for atom in ("cs-snd-request", "c-snd-call", "s-rec-call", "snd-quit", "quit", "shutdown"):
        assert sum(1 for (n, _a) in spec.atoms if n == atom) == 1, atom


def test_unbound_parameter_is_reported():
    text = """
process module M
begin
  imports
    S-I {
      Name bound by [ nothing -> primitive ] to M
    }
end M
"""
    mods = load_modules("clientserver.psf") + parse_spec(text, "m")
    with pytest.raises(LinkError, match="not declared in parameter section"):
        flatten(mods, "M")


def test_binding_to_unknown_module_is_reported():
    text = """
process module M
begin
  imports
    S-I {
      Name bound by [ server -> primitive ] to Nowhere
    }
end M
"""
    mods = load_modules("clientserver.psf") + parse_spec(text, "m")
    with pytest.raises(LinkError, match="Nowhere"):
        flatten(mods, "M")


def test_cyclic_import_is_reported():
    text = """
process module A
begin
  imports B
end A
process module B
begin
  imports A
end B
"""
    with pytest.raises(LinkError, match="cyclic import"):
        flatten(parse_spec(text, "x"), "A")


def test_duplicate_process_equation_is_diagnosed():
    text = """
process module M
begin
  atoms
    a
  processes
    P
  definitions
    P = a
    P = a . a
end M
"""
    spec = flatten(parse_spec(text, "m"), "M")
    diags = check(spec)
    assert any("duplicate defining equation" in d.message and "P" in d.message for d in diags)


def test_comm_rule_overlap_is_diagnosed():
    text = """
process module M
begin
  exports
  begin
    sorts
      S
    functions
      k : -> S
  end
  atoms
    a : S
    b : S
    c : S
    d : S
  communications
    a(x) | b(x) = c(x) for x in S
    a(y) | b(y) = d(y) for y in S
end M
"""
    spec = flatten(parse_spec(text, "m"), "M")
    diags = check(spec)
    assert any("overlapping communication rules" in d.message for d in diags)


def test_sort_mismatch_is_reported():
    text = """
process module M
begin
  exports
  begin
    sorts
      S, T
    functions
      k : -> S
  end
  atoms
    a : T
  processes
    M
  definitions
    M = a(k)
end M
"""
    with pytest.raises(LinkError):
        flatten(parse_spec(text, "m"), "M")


def test_flatten_commutes_with_pretty_printing():
    from psfkit.syntax import parse_spec as pp, print_spec
    mods = load_modules("clientserver.psf", "section3_clientserver.psf")
    direct = flatten(mods, "Application")
    reprinted = flatten(pp(print_spec(mods), "rt"), "Application")
    assert list(direct.processes) == list(reprinted.processes)
    for k in direct.processes:
        assert str(normalize(direct.processes[k].body)) == str(normalize(reprinted.processes[k].body))


def test_naturals_binding_marks_sort_numeric():
    mods = load_modules("clientserver.psf", "calculator.psf")
    probe = """
process module Probe
begin
  imports CalculatorData
end Probe
"""
    spec = flatten(mods + parse_spec(probe, "p"), "Probe")
    assert spec.is_numeric("RESULT")
    assert not spec.is_numeric("ID")


def test_binding_to_undeclared_actual_is_reported():
    text = """
process module M
begin
  imports
    S-I {
      Name bound by [ server -> nowhere ] to ClientServerTypes
    }
end M
"""
    mods = load_modules("clientserver.psf") + parse_spec(text, "m")
    with pytest.raises(LinkError, match="does not declare"):
        flatten(mods, "M")


def test_rename_target_collision_is_diagnosed():
    text = """
process module A
begin
  exports
  begin
    processes
      A
  end
  imports ClientPrimitives
  definitions
    A = snd-quit
end A
process module B
begin
  exports
  begin
    processes
      B
  end
  imports ClientPrimitives
  definitions
    B = snd-quit . snd-quit
end B
process module M
begin
  imports
    NewClient {
      Client bound by [ Client -> A ] to A
      renamed by [ CS-Client -> Clash ]
    },
    NewClient {
      Client bound by [ Client -> B ] to B
      renamed by [ CS-Client -> Clash ]
    }
end M
"""
    mods = load_modules("clientserver.psf") + parse_spec(text, "m")
    spec = flatten(mods, "M")
    assert any("name collision" in d.message for d in check(spec))
