import os
import subprocess
import sys

from psfkit import corpus_path, library_path


def run_cli(*args, expect=0):
    result = subprocess.run(
        [sys.executable, "-m", "psfkit.cli", *args],
        capture_output=True, text=True,
    )
    assert result.returncode == expect, result.stderr
    return result


def c(name):
    return os.path.join(corpus_path(), name)


def l(name):
    return os.path.join(library_path(), name)


def test_check_reports_clean_library():
    out = run_cli("check", l("clientserver.psf"))
    assert "link cleanly" in out.stdout


def test_lts_emits_the_export_format(tmp_path):
    out = run_cli("lts", c("section2_architecture.psf"), "--root", "Application")
    lines = out.stdout.strip().splitlines()
    assert lines[0].startswith("des (0, ")
    assert lines[1].startswith('(0,"')


def test_bisim_strong_equivalent_self():
    out = run_cli("bisim", c("section3_clientserver.psf"), c("section3_clientserver.psf"),
                  "--kind", "strong")
    assert out.stdout.strip() == "equivalent"


def test_verify_the_worked_example():
    out = run_cli(
        "verify", c("section2_architecture.psf"), c("section2_toolbus.psf"),
        "--map", c("section2.map"), "--root", "Application",
        "--root2", "ToolBusProcesses", "--entry", "Component1", "--entry2", "PT1",
        "--shared",
    )
    assert out.stdout.strip() == "equivalent"


def test_verify_failure_exits_one(tmp_path):
    mutated = open(c("section2_toolbus.psf")).read().replace(
        "      tb-rec-msg(t2, t1, tbterm(ack)) .\n", "")
    target = tmp_path / "mutant.psf"
    target.write_text(mutated)
    out = run_cli(
        "verify", c("section2_architecture.psf"), str(target),
        "--map", c("section2.map"), "--root", "Application",
        "--root2", "ToolBusProcesses", "--entry", "Component1", "--entry2", "PT1",
        "--shared", expect=1,
    )
    assert "NOT equivalent" in out.stdout


def test_csgen_emits_modules_and_checks_shutdown():
    out = run_cli("csgen", c("section3_clientserver.psf"),
                  "--manifest", c("operator_primitive.manifest"), "--emit")
    assert "process module C-Operator" in out.stdout
    out = run_cli("csgen", c("section3_clientserver.psf"),
                  "--manifest", c("operator_primitive.manifest"))
    assert "shutdown closure: clean" in out.stdout


def test_usage_error_exits_two():
    result = subprocess.run([sys.executable, "-m", "psfkit.cli", "lts", "/no/such/file.psf"],
                            capture_output=True, text=True)
    assert result.returncode == 2


def test_scripted_sim_trace_is_reproducible(tmp_path):
    script = tmp_path / "run.script"
    script.write_text("push(3)\npush(4)\n-- a comment\nadd-op\n")
    first = run_cli("sim", "--demo", "--script", str(script), "--seed", "5")
    second = run_cli("sim", "--demo", "--script", str(script), "--seed", "5")
    assert first.stdout == second.stdout
    assert "0\tpush(3)" in first.stdout


def test_random_sim_is_seed_reproducible():
    a = run_cli("sim", "--demo", "--policy", "random", "--seed", "9", "--max-steps", "25")
    b = run_cli("sim", "--demo", "--policy", "random", "--seed", "9", "--max-steps", "25")
    assert a.stdout == b.stdout and a.stdout
