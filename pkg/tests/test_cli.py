"""
Test script for the command-line pipeline.

Runs each subcommand against the bundled system files with a small run
configuration and checks exit codes and written files.

Tests:
1. synth
2. certify (explicit coefficients and sweep)
3. simulate and verify from a stored report
4. Input errors
"""

import sys
import csv
import json
import shutil
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from main import EXIT_INPUT_ERROR, EXIT_NO_CERTIFICATE, EXIT_OK, run

SYSTEMS_DIR = Path(__file__).parent.parent / "config" / "systems"
TEST_OUTPUT_DIR = Path(__file__).parent / "test_output" / "cli"

UNSTABLE = str(SYSTEMS_DIR / "unstable_mode_family.json")
PERTURBED = str(SYSTEMS_DIR / "perturbed_family.json")


def print_section(title):
    print("\n" + "=" * 50)
    print(title)
    print("=" * 50)


def small_config():
    """Run defaults with few seeds and a short horizon."""
    TEST_OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
    path = TEST_OUTPUT_DIR / "config.json"
    config = {
        "simulation": {"seeds": 3, "horizon": 2.0, "step": 0.01, "style": "randomized"},
        "combined_bound": {"s_max": 10.0, "samples": 101},
        "assumption_check": {"samples": 1000, "seed": 0},
    }
    path.write_text(json.dumps(config), encoding='utf-8')
    return str(path)


def fresh_dir(name):
    path = TEST_OUTPUT_DIR / name
    shutil.rmtree(path, ignore_errors=True)
    return str(path)


def load_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def test_synth():
    """Test 1: Lyapunov report for the unstable-mode family."""
    print_section("TEST 1: synth")

    out = fresh_dir("synth")
    code = run(["synth", UNSTABLE, "--config", small_config(), "--output-dir", out])
    assert code == EXIT_OK
    report = load_json(Path(out) / "lyapunov_report.json")
    assert report["lyapunov"]["classification"]["discrete"] == [1]
    assert abs(report["lyapunov"]["r_bar"][0][1] - 1.5701) < 1e-4
    manifest = load_json(Path(out) / "manifest.json")
    assert manifest["command"] == "synth" and "created" in manifest
    print("✓ lyapunov_report.json and manifest.json written")


def test_certify():
    """Test 2: explicit coefficients, a failing length and a sweep."""
    print_section("TEST 2: certify")

    config = small_config()
    out = fresh_dir("certify_unstable")
    code = run(["certify", UNSTABLE, "--config", config, "--output-dir", out])
    assert code == EXIT_OK
    report = load_json(Path(out) / "certification_report.json")
    assert report["any_valid"]
    assert report["best"]["config"]["L"] == 2
    assert [c["valid"] for c in report["certificates"]] == [False, True, False]
    assert len(report["combined_bound"]["crossovers"]) == 1
    with open(Path(out) / "combined_bound.csv", newline='') as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["s", "beta"] and len(rows) == 102
    print(f"✓ Best certificate L = 2, K = {report['best']['K']:.1f}")

    out = fresh_dir("certify_l1")
    code = run(["certify", UNSTABLE, "--config", config, "--output-dir", out,
                "--L", "1", "--cs", "0.6", "--ci", "1=0.8", "--ci", "2=2.3"])
    assert code == EXIT_NO_CERTIFICATE
    print("✓ L = 1 alone exits with no certificate")

    out = fresh_dir("certify_perturbed")
    code = run(["certify", PERTURBED, "--config", config, "--output-dir", out])
    assert code == EXIT_OK
    report = load_json(Path(out) / "certification_report.json")
    check = report["perturbation_check"]
    assert check["holds"] and check["theta_deficit"] == 0.0
    assert abs(check["iiss_margin"] - 0.0121) < 1e-4
    print(f"✓ Perturbed family: margin {check['iiss_margin']:.5f} > {check['n_tilde']}")

    out = fresh_dir("certify_sweep")
    code = run(["certify", PERTURBED, "--config", config, "--output-dir", out, "--sweep", "--L", "2"])
    assert code == EXIT_OK
    report = load_json(Path(out) / "certification_report.json")
    assert report["best"]["config"]["c_s"] == 0.4
    print("✓ Sweep picks c_s = 0.4")


def test_simulate_and_verify():
    """Test 3: re-simulate and recompute from a stored report."""
    print_section("TEST 3: simulate / verify")

    config = small_config()
    out = fresh_dir("pipeline")
    assert run(["certify", UNSTABLE, "--config", config, "--output-dir", out]) == EXIT_OK
    report_path = str(Path(out) / "certification_report.json")

    code = run(["simulate", UNSTABLE, "--config", config, "--output-dir", out, "--report", report_path])
    assert code == EXIT_OK
    simulation = load_json(Path(out) / "simulation_report.json")
    assert len(simulation["runs"]) == 3
    assert all(r["audit"]["passed"] for r in simulation["runs"])
    assert simulation["worst_ratio"] <= 1 + 1e-6
    assert (Path(out) / "trajectory_seed000.csv").exists()
    print(f"✓ 3 seeds simulated, worst ratio {simulation['worst_ratio']:.4f}")

    code = run(["verify", UNSTABLE, "--config", config, "--output-dir", out, "--report", report_path])
    assert code == EXIT_OK
    verification = load_json(Path(out) / "verification_report.json")
    assert verification["mismatches"] == 0
    print("✓ Report reproduced")


def test_input_errors():
    """Test 4: malformed or missing inputs exit with code 2."""
    print_section("TEST 4: Input Errors")

    out = fresh_dir("errors")
    Path(out).mkdir(parents=True, exist_ok=True)
    broken = Path(out) / "broken.json"
    broken.write_text('{"dimension": 2, "modes": [', encoding='utf-8')
    assert run(["certify", str(broken), "--output-dir", out]) == EXIT_INPUT_ERROR

    invalid = Path(out) / "invalid.json"
    spec = load_json(UNSTABLE)
    spec["edges"] = spec["edges"][:1] + [[2, 1, [[1, 0], [0, 1]]], [1, 1, "identity"]]
    invalid.write_text(json.dumps(spec), encoding='utf-8')
    assert run(["certify", str(invalid), "--output-dir", out]) == EXIT_INPUT_ERROR
    print("✓ Syntax and validation errors exit with 2")

    try:
        run(["certify", str(Path(out) / "missing.json")])
    except SystemExit as e:
        assert e.code == 2
        print("✓ Missing file rejected by the argument parser")
    else:
        raise AssertionError("missing file accepted")


def run_all_tests():
    tests = [
        ("synth", test_synth),
        ("certify", test_certify),
        ("simulate / verify", test_simulate_and_verify),
        ("Input Errors", test_input_errors),
    ]
    results = []
    for name, test in tests:
        try:
            test()
            results.append((name, True))
        except Exception as e:
            print(f"✗ {name} failed: {e}")
            import traceback
            traceback.print_exc()
            results.append((name, False))

    print_section("TEST SUMMARY")
    for name, passed in results:
        status = "✓ PASSED" if passed else "✗ FAILED"
        print(f"  {name:.<40} {status}")
    return all(passed for _, passed in results)


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)
