"""
Test script for stability certificates.

Tests:
1. Mode rates and admissible coefficient intervals
2. Certificates for the unstable-mode family (L = 1, 2, 3)
3. Combined bound and crossovers
4. Identity-self-jump certificate and integral ISS margin
5. Rate inequality along signals
6. Coefficient sweep
7. Rejected configurations
"""

import sys
import math
from pathlib import Path

import numpy as np

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from certifier import (
    CertConfig,
    CertifierError,
    MAIN,
    NO_SELF_IMPULSES,
    STABLE,
    UNSTABLE,
    admissible_c_interval,
    certify,
    certify_main,
    check_h3,
    combined_bound,
    iiss_margin,
    mode_partition,
    mode_rate,
    sweep,
)
from jumpgraph import WeightedJumpGraph
from lyapunov import build_lyapunov_data
from model import HybridSignal, load_system_spec
from simulator import generate_signal

SYSTEMS_DIR = Path(__file__).parent.parent / "config" / "systems"


def print_section(title):
    print("\n" + "=" * 50)
    print(title)
    print("=" * 50)


def family(name):
    spec = load_system_spec(str(SYSTEMS_DIR / name))
    lyap = build_lyapunov_data(spec.system, spec.lyapunov, spec.profile)
    weighted = WeightedJumpGraph.from_lyapunov(spec.system.graph, lyap)
    return spec, lyap, weighted


def unstable_certificates():
    spec, lyap, weighted = family("unstable_mode_family.json")
    c = {1: 0.8, 2: 2.3}
    certs = [certify(lyap, spec.profile, CertConfig(L, 0.6, c), weighted, spec.system) for L in (1, 2, 3)]
    return spec, lyap, weighted, certs


def test_mode_rates():
    """Test 1: rate split and admissible intervals."""
    print_section("TEST 1: Mode Rates")

    spec, lyap, _ = family("unstable_mode_family.json")
    lam, r = mode_rate(lyap.lam(2), lyap.r_self(2), 0.024, 2.3)
    assert math.isclose(r, -1.3 * math.log(1.5876), rel_tol=1e-4)
    assert lam > 0

    assert math.isclose(mode_rate(lyap.lam(1), lyap.r_self(1), 0.085, 1.0)[0], -52.5314, abs_tol=1e-3)
    assert math.isclose(mode_rate(lyap.lam(2), lyap.r_self(2), 0.024, 1.0)[0], 28.0877, abs_tol=1e-3)
    assert mode_partition(lyap, spec.profile) == ((2,), (1,))
    assert admissible_c_interval(lyap.lam(1), lyap.r_self(1), 0.085, STABLE) == (0.0, 1.0)
    assert admissible_c_interval(lyap.lam(2), lyap.r_self(2), 0.024, UNSTABLE) == (1.0, math.inf)
    assert admissible_c_interval(-1.0, 1.0, math.inf, STABLE) is None
    print("✓ Intervals: c1 in (0, 1), c2 in (1, inf)")

    rng = np.random.default_rng(5)
    cases = {(sign, target): 0 for sign in (-1, 1) for target in (STABLE, UNSTABLE)}
    while min(cases.values()) < 1000:
        lam_bar = rng.uniform(-20.0, 20.0)
        log_r = rng.choice([-1, 1]) * rng.uniform(0.01, 3.0)
        t_j = rng.uniform(0.01, 2.0)
        target = STABLE if lam_bar + log_r / t_j < 0 else UNSTABLE
        key = (int(np.sign(log_r)), target)
        if cases[key] >= 1000:
            continue
        cases[key] += 1
        lo, hi = admissible_c_interval(lam_bar, math.exp(log_r), t_j, target)
        for u in rng.uniform(0.01, 0.99, size=5):
            c = lo + u * (hi - lo) if math.isfinite(hi) else lo + rng.exponential(2.0) + 1e-6
            lam, r = mode_rate(lam_bar, math.exp(log_r), t_j, c)
            assert r < 0
            assert (lam < 0) if target == STABLE else (lam >= 0)
    print("✓ Sampled c inside each interval give r_i(c) < 0 and the targeted sign")

    try:
        admissible_c_interval(lyap.lam(2), lyap.r_self(2), 0.024, STABLE)
    except CertifierError as e:
        print(f"✓ {e}")
    else:
        raise AssertionError("stable target accepted for an unstable mode")


def test_unstable_family_certificates():
    """Test 2: only L = 2 certifies the unstable-mode family."""
    print_section("TEST 2: Unstable-Mode Family")

    _, _, _, (cert1, cert2, cert3) = unstable_certificates()
    assert cert2.theorem == MAIN
    assert cert2.switching_branch == 'lower'
    assert math.isclose(cert2.lam_J, 11.2065, abs_tol=1e-3)
    assert math.isclose(cert2.r_J, -0.6009, abs_tol=1e-3)
    assert math.isclose(cert2.lambda0, 0.6009, abs_tol=1e-3)
    assert math.isclose(cert2.lam, 0.3004, abs_tol=1e-3)
    assert math.isclose(cert2.C0, 2.858, abs_tol=1e-2)
    assert math.isclose(cert2.C, 13.04, abs_tol=2e-2)
    assert math.isclose(cert2.K, 682.9, rel_tol=2e-2)
    assert cert2.valid
    print(f"✓ L=2: K = {cert2.K:.1f}, lambda = {cert2.lam:.4f}")

    assert cert1.switching_branch == 'upper'
    assert math.isclose(cert1.lam, -6.9566, abs_tol=1e-3)
    assert math.isclose(cert1.K, 47.839, rel_tol=2e-2)
    assert math.isclose(cert3.lam, -2.1031, abs_tol=1e-3)
    assert math.isclose(cert3.K, 427.57, rel_tol=2e-2)
    assert not cert1.valid and not cert3.valid
    print(f"✓ L=1: lambda = {cert1.lam:.4f}; L=3: lambda = {cert3.lam:.4f} (both invalid)")

    # c_s = 0 removes the switching rate
    spec, lyap, weighted = family("unstable_mode_family.json")
    cert = certify(lyap, spec.profile, CertConfig(1, 0.0, {1: 0.0, 2: 1.0}), weighted, spec.system)
    assert math.isclose(cert.lam, -7.73, abs_tol=1e-2)


def test_combined_bound():
    """Test 3: the pointwise minimum switches from L = 1 to L = 2 once."""
    print_section("TEST 3: Combined Bound")

    _, _, _, certs = unstable_certificates()
    combined = combined_bound(certs)
    assert combined.decaying
    assert math.isclose(combined(1.0, 0.0), certs[0].K, rel_tol=1e-12)
    crossovers = combined.crossovers()
    assert len(crossovers) == 1 and math.isclose(crossovers[0], 0.366, abs_tol=2e-3)
    assert combined.active(0.1) == 0 and combined.active(1.0) == 1
    s = np.linspace(0.0, 20.0, 201)
    assert all(combined.active(v) != 2 for v in s)
    assert np.allclose(combined(2.0, s), 2.0 * combined(1.0, s))
    print(f"✓ Crossover at s = {crossovers[0]:.4f}; L=3 never active")


def test_identity_self_jumps():
    """Test 4: perturbed family at L = 2, c_s = 0.4."""
    print_section("TEST 4: Identity Self Jumps")

    spec, lyap, weighted = family("perturbed_family.json")
    cert = certify(lyap, spec.profile, CertConfig(2, 0.4), weighted, spec.system)
    assert cert.theorem == NO_SELF_IMPULSES
    assert cert.r_J is None
    assert math.isclose(cert.lambda0, 0.82, abs_tol=1e-3)
    assert math.isclose(cert.lam, 0.41, abs_tol=1e-3)
    assert math.isclose(cert.K, 22.4229, rel_tol=2e-2)
    margin = iiss_margin(cert)
    assert math.isclose(margin, 0.0121, rel_tol=1e-2)
    assert 0.012 < margin
    print(f"✓ K = {cert.K:.4f}, lambda = {cert.lam:.4f}, margin = {margin:.5f}")

    cert1 = certify(lyap, spec.profile, CertConfig(1, 0.4), weighted, spec.system)
    assert cert1.switching_branch == 'upper' and not cert1.valid

    try:
        certify_main(lyap, spec.profile, CertConfig(2, 0.4), weighted)
    except CertifierError as e:
        print(f"✓ {e}")
    else:
        raise AssertionError("main certificate accepted all-neutral self jumps")

    try:
        iiss_margin(cert1)
    except CertifierError:
        print("✓ Margin refused for an invalid certificate")
    else:
        raise AssertionError("margin computed for an invalid certificate")


def test_rate_inequality():
    """Test 5: the rate inequality holds on admissible signals only."""
    print_section("TEST 5: Rate Inequality")

    spec, _, _, certs = unstable_certificates()
    cert = certs[1]
    for seed in range(3):
        signal = generate_signal(spec.profile, spec.system.graph, 2.0, seed, switching_branch='lower')
        report = check_h3(cert, signal, 2)
        assert report.holds, f"seed {seed}: slack {report.worst_slack}"
    print("✓ Holds on generated admissible signals")

    # mode 2 active for 0.5 breaks the upper activation bound
    signal = HybridSignal.from_times(2, [0.5], [1], 1.0)
    report = check_h3(cert, signal, 2)
    assert not report.holds
    assert report.worst_t0 == 0.0 and math.isclose(report.worst_t, 0.5)
    print(f"✓ Over-long unstable dwell violates it (slack {report.worst_slack:.3f})")


def test_sweep():
    """Test 6: small grids select the L = 2 configuration."""
    print_section("TEST 6: Sweep")

    spec, lyap, weighted = family("unstable_mode_family.json")
    result = sweep(lyap, spec.profile, weighted, spec.system, [1, 2, 3], cs_grid=[0.5, 0.6],
                   c_grids={1: [0.8], 2: [2.3, 3.0]})
    assert result.evaluated == 12
    assert result.valid_count == 1
    best = result.best
    assert best.config.L == 2 and best.config.c_s == 0.6 and best.config.c == {1: 0.8, 2: 2.3}
    print(f"✓ Best: {best.config.label()} with lambda = {best.lam:.4f}")

    spec, lyap, weighted = family("perturbed_family.json")
    result = sweep(lyap, spec.profile, weighted, spec.system, [2], cs_grid=[0.2, 0.3, 0.4, 0.5])
    assert result.best.config.c_s == 0.4
    assert result.best.lam >= 0.41 - 1e-3
    refined = sweep(lyap, spec.profile, weighted, spec.system, [2], cs_grid=[0.2, 0.3, 0.4, 0.5], refine=True)
    assert refined.best.lam >= result.best.lam
    print(f"✓ Perturbed family: c_s = 0.4 on the grid, refined c_s = {refined.best.config.c_s:.4f}")


def test_rejected_configurations():
    """Test 7: bad coefficients raise instead of producing certificates."""
    print_section("TEST 7: Rejected Configurations")

    spec, lyap, weighted = family("unstable_mode_family.json")
    bad = [
        CertConfig(0, 0.6, {1: 0.8, 2: 2.3}),
        CertConfig(2, -0.1, {1: 0.8, 2: 2.3}),
        CertConfig(2, 0.6, {1: 0.8}),
    ]
    for config in bad:
        try:
            certify(lyap, spec.profile, config, weighted, spec.system)
        except CertifierError as e:
            print(f"✓ {config.label()}: {e}")
        else:
            raise AssertionError(f"{config.label()} was accepted")

    cert = certify(lyap, spec.profile, CertConfig(2, 0.6, {1: 0.8, 2: 0.5}), weighted, spec.system)
    assert cert.r_J > 0 and not cert.valid
    assert any("r_J" in note for note in cert.notes)

    spec, lyap, weighted = family("perturbed_family.json")
    try:
        certify(lyap, spec.profile, CertConfig(2, 1.2), weighted, spec.system)
    except CertifierError:
        print("✓ c_s >= 1 refused without self impulses")
    else:
        raise AssertionError("c_s >= 1 accepted")


def run_all_tests():
    tests = [
        ("Mode Rates", test_mode_rates),
        ("Unstable-Mode Family", test_unstable_family_certificates),
        ("Combined Bound", test_combined_bound),
        ("Identity Self Jumps", test_identity_self_jumps),
        ("Rate Inequality", test_rate_inequality),
        ("Sweep", test_sweep),
        ("Rejected Configurations", test_rejected_configurations),
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
