"""
Test script for combined switching weights.

Tests:
1. R(L) for the unstable-mode family
2. Max-plus powers against exhaustive walk enumeration
3. Graphs without walks of a given length
4. Hat weights
5. Three-mode example
6. Random graphs: enumeration, walk-length inequality, submultiplicativity
"""

import sys
import math
from pathlib import Path

import numpy as np

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from jumpgraph import (
    JumpGraphError,
    NO_WALK,
    WeightedJumpGraph,
    brute_force_combined_weight,
    combined_weight,
    combined_weight_table,
    hat_combined_weight,
    log_combined_weight,
    maxplus_power,
)
from lyapunov import build_lyapunov_data
from model import JumpGraph, load_system_spec

SYSTEMS_DIR = Path(__file__).parent.parent / "config" / "systems"


def print_section(title):
    print("\n" + "=" * 50)
    print(title)
    print("=" * 50)


def weighted_family(name):
    spec = load_system_spec(str(SYSTEMS_DIR / name))
    lyap = build_lyapunov_data(spec.system, spec.lyapunov, spec.profile)
    return WeightedJumpGraph.from_lyapunov(spec.system.graph, lyap)


def test_family_weights():
    """Test 1: R(1), R(2), R(3) from the synthesized gains."""
    print_section("TEST 1: Family Weights")

    weighted = weighted_family("unstable_mode_family.json")
    R = combined_weight_table(weighted, [0, 1, 2, 3])
    assert R[0] == 1.0
    assert math.isclose(R[1], 1.5701, abs_tol=1e-4)
    assert math.isclose(R[2], 0.0192, abs_tol=1e-4)
    assert math.isclose(R[3], 0.0302, abs_tol=1e-4)
    print("✓ R(0..3) = " + ", ".join(f"{r:.4f}" for r in R))

    weighted = weighted_family("perturbed_family.json")
    assert math.isclose(combined_weight(weighted, 1), 4.1712, abs_tol=1e-4)
    assert math.isclose(combined_weight(weighted, 2), 4.1712 * 0.0156, rel_tol=1e-2)
    assert math.isclose(hat_combined_weight(weighted, 2), 4.1712, abs_tol=1e-4)
    print(f"✓ Perturbed family: R(1) = {combined_weight(weighted, 1):.4f}")


def test_maxplus_against_enumeration():
    """Test 2: random gains on a 4-mode graph, lengths 1..6."""
    print_section("TEST 2: Max-Plus vs Enumeration")

    rng = np.random.default_rng(7)
    edges = frozenset({(1, 2), (2, 3), (3, 1), (3, 4), (4, 2), (2, 4)})
    graph = JumpGraph(4, edges)
    weighted = WeightedJumpGraph.from_gains(graph, rng.uniform(0.1, 3.0, size=(4, 4)))
    for L in range(1, 7):
        fast = combined_weight(weighted, L)
        slow = brute_force_combined_weight(weighted, L)
        assert math.isclose(fast, slow, rel_tol=1e-12)
    print("✓ Matches enumeration for L = 1..6")

    M = weighted.log_weights
    assert np.allclose(maxplus_power(M, 1), M, equal_nan=True)
    identity = maxplus_power(M, 0)
    assert np.all(np.diag(identity) == 0.0)
    assert np.all(identity[~np.eye(4, dtype=bool)] == -np.inf)


def test_no_walk():
    """Test 3: a single edge has no walk of length 2."""
    print_section("TEST 3: No Walk")

    graph = JumpGraph(2, frozenset({(1, 2)}))
    weighted = WeightedJumpGraph.from_gains(graph, np.array([[0.0, 2.0], [0.0, 0.0]]))
    assert combined_weight(weighted, 1) == 2.0
    assert combined_weight(weighted, 2) is NO_WALK
    assert brute_force_combined_weight(weighted, 2) is NO_WALK
    print("✓ L = 2 reports no-walk")

    try:
        combined_weight(weighted, -1)
    except JumpGraphError:
        print("✓ Negative length rejected")
    else:
        raise AssertionError("negative walk length was accepted")

    try:
        WeightedJumpGraph.from_gains(graph, np.array([[0.0, -1.0], [0.0, 0.0]]))
    except JumpGraphError:
        print("✓ Nonpositive gain rejected")
    else:
        raise AssertionError("nonpositive gain was accepted")


def test_hat_weight():
    """Test 4: hat weight is the largest R over shorter lengths."""
    print_section("TEST 4: Hat Weight")

    weighted = weighted_family("unstable_mode_family.json")
    assert hat_combined_weight(weighted, 1) == 1.0
    assert math.isclose(hat_combined_weight(weighted, 2), combined_weight(weighted, 1))
    assert math.isclose(hat_combined_weight(weighted, 3), combined_weight(weighted, 1))

    graph = JumpGraph(2, frozenset({(1, 2), (2, 1)}))
    weighted = WeightedJumpGraph.from_gains(graph, np.array([[0.0, 0.5], [0.4, 0.0]]))
    assert hat_combined_weight(weighted, 3) == 1.0
    print("✓ Hat weights include R(0) = 1")


def test_three_mode_example():
    """Test 5: four-edge graph on three modes."""
    print_section("TEST 5: Three-Mode Example")

    graph = JumpGraph(3, frozenset({(1, 2), (2, 1), (2, 3), (3, 1)}))
    gains = np.array([[0.216, 0.003, 0.0],
                      [0.274, 0.004, 0.195],
                      [1.656, 0.0, 0.525]])
    weighted = WeightedJumpGraph.from_gains(graph, gains)
    assert math.isclose(combined_weight(weighted, 1), 1.656, abs_tol=1e-3)
    assert math.isclose(combined_weight(weighted, 2), 0.195 * 1.656, rel_tol=1e-12)
    assert math.isclose(combined_weight(weighted, 2), 0.323, rel_tol=1e-2)
    for L in range(1, 7):
        assert math.isclose(combined_weight(weighted, L), brute_force_combined_weight(weighted, L), rel_tol=1e-12)
    print(f"✓ R(1) = {combined_weight(weighted, 1):.3f}, R(2) = {combined_weight(weighted, 2):.3f}")


def random_weighted_graph(rng, max_modes):
    N = int(rng.integers(2, max_modes + 1))
    pairs = [(i, j) for i in range(1, N + 1) for j in range(1, N + 1) if i != j]
    keep = rng.random(len(pairs)) < 0.6
    edges = frozenset(p for p, k in zip(pairs, keep) if k) or frozenset({pairs[0]})
    gains = np.exp(rng.uniform(-3.0, 3.0, size=(N, N)))
    return WeightedJumpGraph.from_gains(JumpGraph(N, edges), gains)


def test_random_graphs():
    """Test 6: enumeration agreement and the walk-length inequality."""
    print_section("TEST 6: Random Graphs")

    rng = np.random.default_rng(2024)
    for _ in range(100):
        weighted = random_weighted_graph(rng, 4)
        for L in range(1, 9):
            fast = combined_weight(weighted, L)
            slow = brute_force_combined_weight(weighted, L)
            assert (fast is NO_WALK) == (slow is NO_WALK)
            if fast is not NO_WALK:
                assert math.isclose(fast, slow, rel_tol=1e-12)
    print("✓ 100 graphs agree with enumeration for L <= 8")

    checked = 0
    for _ in range(200):
        weighted = random_weighted_graph(rng, 6)
        for L0 in (1, 2, 3):
            base = log_combined_weight(weighted, L0)
            if base is NO_WALK:
                continue
            for M in (1, 2, 3, 4):
                longer = log_combined_weight(weighted, L0 * M)
                if longer is NO_WALK:
                    continue
                assert longer / (L0 * M) <= base / L0 + 1e-12
                checked += 1
    assert checked > 0
    print(f"✓ ln R(L0 M)/(L0 M) <= ln R(L0)/L0 on {checked} cases")

    checked = 0
    for _ in range(100):
        weighted = random_weighted_graph(rng, 4)
        for L1 in range(1, 4):
            for L2 in range(1, 4):
                joint = brute_force_combined_weight(weighted, L1 + L2)
                if joint is NO_WALK:
                    continue
                split = brute_force_combined_weight(weighted, L1) * brute_force_combined_weight(weighted, L2)
                assert joint <= split * (1 + 1e-12)
                assert combined_weight(weighted, L1 + L2) <= split * (1 + 1e-12)
                checked += 1
    assert checked > 0
    print(f"✓ R(L1 + L2) <= R(L1) R(L2) on {checked} cases")


def run_all_tests():
    tests = [
        ("Family Weights", test_family_weights),
        ("Max-Plus vs Enumeration", test_maxplus_against_enumeration),
        ("No Walk", test_no_walk),
        ("Hat Weight", test_hat_weight),
        ("Three-Mode Example", test_three_mode_example),
        ("Random Graphs", test_random_graphs),
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
