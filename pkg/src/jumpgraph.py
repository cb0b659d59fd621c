"""
Combined switching weights over walks of the jump graph.

R(L) is the largest product of jump gains r_bar(j0,j1)...r_bar(j_{L-1},j_L)
over admissible walks of length L. Products are taken in log space, i.e. as
entries of the L-th power of the log-weight matrix in the max-plus semiring
(-inf marks an absent edge).
"""

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from model import JumpGraph

MAX_WALK_LENGTH = 1_000_000
BRUTE_FORCE_MAX_MODES = 8
BRUTE_FORCE_MAX_LENGTH = 12

NO_WALK = None


class JumpGraphError(Exception):
    pass


@dataclass(frozen=True)
class WeightedJumpGraph:
    graph: JumpGraph
    log_weights: np.ndarray

    def __post_init__(self):
        N = self.graph.mode_count
        if self.log_weights.shape != (N, N):
            raise JumpGraphError(f"log weight matrix must be {N}x{N}")
        for (i, j) in self.graph.edges:
            if not np.isfinite(self.log_weights[i - 1, j - 1]):
                raise JumpGraphError(f"weight of edge ({i},{j}) must be positive and finite")

    @classmethod
    def from_gains(cls, graph: JumpGraph, gains: np.ndarray) -> 'WeightedJumpGraph':
        """gains[i-1, j-1] = r_bar(i, j); entries off the edge set are ignored."""
        N = graph.mode_count
        log_weights = np.full((N, N), -np.inf)
        for (i, j) in graph.edges:
            value = float(gains[i - 1, j - 1])
            if not value > 0:
                raise JumpGraphError(f"jump gain r_bar({i},{j}) must be positive, got {value}")
            log_weights[i - 1, j - 1] = math.log(value)
        return cls(graph, log_weights)

    @classmethod
    def from_lyapunov(cls, graph: JumpGraph, lyap) -> 'WeightedJumpGraph':
        return cls.from_gains(graph, lyap.r_bar)

    @property
    def has_edges(self) -> bool:
        return bool(self.graph.edges)


def maxplus_identity(size: int) -> np.ndarray:
    M = np.full((size, size), -np.inf)
    np.fill_diagonal(M, 0.0)
    return M


def maxplus_matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """C[i, j] = max_k A[i, k] + B[k, j]."""
    return np.max(A[:, :, None] + B[None, :, :], axis=1)


def maxplus_power(M: np.ndarray, L: int) -> np.ndarray:
    if L < 0:
        raise JumpGraphError("walk length must be nonnegative")
    result = maxplus_identity(M.shape[0])
    base = M.copy()
    while L:
        if L & 1:
            result = maxplus_matmul(result, base)
        L >>= 1
        if L:
            base = maxplus_matmul(base, base)
    return result


def log_combined_weight(weighted: WeightedJumpGraph, L: int) -> Optional[float]:
    """ln R(L), or NO_WALK when no walk of length L exists."""
    if not isinstance(L, (int, np.integer)) or L < 0:
        raise JumpGraphError(f"walk length must be a nonnegative integer, got {L}")
    if L > MAX_WALK_LENGTH:
        raise JumpGraphError(f"walk length {L} above the supported maximum {MAX_WALK_LENGTH}")
    if L == 0:
        return 0.0
    best = float(np.max(maxplus_power(weighted.log_weights, int(L))))
    return best if np.isfinite(best) else NO_WALK


def combined_weight(weighted: WeightedJumpGraph, L: int) -> Optional[float]:
    log_value = log_combined_weight(weighted, L)
    return NO_WALK if log_value is NO_WALK else math.exp(log_value)


def combined_weight_table(weighted: WeightedJumpGraph, lengths) -> List[Optional[float]]:
    return [combined_weight(weighted, L) for L in lengths]


def hat_combined_weight(weighted: WeightedJumpGraph, L: int) -> float:
    """max_{0 <= l <= L-1} R(l); lengths without walks are skipped."""
    if L < 1:
        raise JumpGraphError("hat weight needs L >= 1")
    best = 0.0                      # ln R(0)
    power = maxplus_identity(weighted.graph.mode_count)
    for _ in range(1, L):
        power = maxplus_matmul(power, weighted.log_weights)
        value = float(np.max(power))
        if np.isfinite(value):
            best = max(best, value)
    return math.exp(best)


def brute_force_combined_weight(weighted: WeightedJumpGraph, L: int) -> Optional[float]:
    """Exhaustive enumeration of walks, for small graphs and lengths only."""
    N = weighted.graph.mode_count
    if N > BRUTE_FORCE_MAX_MODES or L > BRUTE_FORCE_MAX_LENGTH:
        raise JumpGraphError(f"enumeration limited to N <= {BRUTE_FORCE_MAX_MODES} "
                             f"and L <= {BRUTE_FORCE_MAX_LENGTH}")
    if L < 0:
        raise JumpGraphError("walk length must be nonnegative")
    if L == 0:
        return 1.0

    successors = {i: weighted.graph.successors(i) for i in weighted.graph.modes}
    best = -math.inf
    stack = [(start, 0, 0.0) for start in weighted.graph.modes]
    while stack:
        mode, depth, total = stack.pop()
        if depth == L:
            best = max(best, total)
            continue
        for nxt in successors[mode]:
            stack.append((nxt, depth + 1, total + weighted.log_weights[mode - 1, nxt - 1]))
    return math.exp(best) if math.isfinite(best) else NO_WALK
