"""
Lyapunov data for switched impulsive systems with linear flow and jump maps.

Quadratic functions V_i(x) = (x' P_i x)^(m/2) are built per mode from a
continuous Lyapunov equation (Hurwitz flow), a discrete Stein equation (Schur
self jump) or a user-chosen P_i. From them come the flow rates lam_bar(i), the
jump gains r_bar(i, j) and the sandwich constants used by the certifier.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cholesky, eigvalsh, solve_triangular

from model import ConstraintProfile, SwitchedImpulsiveSystem

TOL_SPEC = 1e-9
RESIDUAL_TOL = 1e-8

CONTINUOUS = 'continuous'
DISCRETE = 'discrete'
USER = 'user'


class LyapunovError(Exception):
    pass


def _square(M, name: str = 'matrix') -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise LyapunovError(f"{name} must be square, got shape {M.shape}")
    return M


def _symmetric(M: np.ndarray, name: str) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(M))))
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-10 * scale):
        raise LyapunovError(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def is_hurwitz(A) -> bool:
    A = _square(A, 'A')
    return bool(np.max(np.linalg.eigvals(A).real) < -TOL_SPEC)


def is_schur(J) -> bool:
    J = _square(J, 'J')
    return bool(np.max(np.abs(np.linalg.eigvals(J))) < 1.0 - TOL_SPEC)


def is_positive_definite(P) -> bool:
    try:
        cholesky(P, lower=True)
    except LinAlgError:
        return False
    return True


def _solve_vectorized(operator: np.ndarray, Q: np.ndarray) -> np.ndarray:
    n = Q.shape[0]
    try:
        vec = np.linalg.solve(operator, -Q.reshape(-1))
    except np.linalg.LinAlgError as e:
        raise LyapunovError(f"singular Lyapunov operator: {e}")
    P = vec.reshape(n, n)
    return 0.5 * (P + P.T)


def solve_continuous_lyapunov(A, Q) -> np.ndarray:
    """Solve A'P + PA = -Q for a Hurwitz A.

    Uses the row-major vectorisation vec(XPY) = (X kron Y') vec(P), so the
    operator is kron(A', I) + kron(I, A').
    """
    A = _square(A, 'A')
    Q = _symmetric(_square(Q, 'Q'), 'Q')
    if A.shape != Q.shape:
        raise LyapunovError("A and Q differ in size")
    if not is_hurwitz(A):
        raise LyapunovError("A is not Hurwitz; the continuous Lyapunov equation has no guaranteed solution")

    n = A.shape[0]
    eye = np.eye(n)
    operator = np.kron(A.T, eye) + np.kron(eye, A.T)
    P = _solve_vectorized(operator, Q)

    residual = np.linalg.norm(A.T @ P + P @ A + Q, 'fro')
    if residual > RESIDUAL_TOL * max(np.linalg.norm(Q, 'fro'), 1e-300):
        raise LyapunovError(f"continuous Lyapunov residual {residual:.3e} above tolerance")
    if not is_positive_definite(P):
        raise LyapunovError("continuous Lyapunov solution is not positive definite")
    return P


def solve_discrete_lyapunov(J, Q) -> np.ndarray:
    """Solve the Stein equation J'PJ - P = -Q for a Schur J."""
    J = _square(J, 'J')
    Q = _symmetric(_square(Q, 'Q'), 'Q')
    if J.shape != Q.shape:
        raise LyapunovError("J and Q differ in size")
    if not is_schur(J):
        raise LyapunovError("J is not Schur; the discrete Lyapunov equation has no guaranteed solution")

    n = J.shape[0]
    operator = np.kron(J.T, J.T) - np.eye(n * n)
    P = _solve_vectorized(operator, Q)

    residual = np.linalg.norm(J.T @ P @ J - P + Q, 'fro')
    if residual > RESIDUAL_TOL * max(np.linalg.norm(Q, 'fro'), 1e-300):
        raise LyapunovError(f"discrete Lyapunov residual {residual:.3e} above tolerance")
    if not is_positive_definite(P):
        raise LyapunovError("discrete Lyapunov solution is not positive definite")
    return P


def generalized_eig_extremes(Q, P) -> Tuple[float, float]:
    """Extreme eigenvalues of the symmetric-definite pencil (Q, P).

    P = L L' is factored and the standard symmetric problem for
    L^-1 Q L^-T is solved instead.
    """
    Q = _symmetric(_square(Q, 'Q'), 'Q')
    P = _symmetric(_square(P, 'P'), 'P')
    if Q.shape != P.shape:
        raise LyapunovError("Q and P differ in size")
    try:
        L = cholesky(P, lower=True)
    except LinAlgError:
        raise LyapunovError("P is not positive definite")

    M = solve_triangular(L, Q, lower=True)
    M = solve_triangular(L, M.T, lower=True)
    eigenvalues = eigvalsh(0.5 * (M + M.T))
    return float(eigenvalues[0]), float(eigenvalues[-1])


# ---------------------------------------------------------------------------
# Classification and synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModeClassification:
    continuous: FrozenSet[int] = frozenset()
    discrete: FrozenSet[int] = frozenset()
    user: FrozenSet[int] = frozenset()

    def kind(self, mode: int) -> str:
        if mode in self.continuous:
            return CONTINUOUS
        if mode in self.discrete:
            return DISCRETE
        if mode in self.user:
            return USER
        raise LyapunovError(f"mode {mode} is not classified")

    def as_dict(self) -> Dict[str, list]:
        return {CONTINUOUS: sorted(self.continuous), DISCRETE: sorted(self.discrete), USER: sorted(self.user)}

    @classmethod
    def from_dict(cls, section: Mapping[str, Iterable[int]]) -> 'ModeClassification':
        return cls(frozenset(int(i) for i in section.get(CONTINUOUS, [])),
                   frozenset(int(i) for i in section.get(DISCRETE, [])),
                   frozenset(int(i) for i in section.get(USER, [])))


@dataclass(frozen=True)
class LyapunovData:
    """Per-mode matrices P_i and the scalars extracted from them.

    r_bar[i-1, j-1] holds r_bar(i, j); pairs that are neither an edge nor a
    self jump are NaN.
    """
    P: Tuple[np.ndarray, ...]
    lam_bar: Tuple[float, ...]
    r_bar: np.ndarray
    k_lower: Tuple[float, ...]
    k_upper: Tuple[float, ...]
    m: int = 2
    classification: Optional[ModeClassification] = None
    Q: Dict[int, np.ndarray] = field(default_factory=dict)
    Q_tilde: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def mode_count(self) -> int:
        return len(self.P)

    def r(self, i: int, j: int) -> float:
        value = self.r_bar[i - 1, j - 1]
        if np.isnan(value):
            raise LyapunovError(f"no jump gain for pair ({i},{j})")
        return float(value)

    def r_self(self, i: int) -> float:
        return self.r(i, i)

    def lam(self, i: int) -> float:
        return self.lam_bar[i - 1]

    def V(self, mode: int, x: np.ndarray) -> float:
        quad = float(x @ self.P[mode - 1] @ x)
        return quad if self.m == 2 else max(quad, 0.0) ** (self.m / 2.0)

    def sandwich_ratio(self) -> float:
        return max(self.k_upper) / min(self.k_lower)

    @classmethod
    def from_user(cls, system: SwitchedImpulsiveSystem, section: Mapping) -> 'LyapunovData':
        """Ready-made V-data: P per mode, lambda_bar per mode, r_bar entries, optional m."""
        N = system.mode_count
        n = system.dimension
        m = int(section.get('m', 2))
        if m < 1:
            raise LyapunovError("exponent m must be a positive integer")

        P_list = section.get('P')
        if not isinstance(P_list, list) or len(P_list) != N:
            raise LyapunovError(f"user V-data needs {N} matrices P")
        P = tuple(_user_matrix(M, n, f"P[{k + 1}]") for k, M in enumerate(P_list))
        for k, Pk in enumerate(P, start=1):
            if not is_positive_definite(Pk):
                raise LyapunovError(f"user P_{k} is not symmetric positive definite")

        lam_list = section.get('lambda_bar')
        if not isinstance(lam_list, list) or len(lam_list) != N:
            raise LyapunovError(f"user V-data needs {N} values lambda_bar")
        lam_bar = tuple(_user_number(v) for v in lam_list)

        r_bar = np.full((N, N), np.nan)
        for entry in section.get('r_bar', []):
            i, j, value = int(entry[0]), int(entry[1]), _user_number(entry[2])
            if not value > 0:
                raise LyapunovError(f"r_bar({i},{j}) must be positive")
            r_bar[i - 1, j - 1] = value
        for (i, j) in sorted(system.graph.edges) + [(i, i) for i in system.graph.modes]:
            if np.isnan(r_bar[i - 1, j - 1]):
                if i == j and system.has_identity_self_jump(i):
                    r_bar[i - 1, i - 1] = 1.0
                else:
                    raise LyapunovError(f"user V-data lacks r_bar({i},{j})")

        k_lower, k_upper = _sandwich(P, m)
        return cls(P, lam_bar, r_bar, k_lower, k_upper, m,
                   classification=ModeClassification(user=frozenset(system.graph.modes)))


def _user_number(value) -> float:
    if isinstance(value, str):
        return math.inf if value.strip().lower() == 'inf' else float(value)
    return float(value)


def _user_matrix(value, n: int, name: str) -> np.ndarray:
    if isinstance(value, str) and value.strip().lower() == 'identity':
        return np.eye(n)
    M = np.array([[_user_number(v) for v in row] for row in value], dtype=float)
    if M.shape != (n, n):
        raise LyapunovError(f"{name} must be {n}x{n}")
    return _symmetric(M, name)


def _sandwich(P: Tuple[np.ndarray, ...], m: int) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    lower, upper = [], []
    for Pk in P:
        w = eigvalsh(Pk)
        lower.append(float(w[0]) ** (m / 2.0))
        upper.append(float(w[-1]) ** (m / 2.0))
    return tuple(lower), tuple(upper)


def _mode_candidate(system: SwitchedImpulsiveSystem, mode: int, kind: str,
                    Q: np.ndarray, P_user: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float, float]:
    """(P_i, lam_bar(i), r_bar(i,i)) for one mode under one classification."""
    A = system.flow_matrix(mode)
    J = system.jump_matrix(mode, mode)
    if kind == CONTINUOUS:
        P = solve_continuous_lyapunov(A, Q)
        lam = -generalized_eig_extremes(Q, P)[0]
        r_self = 1.0 if system.has_identity_self_jump(mode) else generalized_eig_extremes(J.T @ P @ J, P)[1]
    elif kind == DISCRETE:
        P = solve_discrete_lyapunov(J, Q)
        lam = -generalized_eig_extremes(-(A.T @ P + P @ A), P)[0]
        r_self = 1.0 - generalized_eig_extremes(Q, P)[0]
    else:
        P = P_user if P_user is not None else np.eye(system.dimension)
        lam = -generalized_eig_extremes(-(A.T @ P + P @ A), P)[0]
        r_self = 1.0 if system.has_identity_self_jump(mode) else generalized_eig_extremes(J.T @ P @ J, P)[1]
    return P, lam, r_self


def classify_modes(system: SwitchedImpulsiveSystem, profile: Optional[ConstraintProfile] = None,
                   q_choices: Optional[Mapping[int, np.ndarray]] = None) -> ModeClassification:
    """Place every mode by the Hurwitz/Schur test of its flow and self jump.

    (H, not S) and (H, identity) go to the continuous set, (not H, S) to the
    discrete set, (not H, not S) to the user set. (H, S) modes take whichever
    construction gives the smaller lambda_i(1).
    """
    q_choices = q_choices or {}
    continuous, discrete, user = set(), set(), set()
    for mode in system.graph.modes:
        hurwitz = is_hurwitz(system.flow_matrix(mode))
        schur = is_schur(system.jump_matrix(mode, mode))
        if hurwitz and schur:
            Q = np.asarray(q_choices.get(mode, np.eye(system.dimension)), dtype=float)
            t_j = profile.impulse_period(mode) if profile is not None else math.inf
            scores = {}
            for kind in (DISCRETE, CONTINUOUS):
                _, lam, r_self = _mode_candidate(system, mode, kind, Q)
                scores[kind] = lam + (math.log(r_self) / t_j if math.isfinite(t_j) else 0.0)
            (discrete if scores[DISCRETE] <= scores[CONTINUOUS] else continuous).add(mode)
        elif hurwitz:
            continuous.add(mode)
        elif schur:
            discrete.add(mode)
        else:
            user.add(mode)
    return ModeClassification(frozenset(continuous), frozenset(discrete), frozenset(user))


def synthesize(system: SwitchedImpulsiveSystem, classification: ModeClassification,
               q_choices: Optional[Mapping[int, np.ndarray]] = None,
               p_choices: Optional[Mapping[int, np.ndarray]] = None) -> LyapunovData:
    """Build quadratic V-data (m = 2) from Lyapunov and Stein equations.

    Modes missing from q_choices use Q = I; user modes missing from p_choices
    use P = I.
    """
    q_choices = q_choices or {}
    p_choices = p_choices or {}
    N = system.mode_count
    n = system.dimension

    classified = classification.continuous | classification.discrete | classification.user
    if sorted(classified) != list(system.graph.modes) or \
            len(classification.continuous) + len(classification.discrete) + len(classification.user) != N:
        raise LyapunovError("classification mismatch: sets must partition the modes")

    P_list, lam_list = [], []
    r_bar = np.full((N, N), np.nan)
    Q_used: Dict[int, np.ndarray] = {}
    Q_tilde: Dict[int, np.ndarray] = {}

    for mode in system.graph.modes:
        kind = classification.kind(mode)
        A = system.flow_matrix(mode)
        if kind == CONTINUOUS and not is_hurwitz(A):
            raise LyapunovError(f"classification mismatch: mode {mode} is continuous but A_{mode} is not Hurwitz")
        if kind == DISCRETE and not is_schur(system.jump_matrix(mode, mode)):
            raise LyapunovError(f"classification mismatch: mode {mode} is discrete but J_{mode},{mode} is not Schur")

        Q = P_user = None
        if kind == USER:
            P_user = np.asarray(p_choices.get(mode, np.eye(n)), dtype=float)
            P_user = _symmetric(_square(P_user, f"P_{mode}"), f"P_{mode}")
            if not is_positive_definite(P_user):
                raise LyapunovError(f"user P_{mode} is not symmetric positive definite")
        else:
            Q = np.asarray(q_choices.get(mode, np.eye(n)), dtype=float)
            if not is_positive_definite(_symmetric(_square(Q, f"Q_{mode}"), f"Q_{mode}")):
                raise LyapunovError(f"Q_{mode} is not symmetric positive definite")
            Q_used[mode] = Q

        P, lam, r_self = _mode_candidate(system, mode, kind, Q if Q is not None else np.eye(n), P_user)
        if kind != CONTINUOUS:
            Q_tilde[mode] = -(A.T @ P + P @ A)
        P_list.append(P)
        lam_list.append(lam)
        r_bar[mode - 1, mode - 1] = r_self

    for (i, j) in sorted(system.graph.edges):
        J = system.jump_matrix(i, j)
        r_bar[i - 1, j - 1] = generalized_eig_extremes(J.T @ P_list[j - 1] @ J, P_list[i - 1])[1]

    P = tuple(P_list)
    k_lower, k_upper = _sandwich(P, 2)
    return LyapunovData(P, tuple(lam_list), r_bar, k_lower, k_upper, 2, classification, Q_used, Q_tilde)


def build_lyapunov_data(system: SwitchedImpulsiveSystem, section: Optional[Mapping],
                        profile: Optional[ConstraintProfile] = None) -> LyapunovData:
    """V-data from the `lyapunov` section of a specification file.

    A section carrying `lambda_bar` is taken as ready-made user data; any
    other section drives synthesis (`classification` may be omitted or
    "auto", `Q` and `P` map 1-based mode keys to matrices).
    """
    section = section or {}
    if 'lambda_bar' in section:
        return LyapunovData.from_user(system, section)

    n = system.dimension
    q_choices = {int(k): _user_matrix(v, n, f"Q_{k}") for k, v in (section.get('Q') or {}).items()}
    p_choices = {int(k): _user_matrix(v, n, f"P_{k}") for k, v in (section.get('P') or {}).items()}
    spec = section.get('classification', 'auto')
    if spec == 'auto' or spec is None:
        classification = classify_modes(system, profile, q_choices)
    else:
        classification = ModeClassification.from_dict(spec)
    return synthesize(system, classification, q_choices, p_choices)


# ---------------------------------------------------------------------------
# Pointwise oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionReport:
    """Worst margins on sampled unit states; negative means violated."""
    sandwich_margin: float
    flow_margin: float
    jump_margin: float
    worst_flow_mode: int
    worst_jump_pair: Tuple[int, int]
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return min(self.sandwich_margin, self.flow_margin, self.jump_margin) >= -self.tolerance


def check_assumption_one(system: SwitchedImpulsiveSystem, lyap: LyapunovData,
                         samples: int = 10_000, seed: int = 0) -> AssumptionReport:
    """Sample unit states and check the sandwich, flow and jump inequalities.

    The flow inequality uses the linear part of each flow.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    X = rng.standard_normal((samples, system.dimension))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    half_m = lyap.m / 2.0

    def values(mode: int, Y: np.ndarray) -> np.ndarray:
        quad = np.einsum('ki,ij,kj->k', Y, lyap.P[mode - 1], Y)
        return quad if lyap.m == 2 else np.maximum(quad, 0.0) ** half_m

    sandwich = math.inf
    flow = math.inf
    worst_mode = 1
    for mode in system.graph.modes:
        P = lyap.P[mode - 1]
        V = values(mode, X)
        sandwich = min(sandwich, float(np.min(V - lyap.k_lower[mode - 1])),
                       float(np.min(lyap.k_upper[mode - 1] - V)))
        quad = np.einsum('ki,ij,kj->k', X, P, X)
        F = X @ system.flow_matrix(mode).T
        grad_dot = half_m * np.maximum(quad, 0.0) ** (half_m - 1.0) * 2.0 * np.einsum('ki,ij,kj->k', X, P, F)
        margin = float(np.min(lyap.lam(mode) * V - grad_dot))
        if margin < flow:
            flow, worst_mode = margin, mode

    jump = math.inf
    worst_pair = (1, 1)
    pairs = sorted(system.graph.edges) + [(i, i) for i in system.graph.modes]
    for (i, j) in pairs:
        Y = X @ system.jump_matrix(i, j).T
        margin = float(np.min(lyap.r(i, j) * values(i, X) - values(j, Y)))
        if margin < jump:
            jump, worst_pair = margin, (i, j)

    return AssumptionReport(sandwich, flow, jump, worst_mode, worst_pair)
