"""
Strong exponential stability certificates.

Given V-data, a constraint profile and balancing coefficients (L, c_s, c_i),
computes the rate breakdown and the envelope constants (K, lambda) of

    |x(t)| <= K exp(-lambda (t - t0 + n(t, t0))) |x0|.

Invalid certificates (lambda0 <= 0) are ordinary results; they are still
combined pointwise with valid ones.
"""

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from jumpgraph import WeightedJumpGraph, hat_combined_weight, log_combined_weight
from lyapunov import LyapunovData
from model import (LOWER, UPPER, ConstraintProfile, HybridSignal, SwitchedImpulsiveSystem,
                   signal_staircase)

NEUTRAL_TOL = 1e-9

MAIN = 'main'
NO_SELF_IMPULSES = 'no_self_impulses'

STABLE = 'stable'
UNSTABLE = 'unstable'


class CertifierError(Exception):
    pass


def _log_gain(r_self: float) -> float:
    value = math.log(r_self)
    return 0.0 if abs(value) <= NEUTRAL_TOL else value


def is_neutral(r_self: float) -> bool:
    return _log_gain(r_self) == 0.0


# ---------------------------------------------------------------------------
# Per-mode and switching rates
# ---------------------------------------------------------------------------

def mode_rate(lam_bar: float, r_self: float, t_j: float, c: float) -> Tuple[float, float]:
    """(lambda_i(c), r_i(c)) for one mode."""
    log_r = _log_gain(r_self)
    lam = lam_bar + (c * log_r / t_j if math.isfinite(t_j) else 0.0)
    return lam, (1.0 - c) * log_r


def mode_rates(lyap: LyapunovData, profile: ConstraintProfile,
               c: Mapping[int, float]) -> Dict[int, Tuple[float, float]]:
    return {i: mode_rate(lyap.lam(i), lyap.r_self(i), profile.impulse_period(i), c.get(i, 0.0))
            for i in range(1, lyap.mode_count + 1)}


def mode_partition(lyap: LyapunovData, profile: ConstraintProfile) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """Split modes by the sign of lambda_i(1): (unstable, stable)."""
    unstable, stable = [], []
    for i in range(1, lyap.mode_count + 1):
        lam_one, _ = mode_rate(lyap.lam(i), lyap.r_self(i), profile.impulse_period(i), 1.0)
        (unstable if lam_one >= 0 else stable).append(i)
    return tuple(unstable), tuple(stable)


def admissible_c_interval(lam_bar: float, r_self: float, t_j: float,
                          target: str) -> Optional[Tuple[float, float]]:
    """Open interval of c with r_i(c) < 0 and lambda_i(c) of the targeted sign.

    Returns None when the self jump is neutral (r_self = 1).
    """
    if target not in (STABLE, UNSTABLE):
        raise CertifierError(f"target must be '{STABLE}' or '{UNSTABLE}'")
    log_r = _log_gain(r_self)
    lam_one = lam_bar + (log_r / t_j if math.isfinite(t_j) else 0.0)
    if target == STABLE and lam_one >= 0:
        raise CertifierError(f"stable target needs lambda_i(1) < 0, got {lam_one:.6g}")
    if target == UNSTABLE and lam_one < 0:
        raise CertifierError(f"unstable target needs lambda_i(1) >= 0, got {lam_one:.6g}")
    if log_r == 0.0:
        return None

    threshold = -lam_bar * t_j / log_r if math.isfinite(t_j) else math.inf
    if log_r < 0:
        if target == STABLE:
            return (0.0, 1.0) if lam_bar <= 0 else (threshold, 1.0)
        return (0.0, 1.0)
    if target == STABLE:
        return (1.0, threshold)
    return (1.0, math.inf)


@dataclass(frozen=True)
class SwitchingRates:
    lam_s: float
    r_s: float
    t_s: float
    n_s: float
    branch: Optional[str]


def switching_rates(R_L: float, L: int, profile: ConstraintProfile, c_s: float) -> SwitchingRates:
    if L == 0:
        return SwitchingRates(0.0, 0.0, math.inf, 0.0, None)
    if L < 0:
        raise CertifierError("L must be nonnegative")
    log_R = math.log(R_L)
    if R_L >= 1:
        pair = profile.switching_adt.upper
        if pair is None:
            raise CertifierError(f"R({L}) = {R_L:.6g} >= 1 requires the upper switching ADT pair")
        n_s = c_s * pair.n0
        branch = UPPER
    else:
        pair = profile.switching_adt.lower
        if pair is None:
            raise CertifierError(f"R({L}) = {R_L:.6g} < 1 requires the lower switching ADT pair")
        n_s = c_s * pair.n0 - L
        branch = LOWER
    t_s = pair.t_s
    lam_s = c_s * log_R / (t_s * L) if math.isfinite(t_s) else 0.0
    return SwitchingRates(lam_s, (1.0 - c_s) * log_R / L, t_s, n_s, branch)


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CertConfig:
    L: int
    c_s: float
    c: Dict[int, float] = field(default_factory=dict)

    def coefficient_tuple(self) -> Tuple[float, ...]:
        return tuple(self.c[i] for i in sorted(self.c))

    def label(self) -> str:
        cs = ', '.join(f"c{i}={v:g}" for i, v in sorted(self.c.items()))
        return f"L={self.L}, cs={self.c_s:g}" + (f", {cs}" if cs else '')


@dataclass(frozen=True)
class Certificate:
    config: CertConfig
    theorem: str
    R_L: float
    R_hat: float
    lam_s: float
    r_s: float
    t_s: float
    n_s: float
    switching_branch: Optional[str]
    lam_i: Dict[int, float]
    r_i: Dict[int, float]
    lam_J: float
    r_J: Optional[float]
    C0: float
    C1: float
    C: float
    lambda0: float
    K: float
    lam: float
    m: int
    notes: Tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return self.lambda0 > 0

    def envelope(self, s, r: float = 1.0):
        """K exp(-lambda s) r; s may be an array."""
        return self.K * np.exp(-self.lam * np.asarray(s, dtype=float)) * r

    def as_dict(self) -> Dict:
        return {
            'config': {'L': self.config.L, 'c_s': self.config.c_s,
                       'c': {str(i): v for i, v in sorted(self.config.c.items())}},
            'theorem': self.theorem,
            'R_L': self.R_L,
            'R_hat': self.R_hat,
            'lambda_s': self.lam_s,
            'r_s': self.r_s,
            'T_S': self.t_s if math.isfinite(self.t_s) else 'inf',
            'N_S': self.n_s,
            'switching_branch': self.switching_branch,
            'lambda_i': {str(i): v for i, v in sorted(self.lam_i.items())},
            'r_i': {str(i): v for i, v in sorted(self.r_i.items())},
            'lambda_J': self.lam_J,
            'r_J': self.r_J,
            'C0': self.C0,
            'C1': self.C1,
            'C': self.C,
            'lambda0': self.lambda0,
            'K': self.K,
            'lambda': self.lam,
            'm': self.m,
            'valid': self.valid,
            'notes': list(self.notes),
        }


def _check_coefficients(config: CertConfig, weighted: WeightedJumpGraph):
    if not isinstance(config.L, (int, np.integer)) or config.L < 0:
        raise CertifierError(f"L must be a nonnegative integer, got {config.L}")
    if config.L == 0 and weighted.has_edges:
        raise CertifierError("L = 0 is only meaningful for a jump graph without edges")
    if config.c_s < 0:
        raise CertifierError("c_s must be nonnegative")
    for i, value in config.c.items():
        if value < 0:
            raise CertifierError(f"c_{i} must be nonnegative")


def _walk_weights(weighted: WeightedJumpGraph, L: int) -> Tuple[float, float]:
    if L == 0:
        return 1.0, 1.0
    log_R = log_combined_weight(weighted, L)
    if log_R is None:
        raise CertifierError(f"no-walk: the jump graph has no walk of length {L}")
    return math.exp(log_R), hat_combined_weight(weighted, L)


def _group_terms(profile: ConstraintProfile, rates: Mapping[int, float], mode_count: int) -> Tuple[float, float]:
    """(sum N_a max rate, sum T_a max rate) over the activation groups."""
    lam_J = 0.0
    C0 = 0.0
    for k, group in enumerate(profile.effective_groups(mode_count), start=1):
        top = max(rates[i] for i in group.modes)
        if group.direction == UPPER and top < 0:
            raise CertifierError(f"activation group {k} is an upper group but its largest rate {top:.6g} is negative")
        if group.direction == LOWER and top > 0:
            raise CertifierError(f"activation group {k} is a lower group but its largest rate {top:.6g} is positive")
        lam_J += group.n_a * top
        C0 += group.t_a * top
    return lam_J, C0


def _finish(config: CertConfig, theorem: str, lyap: LyapunovData, R_L: float, R_hat: float,
            sw: SwitchingRates, lam_i, r_i, lam_J, r_J, C0, C1, notes) -> Certificate:
    L = config.L
    C = C0 + C1 + (math.log(R_hat) if L > 0 else 0.0)
    candidates = [lam_J + sw.lam_s]
    if L > 0:
        candidates.append(sw.r_s)
    if r_J is not None:
        candidates.append(r_J)
    lambda0 = -max(candidates)
    m = lyap.m
    K = math.exp(C / m) * lyap.sandwich_ratio() ** (1.0 / m)
    if L > 0 and sw.r_s >= 0:
        notes = notes + (f"r_s = {sw.r_s:.6g} is not negative; the switching-count hypothesis fails",)
    return Certificate(config, theorem, R_L, R_hat, sw.lam_s, sw.r_s, sw.t_s, sw.n_s, sw.branch,
                       dict(lam_i), dict(r_i), lam_J, r_J, C0, C1, C, lambda0, K, lambda0 / m, m, tuple(notes))


def certify_main(lyap: LyapunovData, profile: ConstraintProfile, config: CertConfig,
                 weighted: WeightedJumpGraph, walk_weights: Optional[Tuple[float, float]] = None) -> Certificate:
    """Certificate for systems with nonswitching impulses."""
    _check_coefficients(config, weighted)
    N = lyap.mode_count
    neutral = [i for i in range(1, N + 1) if is_neutral(lyap.r_self(i))]
    if len(neutral) == N:
        raise CertifierError("every self jump gain equals 1; r_J is undefined, use the identity-self-jump certificate")

    for i in range(1, N + 1):
        if i in neutral:
            continue
        adt = profile.impulse_adt.get(i)
        if adt is None:
            raise CertifierError(f"missing impulse_adt for mode {i}")
        expected = UPPER if lyap.r_self(i) >= 1 else LOWER
        if adt.direction != expected:
            raise CertifierError(f"impulse_adt mode {i} is '{adt.direction}' but r_bar({i},{i}) = "
                                 f"{lyap.r_self(i):.6g} needs a '{expected}' bound")
        if i not in config.c:
            raise CertifierError(f"missing coefficient c_{i}")

    R_L, R_hat = walk_weights or _walk_weights(weighted, config.L)
    sw = switching_rates(R_L, config.L, profile, config.c_s)
    rates = mode_rates(lyap, profile, config.c)
    lam_i = {i: rates[i][0] for i in rates}
    r_i = {i: rates[i][1] for i in rates}
    lam_J, C0 = _group_terms(profile, lam_i, N)
    r_J = max(r_i[i] for i in r_i if i not in neutral)

    C1 = sum(config.c.get(i, 0.0) * profile.impulse_adt[i].n0 * _log_gain(lyap.r_self(i))
             for i in range(1, N + 1) if i not in neutral)
    if config.L > 0:
        C1 += sw.n_s * math.log(R_L) / config.L

    notes = ()
    if r_J >= 0:
        notes += (f"r_J = {r_J:.6g} is not negative; some c_i lies outside its admissible interval",)
    return _finish(config, MAIN, lyap, R_L, R_hat, sw, lam_i, r_i, lam_J, r_J, C0, C1, notes)


def certify_no_self_impulses(lyap: LyapunovData, profile: ConstraintProfile, config: CertConfig,
                             weighted: WeightedJumpGraph, system: Optional[SwitchedImpulsiveSystem] = None,
                             walk_weights: Optional[Tuple[float, float]] = None) -> Certificate:
    """Certificate for systems whose self jump maps are all the identity."""
    _check_coefficients(config, weighted)
    if not 0 <= config.c_s < 1:
        raise CertifierError("c_s must lie in [0, 1) for the identity-self-jump certificate")
    N = lyap.mode_count
    if system is not None:
        if not system.has_identity_self_jumps():
            raise CertifierError("system has self jump maps other than the identity")
    elif any(lyap.r_self(i) != 1.0 for i in range(1, N + 1)):
        raise CertifierError("system has self jump maps other than the identity")

    R_L, R_hat = walk_weights or _walk_weights(weighted, config.L)
    sw = switching_rates(R_L, config.L, profile, config.c_s)
    lam_i = {i: lyap.lam(i) for i in range(1, N + 1)}
    r_i = {i: 0.0 for i in range(1, N + 1)}
    lam_J, C0 = _group_terms(profile, lam_i, N)
    C1 = sw.n_s * math.log(R_L) / config.L if config.L > 0 else 0.0
    return _finish(config, NO_SELF_IMPULSES, lyap, R_L, R_hat, sw, lam_i, r_i, lam_J, None, C0, C1, ())


def certify(lyap: LyapunovData, profile: ConstraintProfile, config: CertConfig,
            weighted: WeightedJumpGraph, system: SwitchedImpulsiveSystem,
            walk_weights: Optional[Tuple[float, float]] = None) -> Certificate:
    if system.has_identity_self_jumps():
        return certify_no_self_impulses(lyap, profile, config, weighted, system, walk_weights)
    return certify_main(lyap, profile, config, weighted, walk_weights)


# ---------------------------------------------------------------------------
# Condition check along a signal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class H3Report:
    holds: bool
    worst_slack: float
    worst_t0: float
    worst_t: float


def check_h3(cert: Certificate, signal: HybridSignal, mode_count: int,
             C0: Optional[float] = None, lambda0: Optional[float] = None, tol: float = 1e-9) -> H3Report:
    """Check the rate inequality on every event-aligned pair (t0, t).

    lam_s dt + r_s n_nu + sum_i [lam_i t_a(i) + r_i n(i)] <= C0 - lambda0 (dt + n_mu + n_nu)
    """
    C0 = cert.C0 if C0 is None else C0
    lambda0 = cert.lambda0 if lambda0 is None else lambda0
    stair = signal_staircase(signal, mode_count)

    lam_vec = np.array([cert.lam_i[i] for i in range(1, mode_count + 1)])
    r_vec = np.array([cert.r_i[i] for i in range(1, mode_count + 1)])
    time = stair.time
    lhs_cum = cert.lam_s * time + cert.r_s * stair.n_nu + stair.t_a @ lam_vec + stair.n_mode @ r_vec
    jumps_cum = time + stair.n_mu + stair.n_nu

    slack = (C0 - lambda0 * stair.pair_differences(jumps_cum)) - stair.pair_differences(lhs_cum)
    slack = np.where(stair.upper_mask(), slack, np.inf)
    p, q = np.unravel_index(int(np.argmin(slack)), slack.shape)
    worst = float(slack[p, q])
    return H3Report(worst >= -tol, worst, float(time[p]), float(time[q]))


# ---------------------------------------------------------------------------
# Combined bound and margins
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CombinedBound:
    """beta(r, s) = min_k K_k exp(-lambda_k s) r."""
    certificates: Tuple[Certificate, ...]

    @property
    def decaying(self) -> bool:
        return any(c.valid for c in self.certificates)

    def _log_levels(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.array([math.log(c.K) - c.lam * s for c in self.certificates])

    def __call__(self, r, s):
        values = np.exp(np.min(self._log_levels(s), axis=0)) * r
        return float(values[0]) if np.ndim(s) == 0 else values

    def active(self, s: float) -> int:
        """Index of the certificate attaining the minimum at s (first on ties)."""
        return int(np.argmin(self._log_levels(s)[:, 0]))

    def crossovers(self) -> List[float]:
        """s >= 0 where the active certificate changes."""
        candidates = set()
        for a, b in itertools.combinations(self.certificates, 2):
            if a.lam != b.lam:
                s = (math.log(a.K) - math.log(b.K)) / (a.lam - b.lam)
                if s > 0:
                    candidates.add(s)
        points = []
        for s in sorted(candidates):
            eps = 1e-9 * max(1.0, s)
            if self.active(s - eps) != self.active(s + eps):
                points.append(s)
        return points


def combined_bound(certs: Sequence[Certificate]) -> CombinedBound:
    if not certs:
        raise CertifierError("combined bound needs at least one certificate")
    return CombinedBound(tuple(certs))


def margin_from(K: float, lam: float) -> float:
    return lam / (K * math.exp(lam))


def iiss_margin(cert: Certificate) -> float:
    if not cert.valid:
        raise CertifierError("integral input-to-state margin needs a valid certificate")
    return margin_from(cert.K, cert.lam)


# ---------------------------------------------------------------------------
# Coefficient sweep
# ---------------------------------------------------------------------------

DEFAULT_CS_GRID = tuple(round(0.05 * k, 10) for k in range(20))
DEFAULT_UPPER_CS_GRID = tuple(round(1.0 + 0.05 * k, 10) for k in range(1, 21))
DEFAULT_C_POINTS = 20
DEFAULT_C_FLOOR = 1e-3
DEFAULT_C_CEILING = 1e3


def default_c_grid(lam_bar: float, r_self: float, t_j: float, points: int = DEFAULT_C_POINTS,
                   floor: float = DEFAULT_C_FLOOR, ceiling: float = DEFAULT_C_CEILING) -> Tuple[float, ...]:
    """Log-spaced points strictly inside the admissible interval of a mode."""
    lam_one = lam_bar + (_log_gain(r_self) / t_j if math.isfinite(t_j) else 0.0)
    interval = admissible_c_interval(lam_bar, r_self, t_j, UNSTABLE if lam_one >= 0 else STABLE)
    if interval is None:
        return (0.0,)
    lo, hi = interval
    if math.isinf(hi):
        return tuple(np.geomspace(lo + floor, ceiling, points))
    if lo <= 0:
        return tuple(np.geomspace(floor, hi, points + 1)[:-1])
    return tuple(np.geomspace(lo, hi, points + 2)[1:-1])


@dataclass(frozen=True)
class SweepResult:
    best: Optional[Certificate]
    evaluated: int
    valid_count: int
    skipped: Dict[str, int]
    no_walk_lengths: Tuple[int, ...]
    objective: str


def _rank(cert: Certificate, objective: str):
    tie = (cert.config.L, cert.config.c_s, cert.config.coefficient_tuple())
    if not cert.valid:
        return (1, -cert.lambda0) + tie
    if objective == 'K':
        return (0, cert.K) + tie
    return (0, -cert.lam) + tie


def sweep(lyap: LyapunovData, profile: ConstraintProfile, weighted: WeightedJumpGraph,
          system: SwitchedImpulsiveSystem, L_values: Sequence[int],
          cs_grid: Optional[Sequence[float]] = None,
          c_grids: Optional[Mapping[int, Sequence[float]]] = None,
          objective: str = 'lambda', refine: bool = False, c_points: int = DEFAULT_C_POINTS,
          c_floor: float = DEFAULT_C_FLOOR, c_ceiling: float = DEFAULT_C_CEILING) -> SweepResult:
    """Scan (L, c_s, c_i) and keep the best certificate.

    Ties go to smaller L, then smaller c_s, then lexicographically smaller c.
    With no valid point the certificate with the largest lambda0 is returned.
    """
    if objective not in ('lambda', 'K'):
        raise CertifierError("objective must be 'lambda' or 'K'")
    if not L_values:
        raise CertifierError("sweep needs at least one L")
    if not weighted.has_edges:
        L_values = [0]

    N = lyap.mode_count
    identity_jumps = system.has_identity_self_jumps()
    c_grids = dict(c_grids or {})
    if identity_jumps:
        c_lists = [(0.0,)] * N
    else:
        c_lists = []
        for i in range(1, N + 1):
            if i in c_grids:
                c_lists.append(tuple(float(v) for v in c_grids[i]))
            else:
                c_lists.append(default_c_grid(lyap.lam(i), lyap.r_self(i), profile.impulse_period(i),
                                              c_points, c_floor, c_ceiling))

    best = None
    evaluated = 0
    valid_count = 0
    skipped: Dict[str, int] = {}
    no_walk = []

    for L in sorted(set(int(v) for v in L_values)):
        try:
            weights = _walk_weights(weighted, L)
        except CertifierError:
            no_walk.append(L)
            continue
        if cs_grid is not None:
            grid = tuple(cs_grid)
        else:
            grid = DEFAULT_CS_GRID + (DEFAULT_UPPER_CS_GRID if weights[0] >= 1 and not identity_jumps else ())
        for c_s in grid:
            for combo in itertools.product(*c_lists):
                config = CertConfig(L, float(c_s), {i + 1: float(v) for i, v in enumerate(combo)})
                try:
                    cert = certify(lyap, profile, config, weighted, system, weights)
                except CertifierError as e:
                    reason = str(e).split(':')[0]
                    skipped[reason] = skipped.get(reason, 0) + 1
                    continue
                evaluated += 1
                valid_count += cert.valid
                if best is None or _rank(cert, objective) < _rank(best, objective):
                    best = cert

    if refine and best is not None:
        best = _refine_cs(best, lyap, profile, weighted, system, objective)
    return SweepResult(best, evaluated, valid_count, skipped, tuple(no_walk), objective)


def _refine_cs(best: Certificate, lyap, profile, weighted, system, objective) -> Certificate:
    """Bounded one-dimensional search over c_s around the best grid point."""
    L = best.config.L
    if L == 0:
        return best
    weights = (best.R_L, best.R_hat)
    upper_side = best.R_L >= 1 and not system.has_identity_self_jumps()
    bounds = (1.0, 1.0 + 2.0 * max(1.0, best.config.c_s)) if upper_side else (0.0, 1.0 - 1e-9)

    def score(c_s: float) -> float:
        try:
            cert = certify(lyap, profile, replace(best.config, c_s=float(c_s)), weighted, system, weights)
        except CertifierError:
            return math.inf
        return cert.K if objective == 'K' and cert.valid else -cert.lambda0

    result = minimize_scalar(score, bounds=bounds, method='bounded', options={'xatol': 1e-6})
    if not result.success or not np.isfinite(result.fun):
        return best
    candidate = certify(lyap, profile, replace(best.config, c_s=float(result.x)), weighted, system, weights)
    return candidate if _rank(candidate, objective) < _rank(best, objective) else best


def best_certificate(certs: Sequence[Certificate], objective: str = 'lambda') -> Optional[Certificate]:
    """Best of a list under the sweep ranking; None for an empty list."""
    return min(certs, key=lambda c: _rank(c, objective)) if certs else None
