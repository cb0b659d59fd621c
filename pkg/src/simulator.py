"""
Hybrid signal generation, auditing and trajectory simulation.

Signals are built constructively from a closed walk of the jump graph whose
dwell times are scaled to satisfy the activation-time and switching bounds,
with self impulses laid out on each mode's own activation clock. Every
generated signal is audited before it is returned.
"""

import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import expm

from certifier import Certificate, CombinedBound
from lyapunov import LyapunovData
from model import (LOWER, SWITCH, TICKS_PER_UNIT, UPPER, ConstraintProfile, HybridSignal, InputSignal,
                   JumpGraph, PerturbedLinearFlow, SwitchedImpulsiveSystem, signal_staircase, to_ticks)

DIVERGENCE_NORM = 1e300
AUDIT_TOL = 1e-9
REPAIR_ATTEMPTS = 20
REPAIR_FACTOR = 0.85
CAP_MARGIN = 0.9
MIN_SUBSTEPS = 4

PERIODIC = 'periodic'
RANDOMIZED = 'randomized'


class SimulatorError(Exception):
    pass


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def initial_state(dimension: int, seed: int) -> np.ndarray:
    """Unit-norm initial state drawn from a stream independent of the signal stream."""
    rng = np.random.Generator(np.random.Philox(seed).jumped())
    x0 = rng.standard_normal(dimension)
    return x0 / np.linalg.norm(x0)


# ---------------------------------------------------------------------------
# Audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditReport:
    """Worst slack per inequality (negative means violated) and where it occurs."""
    slacks: Dict[str, float]
    worst_pairs: Dict[str, Tuple[float, float]]
    inadmissible_switches: Tuple[Tuple[float, int, int], ...] = ()
    tolerance: float = AUDIT_TOL
    switching_branch: Optional[str] = None

    @property
    def switching_ok(self) -> bool:
        if self.switching_branch is not None and f"switching_{self.switching_branch}" in self.slacks:
            return self.slacks[f"switching_{self.switching_branch}"] >= -self.tolerance
        declared = [v for k, v in self.slacks.items() if k.startswith('switching_')]
        return not declared or max(declared) >= -self.tolerance

    @property
    def passed(self) -> bool:
        others = [v for k, v in self.slacks.items() if not k.startswith('switching_')]
        return (not self.inadmissible_switches and self.switching_ok
                and all(v >= -self.tolerance for v in others))

    def failures(self) -> List[str]:
        failed = [k for k, v in self.slacks.items()
                  if v < -self.tolerance and not k.startswith('switching_')]
        if not self.switching_ok:
            failed.append('switching_adt')
        if self.inadmissible_switches:
            failed.append('jump_graph')
        return failed


def audit_signal(signal: HybridSignal, profile: ConstraintProfile, graph: Optional[JumpGraph] = None,
                 mode_count: Optional[int] = None, tol: float = AUDIT_TOL,
                 switching_branch: Optional[str] = None) -> AuditReport:
    """Evaluate every counting inequality on all event-aligned (t0, t) pairs.

    Both one-sided limits of each event are grid points. A profile declaring
    both switching pairs is satisfied when either pair holds, unless
    switching_branch names the pair that must hold.
    """
    N = mode_count or (graph.mode_count if graph is not None else
                       max({signal.initial_mode, *signal.post_modes}))
    stair = signal_staircase(signal, N)
    mask = stair.upper_mask()
    times = stair.time
    dt = stair.pair_differences(times)
    slacks: Dict[str, float] = {}
    pairs: Dict[str, Tuple[float, float]] = {}

    def record(name: str, slack: np.ndarray):
        slack = np.where(mask, slack, np.inf)
        p, q = np.unravel_index(int(np.argmin(slack)), slack.shape)
        slacks[name] = float(slack[p, q])
        pairs[name] = (float(times[p]), float(times[q]))

    for mode, adt in sorted(profile.impulse_adt.items()):
        if mode > N:
            continue
        dn = stair.pair_differences(stair.n_mode[:, mode - 1])
        dta = stair.pair_differences(stair.t_a[:, mode - 1])
        rate = dta / adt.t_j if math.isfinite(adt.t_j) else 0.0
        if adt.direction == UPPER:
            record(f"impulse_adt[{mode}]", adt.n0 + rate - dn)
        else:
            record(f"impulse_adt[{mode}]", dn - adt.n0 - rate)

    dnu = stair.pair_differences(stair.n_nu)
    upper = profile.switching_adt.upper
    lower = profile.switching_adt.lower
    if upper is not None:
        record('switching_upper', upper.n0 + dt / upper.t_s - dnu)
    if lower is not None:
        rate = dt / lower.t_s if math.isfinite(lower.t_s) else 0.0
        record('switching_lower', dnu - lower.n0 - rate)

    for k, group in enumerate(profile.activation_groups, start=1):
        members = [m - 1 for m in group.modes if m <= N]
        dta = stair.pair_differences(stair.t_a[:, members].sum(axis=1))
        if group.direction == UPPER:
            record(f"activation_group[{k}]", group.n_a * dt + group.t_a - dta)
        else:
            record(f"activation_group[{k}]", dta - group.n_a * dt - group.t_a)

    bad = tuple(signal.inadmissible_switches(graph)) if graph is not None else ()
    return AuditReport(slacks, pairs, bad, tol, switching_branch)


# ---------------------------------------------------------------------------
# Signal generation
# ---------------------------------------------------------------------------

def _bfs_path(graph: JumpGraph, source: int, targets: Set[int]) -> Optional[List[int]]:
    """Shortest path from source (exclusive) to the first target reached."""
    parent = {source: None}
    queue = deque([source])
    while queue:
        mode = queue.popleft()
        if mode in targets and mode != source:
            path = []
            while mode != source:
                path.append(mode)
                mode = parent[mode]
            return path[::-1]
        for nxt in graph.successors(mode):
            if nxt not in parent:
                parent[nxt] = mode
                queue.append(nxt)
    return None


def closed_walk(graph: JumpGraph) -> List[int]:
    """Closed walk visiting as many modes as possible, as a list of visits.

    The walk wraps around: the last visit switches back to the first.
    """
    if not graph.edges:
        return [1]
    best: Optional[List[int]] = None
    for start in graph.modes:
        walk = [start]
        while True:
            path = _bfs_path(graph, walk[-1], set(graph.modes) - set(walk))
            if path is None:
                break
            walk.extend(path)
        back = _bfs_path(graph, walk[-1], {start})
        if back is None:
            continue
        walk.extend(back[:-1])
        if len(walk) < 2:
            continue
        if best is None or len(set(walk)) > len(set(best)):
            best = walk
    if best is None:
        raise SimulatorError("jump graph has no closed walk")
    return best


def _cyclic_runs(flags: Sequence[bool], weights: Sequence[float]) -> float:
    """Largest total weight of a cyclic run of consecutive flagged visits."""
    if all(flags):
        return float(sum(weights))
    best = 0.0
    doubled = list(zip(flags, weights)) * 2
    run = 0.0
    for flag, weight in doubled:
        run = run + weight if flag else 0.0
        best = max(best, run)
    return best


@dataclass(frozen=True)
class SchedulePlan:
    walk: Tuple[int, ...]
    weights: Tuple[float, ...]
    period: float
    min_period: float
    capped: bool
    branch: Optional[str]


def plan_schedule(profile: ConstraintProfile, graph: JumpGraph,
                  switching_branch: Optional[str] = None) -> SchedulePlan:
    """Base cycle and its longest admissible period."""
    walk = closed_walk(graph)
    N = graph.mode_count
    groups = profile.effective_groups(N)
    group_of = {m: k for k, g in enumerate(groups) for m in g.modes}
    visited_groups = {group_of[m] for m in walk}

    upper_share = {k: CAP_MARGIN * g.n_a for k, g in enumerate(groups)
                   if g.direction == UPPER and k in visited_groups}
    rest = [k for k, g in enumerate(groups) if g.direction != UPPER and k in visited_groups]
    remainder = max(0.0, 1.0 - sum(upper_share.values()))
    rest_total = sum(groups[k].n_a for k in rest)
    share = dict(upper_share)
    for k in rest:
        share[k] = remainder * (groups[k].n_a / rest_total if rest_total > 0 else 1.0 / len(rest))

    visits = {k: sum(1 for m in walk if group_of[m] == k) for k in visited_groups}
    floor = 0.01 / len(walk)
    weights = np.array([max(share[group_of[m]] / visits[group_of[m]], floor) for m in walk])
    weights = weights / weights.sum()

    if switching_branch is None:
        if profile.switching_adt.lower is not None:
            switching_branch = LOWER
        elif profile.switching_adt.upper is not None:
            switching_branch = UPPER
    caps = []
    min_period = 0.0
    if len(walk) > 1 and switching_branch == LOWER:
        pair = profile.switching_adt.lower
        if pair is None:
            raise SimulatorError("lower switching branch requested but not declared")
        if math.isfinite(pair.t_s):
            caps.append(pair.t_s / weights.max())
    elif len(walk) > 1 and switching_branch == UPPER:
        pair = profile.switching_adt.upper
        if pair is None:
            raise SimulatorError("upper switching branch requested but not declared")
        min_period = pair.t_s / weights.min()

    for k, group in enumerate(groups):
        inside = [group_of[m] == k for m in walk]
        if group.direction == UPPER and group.n_a < 1:
            run = _cyclic_runs(inside, weights)
            if run > 0:
                caps.append(CAP_MARGIN * group.t_a / ((1.0 - group.n_a) * run))
        elif group.direction == LOWER and group.n_a > 0:
            gap = _cyclic_runs([not f for f in inside], weights)
            if gap > 0:
                caps.append(CAP_MARGIN * (-group.t_a) / (group.n_a * gap))

    if caps:
        period = min(caps)
        if period <= 0 or period < min_period:
            raise SimulatorError("activation-time and switching bounds leave no admissible period")
    else:
        period = max(1.0, 1.5 * min_period)
    return SchedulePlan(tuple(walk), tuple(float(w) for w in weights), float(period),
                        float(min_period), bool(caps), switching_branch)


def _impulse_spacing(direction: str, t_j: float, style: str, rng: np.random.Generator) -> float:
    if style == PERIODIC:
        return (1.1 if direction == UPPER else 0.9) * t_j
    if direction == UPPER:
        return rng.uniform(1.05, 2.0) * t_j
    return rng.uniform(0.5, 0.95) * t_j


def _build_signal(plan: SchedulePlan, period: float, profile: ConstraintProfile, horizon: float,
                  style: str, rng: np.random.Generator, impulse_modes: Set[int]) -> HybridSignal:
    horizon_ticks = to_ticks(horizon)
    walk = plan.walk
    offset_visit = int(rng.integers(len(walk)))
    order = walk[offset_visit:] + walk[:offset_visit]
    weights = plan.weights[offset_visit:] + plan.weights[:offset_visit]

    spacing: Dict[int, Tuple[str, float]] = {}
    next_clock: Dict[int, int] = {}
    for mode, adt in profile.impulse_adt.items():
        if mode in impulse_modes and math.isfinite(adt.t_j):
            first = _impulse_spacing(adt.direction, adt.t_j, style, rng)
            spacing[mode] = (adt.direction, adt.t_j)
            next_clock[mode] = max(1, to_ticks(rng.uniform(0.0, 1.0) * first))
    clock = {m: 0 for m in set(walk)}

    if style == RANDOMIZED:
        lo = max(0.7, plan.min_period / period if period > 0 else 0.7)
        hi = 1.0 if plan.capped else 1.3
        lo = min(lo, hi)

    event_ticks: List[int] = []
    post_modes: List[int] = []
    scale = rng.uniform(lo, hi) if style == RANDOMIZED else 1.0
    # offset inside the first dwell: order[0] runs at t = 0
    time_units = -rng.uniform(0.0, 0.9) * weights[0] * period * scale if len(walk) > 1 else 0.0
    start_tick = 0
    first_cycle = True
    while start_tick < horizon_ticks:
        if not first_cycle and style == RANDOMIZED:
            scale = rng.uniform(lo, hi)
        first_cycle = False
        for k, mode in enumerate(order):
            time_units += weights[k] * period * scale
            end_tick = to_ticks(time_units) if len(walk) > 1 else horizon_ticks
            # at least one tick per visit
            end_tick = max(end_tick, start_tick + 1)
            end_tick = min(end_tick, horizon_ticks + 1)
            length = end_tick - start_tick
            if mode in spacing:
                c0 = clock[mode]
                direction, t_j = spacing[mode]
                while next_clock[mode] < c0 + length:
                    tick = start_tick + max(next_clock[mode] - c0, 1)
                    if tick >= end_tick:
                        tick = end_tick - 1
                    if tick > start_tick and tick < horizon_ticks and \
                            (not event_ticks or tick > event_ticks[-1]):
                        event_ticks.append(tick)
                        post_modes.append(mode)
                    next_clock[mode] += max(1, to_ticks(_impulse_spacing(direction, t_j, style, rng)))
            clock[mode] = clock.get(mode, 0) + length
            if end_tick >= horizon_ticks:
                start_tick = end_tick
                break
            event_ticks.append(end_tick)
            post_modes.append(order[(k + 1) % len(order)])
            start_tick = end_tick
        if len(walk) == 1:
            break
    return HybridSignal(order[0], tuple(event_ticks), tuple(post_modes), horizon_ticks)


def generate_signal(profile: ConstraintProfile, graph: JumpGraph, horizon: float, seed: int,
                    style: str = PERIODIC, switching_branch: Optional[str] = None,
                    impulse_modes: Optional[Set[int]] = None) -> HybridSignal:
    """Admissible hybrid signal over [0, horizon].

    impulse_modes limits which modes may receive self impulses (default:
    every mode with a finite impulse period). Modes with a lower impulse bound
    always receive them.
    """
    if style not in (PERIODIC, RANDOMIZED):
        raise SimulatorError(f"unknown signal style: {style}")
    if horizon < 0:
        raise SimulatorError("horizon must be nonnegative")
    if impulse_modes is None:
        impulse_modes = set(profile.impulse_adt)
    impulse_modes = set(impulse_modes) | {m for m, a in profile.impulse_adt.items() if a.direction == LOWER}

    plan = plan_schedule(profile, graph, switching_branch)
    period = plan.period
    report = None
    for _ in range(REPAIR_ATTEMPTS):
        rng = make_rng(seed)
        signal = _build_signal(plan, period, profile, horizon, style, rng, impulse_modes)
        report = audit_signal(signal, profile, graph, switching_branch=plan.branch)
        if report.passed:
            return signal
        period *= REPAIR_FACTOR
        if period < plan.min_period:
            break
    failed = ', '.join(report.failures()) if report is not None else 'unknown'
    raise SimulatorError(f"could not realise an admissible signal (violated: {failed})")


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HybridTrajectory:
    """Samples with two rows per event (left limit, then value)."""
    times: np.ndarray
    states: np.ndarray
    modes: np.ndarray
    n_nu: np.ndarray
    n_mu: np.ndarray
    signal: HybridSignal
    t0: float
    diverged: bool = False

    @property
    def x0(self) -> np.ndarray:
        return self.states[0]

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    @property
    def jump_counts(self) -> np.ndarray:
        return self.n_nu + self.n_mu

    def strong_time(self) -> np.ndarray:
        """t - t0 + n(t, t0) per sample."""
        return self.times - self.t0 + self.jump_counts


def _rk4_step(flow, t: float, x: np.ndarray, h: float, u: InputSignal) -> np.ndarray:
    k1 = flow(t, x, u(t))
    k2 = flow(t + h / 2, x + h / 2 * k1, u(t + h / 2))
    k3 = flow(t + h / 2, x + h / 2 * k2, u(t + h / 2))
    k4 = flow(t + h, x + h * k3, u(t + h))
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate(system: SwitchedImpulsiveSystem, signal: HybridSignal, x0, t0: float = 0.0,
             step: float = 0.01, u: Optional[InputSignal] = None) -> HybridTrajectory:
    """Integrate flows between events and apply jumps at events.

    Linear flows use the matrix exponential of each segment; perturbed flows
    use classical RK4 with steps aligned to the segment. Events at t0 are not
    applied: the solution starts with a flow.
    """
    if step <= 0:
        raise SimulatorError("step must be positive")
    u = u or InputSignal()
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (system.dimension,):
        raise SimulatorError(f"x0 must have {system.dimension} entries")
    start_tick = to_ticks(t0)
    if start_tick > signal.horizon_ticks:
        raise SimulatorError("t0 is after the horizon")

    events = [(tick, post, kind) for tick, post, kind in zip(signal.event_ticks, signal.post_modes, signal.kinds)
              if tick > start_tick]
    mode = signal.mode_at(t0)
    cache: Dict[Tuple[int, int], np.ndarray] = {}

    times = [start_tick / TICKS_PER_UNIT]
    states = [x.copy()]
    modes = [mode]
    n_nu = [0]
    n_mu = [0]
    count_nu = count_mu = 0
    diverged = False

    def flow_segment(seg_start: int, seg_end: int) -> bool:
        nonlocal x
        length = seg_end - seg_start
        if length <= 0:
            return True
        span = length / TICKS_PER_UNIT
        substeps = max(MIN_SUBSTEPS, int(math.ceil(span / step - 1e-12)))
        h = span / substeps
        flow = system.flows[mode - 1]
        x_start = x.copy()
        if isinstance(flow, PerturbedLinearFlow):
            t = seg_start / TICKS_PER_UNIT
            for k in range(1, substeps + 1):
                x = _rk4_step(flow, t + (k - 1) * h, x, h, u)
                if not _record(t + k * h if k < substeps else seg_end / TICKS_PER_UNIT):
                    return False
            return True
        key = (mode, length)
        if key not in cache:
            A = np.asarray(flow, dtype=float)
            cache[key] = (expm(A * h), expm(A * span))
        sub, whole = cache[key]
        for k in range(1, substeps):
            x = sub @ x
            if not _record(seg_start / TICKS_PER_UNIT + k * h):
                return False
        x = whole @ x_start
        return _record(seg_end / TICKS_PER_UNIT)

    def _record(t: float) -> bool:
        nonlocal diverged
        times.append(t)
        states.append(x.copy())
        modes.append(mode)
        n_nu.append(count_nu)
        n_mu.append(count_mu)
        norm = np.linalg.norm(x)
        if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
            diverged = True
            return False
        return True

    cursor = start_tick
    alive = True
    for tick, post, kind in events:
        if not flow_segment(cursor, tick):
            alive = False
            break
        x = system.jump_matrix(mode, post) @ x
        if kind == SWITCH:
            count_nu += 1
        else:
            count_mu += 1
        mode = post
        cursor = tick
        if not _record(tick / TICKS_PER_UNIT):
            alive = False
            break
    if alive:
        flow_segment(cursor, signal.horizon_ticks)

    return HybridTrajectory(np.asarray(times), np.asarray(states), np.asarray(modes, dtype=int),
                            np.asarray(n_nu, dtype=float), np.asarray(n_mu, dtype=float),
                            signal, t0, diverged)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

Bound = Union[Certificate, CombinedBound]


def bound_values(trajectory: HybridTrajectory, bound: Bound) -> np.ndarray:
    """Envelope value at every sample for the trajectory's own |x0|."""
    r = float(np.linalg.norm(trajectory.x0))
    s = trajectory.strong_time()
    if isinstance(bound, CombinedBound):
        return bound(r, s)
    return bound.envelope(s, r)


def verify_bound(trajectory: HybridTrajectory, bound: Bound) -> float:
    """Largest |x(t)| / envelope over all samples, both sides of every event."""
    norms = trajectory.norms
    if norms[0] == 0:
        return 0.0 if not np.any(norms) else math.inf
    if isinstance(bound, CombinedBound):
        log_env = np.log(bound(1.0, trajectory.strong_time())) + math.log(norms[0])
    else:
        log_env = math.log(bound.K) - bound.lam * trajectory.strong_time() + math.log(norms[0])
    with np.errstate(divide='ignore'):
        log_ratio = np.log(norms) - log_env
    return float(np.exp(np.max(log_ratio)))


def lyapunov_functional_check(trajectory: HybridTrajectory, lyap: LyapunovData) -> float:
    """Largest w(t) / (exp(int lam + sum ln r) w(t0)) along the samples.

    w(t) = V_nu(t)(x(t)); the exponent adds lam_bar(mode) over flow time and
    ln r_bar(pre, post) at every event.
    """
    w = np.array([lyap.V(int(m), x) for m, x in zip(trajectory.modes, trajectory.states)])
    if w[0] == 0:
        return 0.0 if not np.any(w) else math.inf
    exponent = np.zeros(len(w))
    for k in range(1, len(w)):
        previous = int(trajectory.modes[k - 1])
        dt = trajectory.times[k] - trajectory.times[k - 1]
        if dt > 0:
            exponent[k] = exponent[k - 1] + lyap.lam(previous) * dt
        else:
            exponent[k] = exponent[k - 1] + math.log(lyap.r(previous, int(trajectory.modes[k])))
    with np.errstate(divide='ignore'):
        log_ratio = np.log(w) - exponent - math.log(w[0])
    return float(np.exp(np.max(log_ratio)))


@dataclass(frozen=True)
class PerturbationBound:
    """Per-mode coefficient a_i and trig phase of the affine-in-|x| bound."""
    gain: float
    phase: str = 'sin'

    def theta(self, t: np.ndarray, n_tilde: float) -> np.ndarray:
        trig = np.sin(t) if self.phase == 'sin' else np.cos(t)
        return np.maximum(self.gain * (1.0 + trig) - n_tilde, 0.0)


def theta_deficit(bounds: Sequence[PerturbationBound], n_tilde: float, horizon: float,
                  signal: Optional[HybridSignal] = None, points_per_unit: int = 1000) -> float:
    """Accumulated deficit of theta^i(t) = max{a_i (1 + trig t) - N, 0}.

    With a signal the active mode's theta is integrated and added at every
    event time; without one the pointwise maximum over modes is integrated.
    """
    if horizon <= 0:
        return 0.0
    grid = np.linspace(0.0, horizon, max(2, int(math.ceil(horizon * points_per_unit)) + 1))
    if signal is None:
        values = np.max([b.theta(grid, n_tilde) for b in bounds], axis=0)
        return float(trapezoid(values, grid))

    events = signal.event_times
    grid = np.union1d(grid, events[events <= horizon])
    idx = np.searchsorted(np.asarray(signal.event_ticks), np.rint(grid * TICKS_PER_UNIT), side='right')
    modes = np.array([signal.initial_mode] + list(signal.post_modes))[idx]
    values = np.zeros_like(grid)
    for mode in np.unique(modes):
        sel = modes == mode
        values[sel] = bounds[mode - 1].theta(grid[sel], n_tilde)
    total = float(trapezoid(values, grid))
    for tick, post in zip(signal.event_ticks, signal.post_modes):
        if tick <= to_ticks(horizon):
            total += float(bounds[post - 1].theta(np.array([tick / TICKS_PER_UNIT]), n_tilde)[0])
    return total
