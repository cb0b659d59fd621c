"""
Data model for switched impulsive systems.

Holds the jump graph, the flow/jump maps, the constraint profile (impulse
ADT, switching ADT, activation groups) and hybrid signals with their event
counters. Event times are stored as integer ticks so that counting over the
half-open interval (t0, t] never depends on floating-point rounding.

Modes are 1-based everywhere.
"""

import json
import math
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

TICKS_PER_UNIT = 1_000_000

UPPER = 'upper'
LOWER = 'lower'

SWITCH = 'switch'
SELF_IMPULSE = 'self_impulse'


class ModelError(Exception):
    pass


class SpecFormatError(ModelError):
    """Problem in a system specification file.

    Carries either a line/column (JSON syntax) or a field path (schema).
    """

    def __init__(self, message: str, line: Optional[int] = None,
                 column: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.column = column
        self.path = path
        location = ''
        if line is not None:
            location = f"line {line}, column {column}: "
        elif path:
            location = f"{path}: "
        super().__init__(f"{location}{message}")


def to_ticks(t: float) -> int:
    return int(round(float(t) * TICKS_PER_UNIT))


def from_ticks(ticks: int) -> float:
    return ticks / TICKS_PER_UNIT


# ---------------------------------------------------------------------------
# Systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JumpGraph:
    mode_count: int
    edges: frozenset
    self_loops: frozenset = frozenset()

    @property
    def modes(self) -> range:
        return range(1, self.mode_count + 1)

    def successors(self, mode: int) -> List[int]:
        return sorted(j for (i, j) in self.edges if i == mode)

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self.edges


@dataclass(frozen=True)
class InputSignal:
    """Exogenous scalar input u(t) for perturbed flows."""
    kind: str = 'zero'
    amplitude: float = 0.0
    frequency: float = 1.0

    def __call__(self, t: float) -> float:
        if self.kind == 'zero':
            return 0.0
        if self.kind == 'constant':
            return self.amplitude
        if self.kind == 'sinusoid':
            return self.amplitude * math.sin(self.frequency * t)
        raise ModelError(f"Unknown input kind: {self.kind}")


@dataclass(frozen=True)
class PerturbedLinearFlow:
    """Flow x' = A x + phi(t, x, u)·1 with

        phi(t, x, u) = gain·(1 + trig(t))·|x| + (quad_state·|x| + quad_const)·u² + linear_input·u

    where trig is sin or cos. The scalar phi is added to every component.
    """
    matrix: np.ndarray
    gain: float = 0.0
    phase: str = 'sin'
    quad_state: float = 0.0
    quad_const: float = 0.0
    linear_input: float = 0.0

    def perturbation(self, t: float, x: np.ndarray, u: float) -> float:
        trig = math.sin(t) if self.phase == 'sin' else math.cos(t)
        norm = float(np.linalg.norm(x))
        return (self.gain * (1.0 + trig) * norm
                + (self.quad_state * norm + self.quad_const) * u * u
                + self.linear_input * u)

    def __call__(self, t: float, x: np.ndarray, u: float = 0.0) -> np.ndarray:
        return self.matrix @ x + self.perturbation(t, x, u)


Flow = Union[np.ndarray, PerturbedLinearFlow]


@dataclass(frozen=True)
class SwitchedImpulsiveSystem:
    dimension: int
    flows: Tuple[Flow, ...]
    jumps: Dict[Tuple[int, int], np.ndarray]
    graph: JumpGraph
    name: str = ''

    @property
    def mode_count(self) -> int:
        return self.graph.mode_count

    def flow_matrix(self, mode: int) -> np.ndarray:
        """Linear part of the flow of a mode."""
        flow = self.flows[mode - 1]
        if isinstance(flow, PerturbedLinearFlow):
            return flow.matrix
        return flow

    def is_linear(self, mode: Optional[int] = None) -> bool:
        modes = [mode] if mode is not None else list(self.graph.modes)
        return all(not isinstance(self.flows[i - 1], PerturbedLinearFlow) for i in modes)

    def jump_matrix(self, i: int, j: int) -> np.ndarray:
        """Jump map for (i, j). Self jumps default to the identity."""
        if (i, j) in self.jumps:
            return self.jumps[(i, j)]
        if i == j:
            return np.eye(self.dimension)
        raise ModelError(f"No jump map for edge ({i},{j})")

    def has_identity_self_jump(self, mode: int) -> bool:
        return np.array_equal(self.jump_matrix(mode, mode), np.eye(self.dimension))

    def has_identity_self_jumps(self) -> bool:
        return all(self.has_identity_self_jump(i) for i in self.graph.modes)


# ---------------------------------------------------------------------------
# Constraint profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImpulseADT:
    """n(i,t,t0) <= / >= n0 + t_a(i,t,t0)/t_j, depending on direction."""
    n0: float
    t_j: float
    direction: str


@dataclass(frozen=True)
class SwitchingPair:
    n0: float
    t_s: float


@dataclass(frozen=True)
class SwitchingADT:
    upper: Optional[SwitchingPair] = None
    lower: Optional[SwitchingPair] = None

    @property
    def declared(self) -> bool:
        return self.upper is not None or self.lower is not None


@dataclass(frozen=True)
class ActivationGroup:
    modes: Tuple[int, ...]
    n_a: float
    t_a: float
    direction: Optional[str]


@dataclass(frozen=True)
class ConstraintProfile:
    impulse_adt: Dict[int, ImpulseADT] = field(default_factory=dict)
    switching_adt: SwitchingADT = field(default_factory=SwitchingADT)
    activation_groups: Tuple[ActivationGroup, ...] = ()

    def impulse_period(self, mode: int) -> float:
        adt = self.impulse_adt.get(mode)
        return adt.t_j if adt is not None else math.inf

    def effective_groups(self, mode_count: int) -> Tuple[ActivationGroup, ...]:
        """Declared groups, or one group holding every mode (N_a=1, T_a=0)."""
        if self.activation_groups:
            return self.activation_groups
        return (ActivationGroup(tuple(range(1, mode_count + 1)), 1.0, 0.0, None),)


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[str, ...] = ()
    warnings: Tuple[str, ...] = ()

    @property
    def is_valid(self) -> bool:
        return not self.violations


def validate_system(system: SwitchedImpulsiveSystem, profile: ConstraintProfile) -> ValidationReport:
    violations = []
    warnings = []
    graph = system.graph
    n = system.dimension
    N = graph.mode_count

    if N < 1:
        violations.append("mode_count must be positive")
    if n < 1:
        violations.append("dimension must be positive")

    for (i, j) in sorted(graph.edges):
        if not (1 <= i <= N and 1 <= j <= N):
            violations.append(f"edge ({i},{j}) has an endpoint outside 1..{N}")
        if i == j:
            violations.append(f"edge ({i},{j}) is a self loop; self jumps belong to self_loops")
        if (i, j) not in system.jumps:
            violations.append(f"missing jump map for edge ({i},{j})")
    for i in sorted(graph.self_loops):
        if not 1 <= i <= N:
            violations.append(f"self loop {i} outside 1..{N}")
        elif (i, i) not in system.jumps:
            violations.append(f"missing jump map for self loop ({i},{i})")

    if len(system.flows) != N:
        violations.append(f"expected {N} flow maps, got {len(system.flows)}")
    for idx, flow in enumerate(system.flows, start=1):
        matrix = flow.matrix if isinstance(flow, PerturbedLinearFlow) else flow
        if np.shape(matrix) != (n, n):
            violations.append(f"flow matrix of mode {idx} is not {n}x{n}")
    for (i, j), J in sorted(system.jumps.items()):
        if np.shape(J) != (n, n):
            violations.append(f"jump matrix ({i},{j}) is not {n}x{n}")

    for mode, adt in sorted(profile.impulse_adt.items()):
        if not 1 <= mode <= N:
            violations.append(f"impulse_adt for unknown mode {mode}")
        if not (adt.t_j > 0):
            violations.append(f"impulse_adt mode {mode}: T_J must be positive or inf")
        if adt.direction == UPPER and adt.n0 < 1:
            violations.append(f"impulse_adt mode {mode}: sign convention requires N0 >= 1 on upper bounds")
        elif adt.direction == LOWER and adt.n0 > -1:
            violations.append(f"impulse_adt mode {mode}: sign convention requires N0 <= -1 on lower bounds")
        elif adt.direction not in (UPPER, LOWER):
            violations.append(f"impulse_adt mode {mode}: direction must be upper or lower")

    upper = profile.switching_adt.upper
    lower = profile.switching_adt.lower
    if upper is not None and (upper.n0 < 1 or not upper.t_s > 0 or math.isinf(upper.t_s)):
        violations.append("switching_adt upper: sign convention requires N0 >= 1 and finite T_S > 0")
    if lower is not None and (lower.n0 > -1 or not lower.t_s > 0):
        violations.append("switching_adt lower: sign convention requires N0 <= -1 and T_S > 0")

    groups = profile.activation_groups
    if groups:
        seen: List[int] = []
        for k, group in enumerate(groups, start=1):
            seen.extend(group.modes)
            if group.n_a < 0:
                violations.append(f"activation group {k}: N_a must be nonnegative")
            if group.direction == UPPER and group.t_a < 0:
                violations.append(f"activation group {k}: sign convention requires T_a >= 0 on upper groups")
            elif group.direction == LOWER and group.t_a > 0:
                violations.append(f"activation group {k}: sign convention requires T_a <= 0 on lower groups")
            elif group.direction not in (UPPER, LOWER):
                violations.append(f"activation group {k}: direction must be upper or lower")
        if sorted(seen) != list(range(1, N + 1)):
            violations.append("activation groups must partition the modes 1..N")
        if not math.isclose(sum(g.t_a for g in groups), 0.0, abs_tol=1e-12):
            warnings.append("activation groups: sum of T_a is not 0")
        if not math.isclose(sum(g.n_a for g in groups), 1.0, abs_tol=1e-12):
            warnings.append("activation groups: sum of N_a is not 1")

    return ValidationReport(tuple(violations), tuple(warnings))


# ---------------------------------------------------------------------------
# Hybrid signals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HybridSignal:
    """Switching signal plus nonswitching impulse times over [0, horizon].

    post_modes[k] is the mode right after event k; kinds[k] is SWITCH when it
    differs from the mode before the event, SELF_IMPULSE otherwise.
    """
    initial_mode: int
    event_ticks: Tuple[int, ...]
    post_modes: Tuple[int, ...]
    horizon_ticks: int
    kinds: Tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.event_ticks) != len(self.post_modes):
            raise ModelError("event_ticks and post_modes differ in length")
        previous = 0
        for tick in self.event_ticks:
            if tick <= previous:
                raise ModelError("event times must be positive and strictly increasing")
            previous = tick
        if self.event_ticks and self.event_ticks[-1] > self.horizon_ticks:
            raise ModelError("event after the horizon")
        kinds = []
        mode = self.initial_mode
        for post in self.post_modes:
            kinds.append(SWITCH if post != mode else SELF_IMPULSE)
            mode = post
        if self.kinds and tuple(self.kinds) != tuple(kinds):
            raise ModelError("event kinds do not match the mode sequence")
        object.__setattr__(self, 'kinds', tuple(kinds))

    @classmethod
    def from_times(cls, initial_mode: int, times: Sequence[float], post_modes: Sequence[int],
                   horizon: float) -> 'HybridSignal':
        return cls(initial_mode, tuple(to_ticks(t) for t in times), tuple(int(m) for m in post_modes),
                   to_ticks(horizon))

    @property
    def horizon(self) -> float:
        return self.horizon_ticks / TICKS_PER_UNIT

    @property
    def event_times(self) -> np.ndarray:
        return np.asarray(self.event_ticks, dtype=float) / TICKS_PER_UNIT

    def pre_modes(self) -> Tuple[int, ...]:
        return (self.initial_mode,) + tuple(self.post_modes[:-1]) if self.post_modes else ()

    def mode_at(self, t: float) -> int:
        """Right-continuous mode value nu(t)."""
        idx = int(np.searchsorted(np.asarray(self.event_ticks), to_ticks(t), side='right'))
        return self.initial_mode if idx == 0 else self.post_modes[idx - 1]

    def switch_edges(self) -> List[Tuple[int, int]]:
        return [(pre, post) for pre, post, kind in zip(self.pre_modes(), self.post_modes, self.kinds)
                if kind == SWITCH]

    def inadmissible_switches(self, graph: JumpGraph) -> List[Tuple[float, int, int]]:
        bad = []
        for tick, pre, post, kind in zip(self.event_ticks, self.pre_modes(), self.post_modes, self.kinds):
            if kind == SWITCH and not graph.has_edge(pre, post):
                bad.append((tick / TICKS_PER_UNIT, pre, post))
        return bad


@dataclass(frozen=True)
class SignalCounters:
    n_nu: int
    n_mu: int
    n_mode: Dict[int, int]
    t_a: Dict[int, float]

    @property
    def n(self) -> int:
        return self.n_nu + self.n_mu


def signal_counters(signal: HybridSignal, t0: float, t: float,
                    mode_count: Optional[int] = None) -> SignalCounters:
    """Counts over (t0, t] and activation times over [t0, t]."""
    lo, hi = to_ticks(t0), to_ticks(t)
    if hi < lo:
        raise ModelError(f"t={t} is before t0={t0}")
    if lo < 0:
        raise ModelError("t0 must be nonnegative")
    modes_seen = {signal.initial_mode, *signal.post_modes}
    N = mode_count or max(modes_seen)
    n_mode = {i: 0 for i in range(1, N + 1)}
    active = {i: 0 for i in range(1, N + 1)}
    n_nu = 0

    mode = signal.initial_mode
    cursor = 0
    for tick, post, kind in zip(signal.event_ticks, signal.post_modes, signal.kinds):
        seg_lo, seg_hi = max(cursor, lo), min(tick, hi)
        if seg_hi > seg_lo:
            active[mode] += seg_hi - seg_lo
        if lo < tick <= hi:
            if kind == SWITCH:
                n_nu += 1
            else:
                n_mode[mode] += 1
        mode, cursor = post, tick
        if cursor >= hi:
            break
    if hi > max(cursor, lo):
        active[mode] += hi - max(cursor, lo)

    n_mu = sum(n_mode.values())
    t_a = {i: active[i] / TICKS_PER_UNIT for i in active}
    return SignalCounters(n_nu, n_mu, n_mode, t_a)


@dataclass(frozen=True)
class Staircase:
    """Cumulative counters from time 0 at every event-aligned breakpoint.

    Each event contributes two points: its left limit (event not yet
    counted) and its value (event counted). Counts over (t0, t] for any pair
    of points p <= q are the differences cum[q] - cum[p].
    """
    ticks: np.ndarray
    n_nu: np.ndarray
    n_mu: np.ndarray
    n_mode: np.ndarray      # (points, modes)
    t_a: np.ndarray         # (points, modes), in time units

    @property
    def time(self) -> np.ndarray:
        return self.ticks.astype(float) / TICKS_PER_UNIT

    def pair_differences(self, values: np.ndarray) -> np.ndarray:
        """Upper-triangular matrix D[p, q] = values[q] - values[p] (q >= p)."""
        return values[None, :] - values[:, None]

    def upper_mask(self) -> np.ndarray:
        size = len(self.ticks)
        return np.triu(np.ones((size, size), dtype=bool))


def signal_staircase(signal: HybridSignal, mode_count: int) -> Staircase:
    ticks = [0]
    n_nu = [0]
    n_mu = [0]
    n_mode = [np.zeros(mode_count, dtype=int)]
    t_a = [np.zeros(mode_count, dtype=np.int64)]

    mode = signal.initial_mode
    for tick, post, kind in zip(signal.event_ticks, signal.post_modes, signal.kinds):
        active = t_a[-1].copy()
        active[mode - 1] += tick - ticks[-1]
        # left limit
        ticks.append(tick)
        n_nu.append(n_nu[-1])
        n_mu.append(n_mu[-1])
        n_mode.append(n_mode[-1].copy())
        t_a.append(active)
        # value at the event
        counts = n_mode[-1].copy()
        if kind == SWITCH:
            n_nu.append(n_nu[-1] + 1)
            n_mu.append(n_mu[-1])
        else:
            n_nu.append(n_nu[-1])
            n_mu.append(n_mu[-1] + 1)
            counts[mode - 1] += 1
        ticks.append(tick)
        n_mode.append(counts)
        t_a.append(active.copy())
        mode = post

    if signal.horizon_ticks > ticks[-1]:
        active = t_a[-1].copy()
        active[mode - 1] += signal.horizon_ticks - ticks[-1]
        ticks.append(signal.horizon_ticks)
        n_nu.append(n_nu[-1])
        n_mu.append(n_mu[-1])
        n_mode.append(n_mode[-1].copy())
        t_a.append(active)

    return Staircase(
        ticks=np.asarray(ticks, dtype=np.int64),
        n_nu=np.asarray(n_nu, dtype=float),
        n_mu=np.asarray(n_mu, dtype=float),
        n_mode=np.asarray(n_mode, dtype=float),
        t_a=np.asarray(t_a, dtype=float) / TICKS_PER_UNIT,
    )


def from_discrete_switched(step_maps: Sequence[np.ndarray],
                           mode_schedule: Sequence[int]) -> Tuple[SwitchedImpulsiveSystem, HybridSignal]:
    """Embed x_{k+1} = h_{zeta(k)}(x_k) as a switched impulsive system.

    Flows are zero, every jump map g_{i,j} is h_i and events sit at 1..K where
    K is the schedule length; x(K) is the K-th iterate.
    """
    if not mode_schedule:
        raise ModelError("empty mode schedule")
    maps = [np.asarray(h, dtype=float) for h in step_maps]
    N = len(maps)
    n = maps[0].shape[0]
    schedule = [int(m) for m in mode_schedule]
    if any(not 1 <= m <= N for m in schedule):
        raise ModelError("schedule refers to an unknown mode")

    edges = frozenset((i, j) for i in range(1, N + 1) for j in range(1, N + 1) if i != j)
    loops = frozenset(range(1, N + 1))
    jumps = {(i, j): maps[i - 1] for i in range(1, N + 1) for j in range(1, N + 1)}
    graph = JumpGraph(N, edges, loops)
    system = SwitchedImpulsiveSystem(n, tuple(np.zeros((n, n)) for _ in range(N)), jumps, graph,
                                     name='discrete-embedding')

    K = len(schedule)
    post_modes = [schedule[k] if k < K else schedule[K - 1] for k in range(1, K + 1)]
    signal = HybridSignal(schedule[0], tuple(k * TICKS_PER_UNIT for k in range(1, K + 1)),
                          tuple(post_modes), K * TICKS_PER_UNIT)
    return system, signal


# ---------------------------------------------------------------------------
# Specification files
# ---------------------------------------------------------------------------

def _number(value, path: str) -> float:
    if isinstance(value, bool):
        raise SpecFormatError("expected a number", path=path)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ('inf', '+inf', 'infinity'):
            return math.inf
        if text in ('-inf', '-infinity'):
            return -math.inf
        try:
            return float(Decimal(text))
        except InvalidOperation:
            raise SpecFormatError(f"not a decimal number: {value!r}", path=path)
    raise SpecFormatError("expected a number", path=path)


def _matrix(value, n: int, path: str) -> np.ndarray:
    if isinstance(value, str) and value.strip().lower() == 'identity':
        return np.eye(n)
    if not isinstance(value, list) or len(value) != n:
        raise SpecFormatError(f"expected a {n}x{n} matrix", path=path)
    rows = []
    for r, row in enumerate(value):
        if not isinstance(row, list) or len(row) != n:
            raise SpecFormatError(f"expected a {n}x{n} matrix", path=f"{path}[{r}]")
        rows.append([_number(v, f"{path}[{r}][{c}]") for c, v in enumerate(row)])
    return np.array(rows, dtype=float)


def _mode_index(value, N: int, path: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= N:
        raise SpecFormatError(f"mode index must be an integer in 1..{N}", path=path)
    return value


@dataclass(frozen=True)
class SystemSpec:
    """Parsed specification file."""
    system: SwitchedImpulsiveSystem
    profile: ConstraintProfile
    lyapunov: Dict
    certify: Dict
    perturbation_check: Dict
    raw: Dict
    path: str = ''


def parse_system_spec(document: Dict, path: str = '') -> SystemSpec:
    if not isinstance(document, dict):
        raise SpecFormatError("top level must be an object", path='$')
    if 'dimension' not in document or 'modes' not in document:
        raise SpecFormatError("'dimension' and 'modes' are required", path='$')
    n = document['dimension']
    if not isinstance(n, int) or n < 1:
        raise SpecFormatError("must be a positive integer", path='$.dimension')
    modes = document['modes']
    if not isinstance(modes, list) or not modes:
        raise SpecFormatError("must be a nonempty list", path='$.modes')
    N = len(modes)

    flows: List[Flow] = []
    for idx, entry in enumerate(modes):
        where = f"$.modes[{idx}]"
        if isinstance(entry, dict):
            A = _matrix(entry.get('A'), n, f"{where}.A")
            pert = entry.get('perturbation')
            if pert:
                quad = pert.get('input_quadratic', [0, 0])
                flows.append(PerturbedLinearFlow(
                    matrix=A,
                    gain=_number(pert.get('gain', 0), f"{where}.perturbation.gain"),
                    phase=pert.get('phase', 'sin'),
                    quad_state=_number(quad[0], f"{where}.perturbation.input_quadratic[0]"),
                    quad_const=_number(quad[1], f"{where}.perturbation.input_quadratic[1]"),
                    linear_input=_number(pert.get('input_linear', 0), f"{where}.perturbation.input_linear"),
                ))
            else:
                flows.append(A)
        else:
            flows.append(_matrix(entry, n, where))

    jumps: Dict[Tuple[int, int], np.ndarray] = {}
    edges = set()
    for idx, entry in enumerate(document.get('edges', [])):
        where = f"$.edges[{idx}]"
        if not isinstance(entry, list) or len(entry) != 3:
            raise SpecFormatError("expected [i, j, J]", path=where)
        i = _mode_index(entry[0], N, f"{where}[0]")
        j = _mode_index(entry[1], N, f"{where}[1]")
        edges.add((i, j))
        jumps[(i, j)] = _matrix(entry[2], n, f"{where}[2]")

    loops = set()
    for idx, entry in enumerate(document.get('self_jumps', [])):
        where = f"$.self_jumps[{idx}]"
        if not isinstance(entry, list) or len(entry) != 2:
            raise SpecFormatError("expected [i, J]", path=where)
        i = _mode_index(entry[0], N, f"{where}[0]")
        loops.add(i)
        jumps[(i, i)] = _matrix(entry[1], n, f"{where}[1]")

    graph = JumpGraph(N, frozenset(edges), frozenset(loops))
    system = SwitchedImpulsiveSystem(n, tuple(flows), jumps, graph, name=document.get('name', ''))
    profile = parse_constraints(document.get('constraints', {}), N)
    return SystemSpec(system, profile, document.get('lyapunov', {}) or {}, document.get('certify', {}) or {},
                      document.get('perturbation_check', {}) or {}, document, path)


def parse_constraints(section: Dict, N: int) -> ConstraintProfile:
    impulse = {}
    for idx, entry in enumerate(section.get('impulse_adt', [])):
        where = f"$.constraints.impulse_adt[{idx}]"
        mode = _mode_index(entry.get('mode'), N, f"{where}.mode")
        impulse[mode] = ImpulseADT(_number(entry.get('N0'), f"{where}.N0"),
                                   _number(entry.get('TJ', 'inf'), f"{where}.TJ"),
                                   entry.get('direction', ''))
    switching = section.get('switching_adt', {}) or {}
    pairs = {}
    for key in (UPPER, LOWER):
        if switching.get(key):
            where = f"$.constraints.switching_adt.{key}"
            pairs[key] = SwitchingPair(_number(switching[key].get('N0'), f"{where}.N0"),
                                       _number(switching[key].get('TS', 'inf'), f"{where}.TS"))
    groups = []
    for idx, entry in enumerate(section.get('activation_groups', [])):
        where = f"$.constraints.activation_groups[{idx}]"
        members = tuple(_mode_index(m, N, f"{where}.modes") for m in entry.get('modes', []))
        groups.append(ActivationGroup(members, _number(entry.get('Na'), f"{where}.Na"),
                                      _number(entry.get('Ta'), f"{where}.Ta"), entry.get('direction')))
    return ConstraintProfile(impulse, SwitchingADT(pairs.get(UPPER), pairs.get(LOWER)), tuple(groups))


def load_system_spec(path: str) -> SystemSpec:
    text = Path(path).read_text(encoding='utf-8')
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecFormatError(e.msg, line=e.lineno, column=e.colno)
    return parse_system_spec(document, str(path))
