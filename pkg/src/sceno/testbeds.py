"""Deterministic desk-scale traffic simulators with independent ground truth.

Two scenarios are shipped, both point-mass kinematics integrated by explicit
Euler:

* ``braking``  — the ego car follows a decelerating lead vehicle on a straight
  road; the measure is the bumper gap in meters.
* ``crossing`` — a pedestrian cuts across the ego car's lane; the measure is
  the Euclidean separation in meters.

The braking scenario additionally has a closed-form continuous-time minimum
gap (:func:`analytic_min_gap`) used as an oracle to validate the integrator
and everything built on top of it. Negative gaps are recorded, not raised:
they encode collision severity and keep the fitness landscape informative
for surrogate learning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .scenario import BlackBox, MeasureTrace, ParamDef, ParamSpace, fitness_of_trace

# Half width of the ego travel corridor; a pedestrian inside it makes the
# crossing ego brake (after its reaction delay).
LANE_HALF_WIDTH = 2.0

# Ego speed is held fixed in the builtin testbeds so the stopping-distance
# geometry stays analyzable; the searchable dimensions are the scenario's.
DEFAULT_EGO_SPEED = 10.0


@dataclass(frozen=True)
class BrakingScenarioParams:
    """Physical parameters of the emergency-braking scenario."""

    npc_speed: float    # lead vehicle initial speed, m/s
    npc_decel: float    # lead vehicle braking rate, m/s^2
    init_gap: float     # initial bumper gap, m
    ego_speed: float    # ego initial speed, m/s
    trigger_gap: float  # gap at which the ego controller reacts, m

    def __post_init__(self):
        if self.npc_speed < 0 or self.ego_speed < 0:
            raise ContractViolation("speeds must be >= 0")
        if self.npc_decel <= 0:
            raise ContractViolation("npc_decel must be > 0")
        if self.init_gap <= 0:
            raise ContractViolation("init_gap must be > 0")
        if self.trigger_gap <= 0:
            raise ContractViolation("trigger_gap must be > 0")


@dataclass(frozen=True)
class CrossingScenarioParams:
    """Physical parameters of the pedestrian-crossing scenario."""

    ped_speed: float       # walking speed once triggered, m/s
    lateral_offset: float  # signed start offset from the lane center, m (non-zero)
    ped_ahead: float       # pedestrian x position ahead of the ego start, m
    trigger_dist: float    # separation at which the pedestrian starts crossing, m
    ego_speed: float       # ego initial speed, m/s

    def __post_init__(self):
        if self.ped_speed < 0 or self.ego_speed < 0:
            raise ContractViolation("speeds must be >= 0")
        if self.lateral_offset == 0:
            raise ContractViolation("lateral_offset must be non-zero")
        if self.ped_ahead <= 0:
            raise ContractViolation("ped_ahead must be > 0")
        if self.trigger_dist <= 0:
            raise ContractViolation("trigger_dist must be > 0")


@dataclass(frozen=True)
class EgoControllerStub:
    """Fixed reaction-delay emergency brake standing in for a real driving stack."""

    reaction_delay: float = 0.5  # s
    ego_decel: float = 6.0       # m/s^2

    def __post_init__(self):
        if self.reaction_delay < 0:
            raise ContractViolation("reaction_delay must be >= 0")
        if self.ego_decel <= 0:
            raise ContractViolation("ego_decel must be > 0")


@dataclass(frozen=True)
class SimClock:
    """Discrete integration step and horizon."""

    dt: float = 1e-2
    t_max: float = 30.0

    def __post_init__(self):
        if not 0 < self.dt <= 0.1:
            raise ContractViolation("dt must satisfy 0 < dt <= 0.1")
        if self.t_max < self.dt:
            raise ContractViolation("t_max must be >= dt")

    @property
    def n_steps(self) -> int:
        # trace holds states at t = 0, dt, ..., n*dt <= t_max
        return int(math.floor(self.t_max / self.dt + 1e-9))


def _euler_positions(x0: float, v: np.ndarray, dt: float) -> np.ndarray:
    """Forward-Euler positions: x[k] = x0 + dt * (v[0] + ... + v[k-1])."""
    x = np.empty_like(v)
    x[0] = 0.0
    np.cumsum(v[:-1], out=x[1:])
    return x0 + dt * x


def _clamped_speed(v0: float, decel: float, dt: float, n: int, onset: int = 0) -> np.ndarray:
    """Speed profile: constant v0 until index ``onset``, then Euler braking to 0."""
    v = np.full(n, v0)
    k = np.arange(n - onset)
    v[onset:] = np.maximum(0.0, v0 - decel * dt * k)
    return v


def _first_index(mask: np.ndarray) -> int | None:
    idx = np.flatnonzero(mask)
    return int(idx[0]) if idx.size else None


def simulate_braking(
    p: BrakingScenarioParams, c: EgoControllerStub, clock: SimClock
) -> MeasureTrace:
    """Integrate the braking scenario and return the bumper-gap trace.

    The lead vehicle brakes at ``npc_decel`` from t=0 until stopped. The ego
    drives at ``ego_speed`` and, once the gap first drops to ``trigger_gap``,
    starts braking at ``ego_decel`` after ``reaction_delay``. The trace ends
    when both vehicles are stationary or the horizon runs out. Gaps may go
    negative (overlap); that is recorded, never raised.
    """
    n = clock.n_steps + 1
    dt = clock.dt
    times = np.arange(n) * dt

    v_npc = _clamped_speed(p.npc_speed, p.npc_decel, dt, n)
    x_npc = _euler_positions(p.init_gap, v_npc, dt)

    # Braking starts strictly after the trigger, so the pre-braking prefix of
    # the gap equals the unbraked gap; the trigger index found on it is exact.
    x_ego_free = _euler_positions(0.0, np.full(n, p.ego_speed), dt)
    k_trig = _first_index(x_npc - x_ego_free <= p.trigger_gap)

    if k_trig is None:
        v_ego = np.full(n, p.ego_speed)
        x_ego = x_ego_free
    else:
        k_brake = _first_index(times >= times[k_trig] + c.reaction_delay)
        if k_brake is None:
            v_ego = np.full(n, p.ego_speed)
            x_ego = x_ego_free
        else:
            v_ego = _clamped_speed(p.ego_speed, c.ego_decel, dt, n, onset=max(k_brake, k_trig))
            x_ego = _euler_positions(0.0, v_ego, dt)

    gap = x_npc - x_ego
    end = _first_index((v_npc == 0.0) & (v_ego == 0.0))
    if end is not None:
        gap = gap[: end + 1]
    return MeasureTrace(gap)


def analytic_min_gap(p: BrakingScenarioParams, c: EgoControllerStub) -> float:
    """Closed-form minimum gap of the continuous-time braking model.

    Case analysis. Writing g0=init_gap, v_n/a_n for the lead vehicle,
    v_e/a_e for the ego and d for the reaction delay:

    1. v_e = 0: the ego never moves and the lead vehicle only opens the gap,
       so the minimum is g0.
    2. Otherwise the ego always eventually reaches the trigger gap (after the
       lead stops, the gap shrinks linearly at rate v_e). The trigger time is
       g0 <= trigger_gap: 0; else the first root of the gap quadratic while
       the lead is still moving, or the linear crossing after it stopped.
    3. From t_b = t_trigger + d the ego brakes to a stop at t_e = t_b + v_e/a_e.
       The gap is piecewise quadratic with kinks only at
       {lead stop, trigger, brake onset, ego stop}. Its minimum is attained
       at a kink or at an interior point where the speeds are equal, so we
       enumerate those finitely many candidates and take the minimum.
    """
    g0, v_n, a_n = p.init_gap, p.npc_speed, p.npc_decel
    v_e, a_e, d = p.ego_speed, c.ego_decel, c.reaction_delay
    if v_e == 0.0:
        return g0

    t_n = v_n / a_n                 # lead vehicle stop time
    s_n_total = v_n * v_n / (2 * a_n)  # lead vehicle travel distance

    if g0 <= p.trigger_gap:
        t_trig = 0.0
    else:
        gap_slack = g0 - p.trigger_gap
        t_trig = None
        if v_n > 0:
            # (a_n/2) t^2 + (v_e - v_n) t - gap_slack = 0, positive root
            b = v_e - v_n
            root = (-b + math.sqrt(b * b + 2 * a_n * gap_slack)) / a_n
            if root <= t_n:
                t_trig = root
        if t_trig is None:
            t_trig = (gap_slack + s_n_total) / v_e
    t_b = t_trig + d
    t_e = t_b + v_e / a_e

    def npc_travel(t: float) -> float:
        tt = min(t, t_n)
        return v_n * tt - 0.5 * a_n * tt * tt

    def ego_travel(t: float) -> float:
        s = v_e * min(t, t_b)
        if t > t_b:
            tt = min(t - t_b, v_e / a_e)
            s += v_e * tt - 0.5 * a_e * tt * tt
        return s

    def gap(t: float) -> float:
        return g0 + npc_travel(t) - ego_travel(t)

    t_end = max(t_n, t_e)
    knots = sorted({0.0, min(t_n, t_end), t_trig, t_b, t_e, t_end})
    candidates = [gap(t) for t in knots]
    for lo, hi in zip(knots, knots[1:]):
        mid = 0.5 * (lo + hi)
        # speeds on the open interval (lo, hi): affine, kink-free
        npc_moving = mid < t_n
        cn = v_n - a_n * mid if npc_moving else 0.0
        sn = -a_n if npc_moving else 0.0
        if mid < t_b:
            ce, se = v_e, 0.0
        elif mid < t_e:
            ce, se = v_e - a_e * (mid - t_b), -a_e
        else:
            ce, se = 0.0, 0.0
        # solve v_npc(t) = v_ego(t) around mid: (cn - ce) + (sn - se)(t - mid) = 0
        if sn != se:
            t_star = mid + (ce - cn) / (sn - se)
            if lo < t_star < hi:
                candidates.append(gap(t_star))
    return min(candidates)


def simulate_crossing(
    p: CrossingScenarioParams, c: EgoControllerStub, clock: SimClock
) -> MeasureTrace:
    """Integrate the crossing scenario and return the separation trace.

    The ego drives along +x. The pedestrian holds position until the
    separation first drops to ``trigger_dist``, then walks across the lane at
    ``ped_speed`` (toward and past the lane center). The ego brakes, after
    its reaction delay, once the pedestrian is inside the travel corridor
    (|y| <= LANE_HALF_WIDTH). Events resolve in causal order: a brake onset
    never precedes the corridor entry that caused it, so each stage below is
    computed on trajectory prefixes that later stages cannot change.
    """
    n = clock.n_steps + 1
    dt = clock.dt
    times = np.arange(n) * dt
    lat = p.lateral_offset
    toward_road = -math.copysign(1.0, lat)

    def ego_arrays(onset: int | None):
        if onset is None:
            v = np.full(n, p.ego_speed)
        else:
            v = _clamped_speed(p.ego_speed, c.ego_decel, dt, n, onset=onset)
        return v, _euler_positions(0.0, v, dt)

    if abs(lat) <= LANE_HALF_WIDTH:
        # pedestrian already blocks the corridor: braking from the delay on
        v_ego, x_ego = ego_arrays(_first_index(times >= c.reaction_delay))
        braking_fixed = True
    else:
        v_ego, x_ego = ego_arrays(None)
        braking_fixed = False

    sep_static = np.hypot(p.ped_ahead - x_ego, lat)
    k_trig = _first_index(sep_static <= p.trigger_dist)

    y = np.full(n, lat)
    if k_trig is not None and p.ped_speed > 0:
        walked = p.ped_speed * dt * np.arange(n - k_trig)
        y[k_trig:] = lat + toward_road * walked
        if not braking_fixed:
            k_corridor = _first_index(np.abs(y) <= LANE_HALF_WIDTH)
            if k_corridor is not None:
                k_brake = _first_index(times >= times[k_corridor] + c.reaction_delay)
                if k_brake is not None:
                    # k_brake >= k_corridor >= k_trig: prefixes stay valid
                    v_ego, x_ego = ego_arrays(k_brake)

    sep = np.hypot(p.ped_ahead - x_ego, y)
    ped_moving = np.zeros(n, dtype=bool)
    if k_trig is not None and p.ped_speed > 0:
        ped_moving[k_trig:] = True
    end = _first_index((v_ego == 0.0) & ~ped_moving)
    if end is not None:
        sep = sep[: end + 1]
    return MeasureTrace(sep)


# ---------------------------------------------------------------------------
# Builtin black boxes
# ---------------------------------------------------------------------------

DEFAULT_CONTROLLER = EgoControllerStub()
DEFAULT_CLOCK = SimClock()

# Weather-style dimensions are inert pass-throughs: they keep the parameter
# space realistically sized without touching the kinematics.
BRAKING_SPACE = ParamSpace(
    (
        ParamDef("npc_speed", 0.0, 15.0, "m/s"),
        ParamDef("npc_decel", 2.0, 8.0, "m/s^2"),
        ParamDef("init_gap", 10.0, 40.0, "m"),
        ParamDef("trigger_gap", 2.0, 25.0, "m"),
        ParamDef("weather", 0.0, 1.0, ""),
    )
)

CROSSING_SPACE = ParamSpace(
    (
        ParamDef("ped_speed", 0.0, 3.0, "m/s"),
        ParamDef("lateral_offset", 2.5, 8.0, "m"),
        ParamDef("ped_ahead", 10.0, 50.0, "m"),
        ParamDef("trigger_dist", 5.0, 30.0, "m"),
        ParamDef("weather", 0.0, 1.0, ""),
    )
)

SCENARIO_IDS = ("braking", "crossing")


def default_space(scenario_id: str) -> ParamSpace:
    if scenario_id == "braking":
        return BRAKING_SPACE
    if scenario_id == "crossing":
        return CROSSING_SPACE
    raise ContractViolation(f"unknown scenario id {scenario_id!r}; expected one of {SCENARIO_IDS}")


def braking_params(physical: np.ndarray, ego_speed: float = DEFAULT_EGO_SPEED) -> BrakingScenarioParams:
    return BrakingScenarioParams(
        npc_speed=float(physical[0]),
        npc_decel=float(physical[1]),
        init_gap=float(physical[2]),
        ego_speed=ego_speed,
        trigger_gap=float(physical[3]),
    )


def crossing_params(physical: np.ndarray, ego_speed: float = DEFAULT_EGO_SPEED) -> CrossingScenarioParams:
    return CrossingScenarioParams(
        ped_speed=float(physical[0]),
        lateral_offset=float(physical[1]),
        ped_ahead=float(physical[2]),
        trigger_dist=float(physical[3]),
        ego_speed=ego_speed,
    )


def builtin_blackbox(scenario_id: str, space: ParamSpace) -> BlackBox:
    """Fitness black box for a builtin scenario over the given space.

    The first four space dimensions map positionally onto the scenario's
    physical parameters; any further dimensions are inert (weather-style).
    Controller and clock are the fixed module defaults, so evaluation is a
    pure function of theta.
    """
    if scenario_id not in SCENARIO_IDS:
        raise ContractViolation(
            f"unknown scenario id {scenario_id!r}; expected one of {SCENARIO_IDS}"
        )
    if space.m < 4:
        raise ContractViolation(
            f"scenario {scenario_id!r} needs at least 4 parameters, space has {space.m}"
        )

    if scenario_id == "braking":
        def evaluate(theta: np.ndarray) -> float:
            phys = space.denormalize(theta)
            trace = simulate_braking(braking_params(phys), DEFAULT_CONTROLLER, DEFAULT_CLOCK)
            return fitness_of_trace(trace)
    else:
        def evaluate(theta: np.ndarray) -> float:
            phys = space.denormalize(theta)
            trace = simulate_crossing(crossing_params(phys), DEFAULT_CONTROLLER, DEFAULT_CLOCK)
            return fitness_of_trace(trace)

    return BlackBox(evaluate=evaluate, descriptor=f"builtin:{scenario_id}", concurrency_safe=True)
