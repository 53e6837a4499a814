"""Discrete-time kinematic world over the corridor network.

Advances aircraft along frozen route polylines, executes altitude transitions
under the completion lock, finds in-range neighbors on related routes, and
records loss-of-separation events.

Altitudes live in feet; positions in meters. Altitude is converted to meters
(factor 0.3048 exact) only inside Euclidean-distance computations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

from .errors import SimulationError, ValidationError
from .network import Network, Route, Scenario, route_intersections, route_nodes

FT_TO_M = 0.3048


class Action(IntEnum):
    """Altitude advisories; wire encoding is the integer value."""

    HOLD = 0
    DESCEND = 1
    CLIMB = 2


class Phase(Enum):
    PENDING = "pending"
    ENROUTE = "enroute"
    ARRIVED = "arrived"


@dataclass
class SimConfig:
    dt_s: float = 1.0
    decision_interval_s: float = 10.0
    cruise_speed_mps: float = 67.0
    climb_rate_fpm: float = 500.0
    d_comm_m: float = 2500.0
    d_los_m: float = 150.0
    max_episode_time_s: float = 7200.0

    def __post_init__(self):
        for name in ("dt_s", "decision_interval_s", "cruise_speed_mps", "climb_rate_fpm",
                     "d_comm_m", "d_los_m", "max_episode_time_s"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"SimConfig.{name} must be positive")
        ratio = self.decision_interval_s / self.dt_s
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError("decision_interval_s must be an integer multiple of dt_s")


@dataclass
class AircraftState:
    id: str
    route: Route
    phase: Phase = Phase.PENDING
    dist_along_m: float = 0.0
    x_m: float = 0.0
    y_m: float = 0.0
    z_ft: float = 0.0
    z_target_ft: float = 0.0
    b_changing: bool = False
    vertical_rate_fps: float = 0.0
    last_action: Action = Action.HOLD


@dataclass
class LosEvent:
    """One contiguous separation violation between an unordered aircraft pair."""

    pair: tuple[str, str]
    onset_s: float
    duration_s: float
    min_distance_m: float


class World:
    """Single-writer episode state; one world per rollout worker."""

    def __init__(self, scenario: Scenario, config: SimConfig):
        self.scenario = scenario
        self.net: Network = scenario.network
        self.config = config
        self.t = 0.0
        self.aircraft: dict[str, AircraftState] = {}
        for fl in scenario.flights:
            self.aircraft[fl.id] = AircraftState(id=fl.id, route=scenario.routes[fl.id])
        self._departures = {fl.id: fl.departure_s for fl in scenario.flights}

        # Frozen route geometry: polyline points and cumulative lengths.
        self._polylines: dict[tuple[str, ...], tuple[list[tuple[float, float]], list[float]]] = {}
        for route in scenario.routes.values():
            if route.key in self._polylines:
                continue
            pts = []
            for vid in route_nodes(self.net, route):
                vp = self.net.vertiports[vid]
                pts.append((vp.x_m, vp.y_m))
            cum = [0.0]
            for a, b in zip(pts, pts[1:]):
                cum.append(cum[-1] + math.hypot(b[0] - a[0], b[1] - a[1]))
            self._polylines[route.key] = (pts, cum)

        unique_routes = list({r.key: r for r in scenario.routes.values()}.values())
        self._relation = route_intersections(self.net, unique_routes)

        self.los_events: list[LosEvent] = []
        self._active_los: dict[tuple[str, str], tuple[float, float]] = {}  # pair -> (onset, min d)

    # -- queries ----------------------------------------------------------

    def enroute_ids(self) -> list[str]:
        return [a.id for a in self.aircraft.values() if a.phase is Phase.ENROUTE]

    def is_decision_tick(self) -> bool:
        ratio = self.t / self.config.decision_interval_s
        return abs(ratio - round(ratio)) < 1e-9

    @property
    def terminal(self) -> bool:
        if self.t >= self.config.max_episode_time_s:
            return True
        return all(a.phase is Phase.ARRIVED for a in self.aircraft.values())

    def routes_related(self, id_a: str, id_b: str) -> bool:
        key = (self.aircraft[id_a].route.key, self.aircraft[id_b].route.key)
        return key in self._relation

    def distance_3d_m(self, a: AircraftState, b: AircraftState) -> float:
        dz_m = (a.z_ft - b.z_ft) * FT_TO_M
        return math.hypot(math.hypot(a.x_m - b.x_m, a.y_m - b.y_m), dz_m)

    def current_link_id(self, ac: AircraftState) -> str:
        """Link the aircraft is currently on (last link once arrived)."""
        pts, cum = self._polylines[ac.route.key]
        d = min(ac.dist_along_m, cum[-1])
        for i in range(len(cum) - 1):
            if d < cum[i + 1] or i == len(cum) - 2:
                return ac.route.link_ids[i]
        return ac.route.link_ids[-1]

    # -- dynamics ---------------------------------------------------------

    def spawn_due_aircraft(self) -> None:
        """Pending flights at or past their departure time enter the network at
        their origin on the lowest layer, level."""
        z0 = self.net.layers.z_min
        for ac in self.aircraft.values():
            if ac.phase is Phase.PENDING and self._departures[ac.id] <= self.t:
                pts, _ = self._polylines[ac.route.key]
                ac.phase = Phase.ENROUTE
                ac.dist_along_m = 0.0
                ac.x_m, ac.y_m = pts[0]
                ac.z_ft = z0
                ac.z_target_ft = z0
                ac.b_changing = False
                ac.vertical_rate_fps = 0.0
                ac.last_action = Action.HOLD

    def apply_altitude_command(self, ac: AircraftState, action: Action) -> None:
        """Sets a new target layer unless locked mid-transition or at a
        boundary layer; the action actually executed goes to last_action."""
        layers = self.net.layers
        executed = action
        if ac.b_changing:
            executed = Action.HOLD
        elif action is Action.CLIMB:
            idx = layers.index_of(ac.z_target_ft)
            if idx + 1 >= len(layers.levels_ft):
                executed = Action.HOLD
            else:
                ac.z_target_ft = layers.levels_ft[idx + 1]
                ac.b_changing = True
        elif action is Action.DESCEND:
            idx = layers.index_of(ac.z_target_ft)
            if idx == 0:
                executed = Action.HOLD
            else:
                ac.z_target_ft = layers.levels_ft[idx - 1]
                ac.b_changing = True
        ac.last_action = executed

    def advance_kinematics(self, dt: float) -> None:
        """Moves each enroute aircraft along its polyline and toward its target
        layer, snapping without overshoot."""
        rate_fps = self.config.climb_rate_fpm / 60.0
        for ac in self.aircraft.values():
            if ac.phase is not Phase.ENROUTE:
                continue
            pts, cum = self._polylines[ac.route.key]
            ac.dist_along_m += self.config.cruise_speed_mps * dt
            if ac.dist_along_m >= cum[-1]:
                ac.phase = Phase.ARRIVED
                ac.dist_along_m = cum[-1]
                ac.x_m, ac.y_m = pts[-1]
            else:
                i = _segment_index(cum, ac.dist_along_m)
                seg_len = cum[i + 1] - cum[i]
                f = (ac.dist_along_m - cum[i]) / seg_len
                ax, ay = pts[i]
                bx, by = pts[i + 1]
                ac.x_m = ax + f * (bx - ax)
                ac.y_m = ay + f * (by - ay)

            if ac.b_changing:
                step_ft = rate_fps * dt
                delta = ac.z_target_ft - ac.z_ft
                if abs(delta) <= step_ft:
                    ac.z_ft = ac.z_target_ft
                    ac.b_changing = False
                    ac.vertical_rate_fps = 0.0
                else:
                    ac.vertical_rate_fps = math.copysign(rate_fps, delta)
                    ac.z_ft += math.copysign(step_ft, delta)

    def neighbors(self, ac_id: str) -> list[AircraftState]:
        """Enroute aircraft within d_comm planar range on a related route,
        ascending by 3-D distance (id tie-break)."""
        own = self.aircraft[ac_id]
        if own.phase is not Phase.ENROUTE:
            raise SimulationError(f"aircraft '{ac_id}' is not enroute")
        found = []
        for other in self.aircraft.values():
            if other.id == ac_id or other.phase is not Phase.ENROUTE:
                continue
            planar = math.hypot(own.x_m - other.x_m, own.y_m - other.y_m)
            if planar <= self.config.d_comm_m and self.routes_related(ac_id, other.id):
                found.append((self.distance_3d_m(own, other), other.id, other))
        found.sort(key=lambda rec: (rec[0], rec[1]))
        return [rec[2] for rec in found]

    def detect_los(self) -> list[tuple[str, str, float]]:
        """All enroute pairs closer than d_los in 3-D, as (id_a, id_b, dist).
        Not route-filtered: separation is violated by geometry alone."""
        enroute = [a for a in self.aircraft.values() if a.phase is Phase.ENROUTE]
        out = []
        for i, a in enumerate(enroute):
            for b in enroute[i + 1:]:
                d = self.distance_3d_m(a, b)
                if d < self.config.d_los_m:
                    pair = tuple(sorted((a.id, b.id)))
                    out.append((pair[0], pair[1], d))
        return out

    def _update_los_bookkeeping(self, violations) -> None:
        now = {(a, b): d for a, b, d in violations}
        for pair, d in now.items():
            if pair in self._active_los:
                onset, dmin = self._active_los[pair]
                self._active_los[pair] = (onset, min(dmin, d))
            else:
                self._active_los[pair] = (self.t, d)
        for pair in list(self._active_los):
            if pair not in now:
                onset, dmin = self._active_los.pop(pair)
                self.los_events.append(LosEvent(pair, onset, self.t - onset, dmin))

    def finalize_los(self) -> None:
        """Close any violations still active at episode end."""
        for pair, (onset, dmin) in sorted(self._active_los.items()):
            self.los_events.append(LosEvent(pair, onset, self.t - onset, dmin))
        self._active_los.clear()

    def step(self, joint_actions: dict[str, Action] | None = None) -> list[tuple[str, str, float]]:
        """One physics step: spawn, apply commands on decision ticks, advance,
        detect LOS. Returns this step's violations."""
        self.spawn_due_aircraft()
        if self.is_decision_tick():
            actions = joint_actions or {}
            for ac_id in self.enroute_ids():
                if ac_id not in actions:
                    raise SimulationError(
                        f"decision tick t={self.t}: no action for enroute aircraft '{ac_id}'"
                    )
                self.apply_altitude_command(self.aircraft[ac_id], actions[ac_id])
        self.advance_kinematics(self.config.dt_s)
        self.t += self.config.dt_s
        violations = self.detect_los()
        self._update_los_bookkeeping(violations)
        if self.terminal:
            self.finalize_los()
        return violations


def _segment_index(cum: list[float], d: float) -> int:
    lo, hi = 0, len(cum) - 2
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid + 1] <= d:
            lo = mid + 1
        else:
            hi = mid
    return lo
