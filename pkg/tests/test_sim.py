import math

import pytest

from uamnoise.errors import SimulationError
from uamnoise.network import generate_scenario
from uamnoise.sim import (FT_TO_M, Action, AircraftState, Phase, SimConfig, World)

from conftest import make_corridor_network, make_line_network


def hold_all(world):
    world.spawn_due_aircraft()
    return {aid: Action.HOLD for aid in world.enroute_ids()}


def make_world(n=2, od=None, spacing=60.0, net=None, **cfg):
    net = net or make_line_network()
    sc = generate_scenario(net, n, od or [("A", "C"), ("C", "A")],
                           departure_spacing_s=spacing, seed=3)
    return World(sc, SimConfig(**cfg))


class TestSpawn:
    def test_departure_zero_spawns_at_origin(self, solo_scenario):
        world = World(solo_scenario, SimConfig())
        world.spawn_due_aircraft()
        ac = world.aircraft["AC001"]
        assert ac.phase is Phase.ENROUTE
        assert (ac.x_m, ac.y_m) == (0.0, 0.0)
        assert ac.z_ft == 1000.0 and ac.z_target_ft == 1000.0 and not ac.b_changing

    def test_future_departure_stays_pending(self, line_network):
        sc = generate_scenario(line_network, 2, [("A", "C")], departure_spacing_s=100.0, seed=0)
        world = World(sc, SimConfig())
        for _ in range(50):
            world.step(hold_all(world))
        pending = [a for a in world.aircraft.values() if a.phase is Phase.PENDING]
        assert len(pending) == 1

    def test_second_spawn_on_schedule(self, line_network):
        sc = generate_scenario(line_network, 2, [("A", "C")], departure_spacing_s=60.0, seed=0)
        world = World(sc, SimConfig())
        while world.t < 60.0:
            world.step(hold_all(world))
        world.spawn_due_aircraft()
        assert len(world.enroute_ids()) == 2


class TestAltitudeCommands:
    def setup_method(self):
        self.world = make_world(n=1, od=[("A", "C")])
        self.world.spawn_due_aircraft()
        self.ac = self.world.aircraft["AC001"]

    def test_climb_sets_target_and_lock(self):
        self.ac.z_ft = self.ac.z_target_ft = 2000.0
        self.world.apply_altitude_command(self.ac, Action.CLIMB)
        assert self.ac.z_target_ft == 2500.0
        assert self.ac.b_changing
        assert self.ac.last_action is Action.CLIMB

    def test_lock_degrades_commands_to_hold(self):
        self.ac.z_ft, self.ac.z_target_ft = 2100.0, 2500.0
        self.ac.b_changing = True
        self.world.apply_altitude_command(self.ac, Action.DESCEND)
        assert self.ac.z_target_ft == 2500.0
        assert self.ac.last_action is Action.HOLD

    def test_climb_at_top_degrades_to_hold(self):
        self.ac.z_ft = self.ac.z_target_ft = 3000.0
        self.world.apply_altitude_command(self.ac, Action.CLIMB)
        assert self.ac.last_action is Action.HOLD
        assert not self.ac.b_changing

    def test_descend_at_bottom_degrades_to_hold(self):
        self.world.apply_altitude_command(self.ac, Action.DESCEND)
        assert self.ac.last_action is Action.HOLD


class TestKinematics:
    def test_climb_rate_per_second(self):
        world = make_world(n=1, od=[("A", "C")])
        world.spawn_due_aircraft()
        ac = world.aircraft["AC001"]
        ac.z_ft, ac.z_target_ft, ac.b_changing = 2400.0, 2500.0, True
        world.advance_kinematics(1.0)
        assert ac.z_ft == pytest.approx(2400.0 + 500.0 / 60.0, abs=1e-9)

    def test_snap_to_target_without_overshoot(self):
        world = make_world(n=1, od=[("A", "C")])
        world.spawn_due_aircraft()
        ac = world.aircraft["AC001"]
        ac.z_ft, ac.z_target_ft, ac.b_changing = 2495.0, 2500.0, True
        world.advance_kinematics(1.0)
        assert ac.z_ft == 2500.0
        assert not ac.b_changing

    def test_arrival_near_destination(self):
        net = make_corridor_network(length_m=100.0)
        sc = generate_scenario(net, 1, [("A", "B")], seed=0)
        world = World(sc, SimConfig())
        world.spawn_due_aircraft()
        ac = world.aircraft["AC001"]
        ac.dist_along_m = 50.0
        world.advance_kinematics(1.0)  # 67 m > 50 m remaining
        assert ac.phase is Phase.ARRIVED
        assert (ac.x_m, ac.y_m) == (100.0, 0.0)

    def test_link_handoff_positions_on_second_link(self, line_scenario):
        world = World(line_scenario, SimConfig())
        world.spawn_due_aircraft()
        ac = world.aircraft["AC001"]
        ac.dist_along_m = 12000.0 + 500.0
        world.advance_kinematics(1.0)
        assert world.current_link_id(ac) in ("A-B", "B-C", "C-A", "B-A", "C-B")
        assert 0.0 <= ac.x_m <= 24000.0 and ac.y_m == 0.0


class TestNeighbors:
    def make_pair(self, planar_sep):
        world = make_world(n=2, od=[("A", "C"), ("C", "A")], spacing=0.0)
        world.spawn_due_aircraft()
        a, b = world.aircraft["AC001"], world.aircraft["AC002"]
        a.x_m, a.y_m = 0.0, 0.0
        b.x_m, b.y_m = planar_sep, 0.0
        return world, a, b

    def test_in_range_sees_each_other(self):
        world, a, b = self.make_pair(2400.0)
        assert [n.id for n in world.neighbors(a.id)] == [b.id]
        assert [n.id for n in world.neighbors(b.id)] == [a.id]

    def test_out_of_range_empty(self):
        world, a, b = self.make_pair(2600.0)
        assert world.neighbors(a.id) == []
        assert world.neighbors(b.id) == []

    def test_unrelated_routes_filtered(self):
        # two parallel corridors 1 km apart; aircraft within comm range
        from uamnoise.network import (AltitudeLayerSet, Link, Network, Vertiport)
        vp = {"A": Vertiport("A", 0, 0), "B": Vertiport("B", 10000, 0),
              "C": Vertiport("C", 0, 1000), "D": Vertiport("D", 10000, 1000)}
        links = {"A-B": Link("A-B", "A", "B"), "C-D": Link("C-D", "C", "D")}
        net = Network(vp, links, AltitudeLayerSet(), {})
        sc = generate_scenario(net, 2, [("A", "B"), ("C", "D")],
                               departure_spacing_s=0.0, seed=0)
        world = World(sc, SimConfig())
        world.spawn_due_aircraft()
        for aid in world.enroute_ids():
            assert world.neighbors(aid) == []

    def test_symmetry_over_episode(self, line_scenario):
        world = World(line_scenario, SimConfig())
        while not world.terminal and world.t < 400:
            world.spawn_due_aircraft()
            for aid in world.enroute_ids():
                others = {n.id for n in world.neighbors(aid)}
                for oid in others:
                    assert aid in {n.id for n in world.neighbors(oid)}
            world.step(hold_all(world))


class TestDetectLos:
    def make_pair(self, dz_ft, planar_m=0.0):
        world, a, b = TestNeighbors().make_pair(planar_m)
        b.z_ft = a.z_ft + dz_ft
        return world

    def test_adjacent_layers_not_los(self):
        world = self.make_pair(500.0)
        assert 500.0 * FT_TO_M == pytest.approx(152.4)
        assert world.detect_los() == []

    def test_colocated_same_altitude_is_los(self):
        world = self.make_pair(0.0)
        assert len(world.detect_los()) == 1

    def test_diagonal_euclidean_norm(self):
        world = self.make_pair(100.0 / FT_TO_M, planar_m=100.0)
        violations = world.detect_los()
        assert len(violations) == 1
        assert violations[0][2] == pytest.approx(math.sqrt(2) * 100.0, abs=1e-6)

    def test_contiguous_violation_merges_into_one_event(self):
        world = make_world(n=2, od=[("A", "C"), ("A", "C")], spacing=0.0)
        # co-located same-route aircraft remain in violation the whole flight
        while not world.terminal:
            world.step(hold_all(world))
        assert len(world.los_events) == 1
        assert world.los_events[0].duration_s > 100.0


class TestStep:
    def test_empty_world_terminal(self, line_network):
        sc = generate_scenario(line_network, 1, [("A", "C")], seed=0)
        sc = type(sc)(sc.network, (), {})
        world = World(sc, SimConfig())
        assert world.terminal

    def test_single_aircraft_hold_arrives_without_los(self, solo_scenario):
        world = World(solo_scenario, SimConfig())
        while not world.terminal:
            world.step(hold_all(world))
        assert world.aircraft["AC001"].phase is Phase.ARRIVED
        assert world.los_events == []

    def test_missing_action_is_contract_error(self, solo_scenario):
        world = World(solo_scenario, SimConfig())
        world.spawn_due_aircraft()
        with pytest.raises(SimulationError, match="AC001"):
            world.step({})

    def test_deterministic_replay(self, line_scenario):
        def run():
            world = World(line_scenario, SimConfig())
            log = []
            while not world.terminal:
                world.spawn_due_aircraft()
                actions = {}
                for i, aid in enumerate(world.enroute_ids()):
                    actions[aid] = Action.CLIMB if (int(world.t) // 10 + i) % 3 == 0 \
                        else Action.HOLD
                world.step(actions)
                for ac in world.aircraft.values():
                    log.append((world.t, ac.id, ac.x_m, ac.y_m, ac.z_ft, ac.b_changing))
            return log, world.los_events

        log1, ev1 = run()
        log2, ev2 = run()
        assert log1 == log2
        assert ev1 == ev2

    def test_lock_safety_and_bounds_over_episode(self, line_scenario):
        import numpy as np
        rng = np.random.default_rng(0)
        world = World(line_scenario, SimConfig())
        layers = line_scenario.network.layers
        locked_target: dict[str, float] = {}
        while not world.terminal:
            world.spawn_due_aircraft()
            actions = {aid: Action(int(rng.integers(0, 3))) for aid in world.enroute_ids()}
            world.step(actions)
            for ac in world.aircraft.values():
                if ac.phase is not Phase.ENROUTE:
                    continue
                assert layers.z_min <= ac.z_ft <= layers.z_max
                assert ac.z_target_ft in layers.levels_ft
                assert ac.b_changing == (ac.z_ft != ac.z_target_ft)
                if ac.b_changing:
                    if ac.id in locked_target:
                        assert locked_target[ac.id] == ac.z_target_ft
                    locked_target[ac.id] = ac.z_target_ft
                else:
                    locked_target.pop(ac.id, None)
