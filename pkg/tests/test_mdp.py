import math

import numpy as np
import pytest

from uamnoise.errors import ValidationError
from uamnoise.mdp import (IntruderObservation, Observation, OwnObservation,
                          RewardConfig, action_mask, encode_observation, observe,
                          reward_noise, reward_separation, reward_total)
from uamnoise.network import generate_scenario
from uamnoise.sim import FT_TO_M, Action, SimConfig, World

CFG = RewardConfig(rho=0.5)


def own(z=0.0):
    return OwnObservation(z=z, b_changing=0.0, z_target=z, last_action=Action.HOLD)


def intruder(dz_ft, d_o=0.1):
    return IntruderObservation(z_rel=dz_ft / 2000.0, d_o=d_o, last_action=Action.HOLD)


class TestObserve:
    def make_world(self):
        from conftest import make_line_network
        net = make_line_network()
        sc = generate_scenario(net, 2, [("A", "C"), ("C", "A")],
                               departure_spacing_s=0.0, seed=3)
        world = World(sc, SimConfig())
        world.spawn_due_aircraft()
        return world

    def test_lone_aircraft_no_intruders(self, solo_scenario):
        world = World(solo_scenario, SimConfig())
        world.spawn_due_aircraft()
        obs = observe(world, "AC001", CFG)
        assert obs.intruders == ()

    def test_normalization_endpoints(self, solo_scenario):
        world = World(solo_scenario, SimConfig())
        world.spawn_due_aircraft()
        obs = observe(world, "AC001", CFG)
        assert obs.own.z == 0.0  # spawned at z_min
        world.aircraft["AC001"].z_ft = 3000.0
        world.aircraft["AC001"].z_target_ft = 3000.0
        assert observe(world, "AC001", CFG).own.z == 1.0

    def test_intruder_fields(self):
        world = self.make_world()
        a, b = world.aircraft["AC001"], world.aircraft["AC002"]
        b.x_m, b.y_m = a.x_m, a.y_m
        b.z_ft = a.z_ft + 500.0
        planar = 0.0
        d3 = math.hypot(planar, 500.0 * FT_TO_M)
        obs = observe(world, "AC001", CFG)
        assert len(obs.intruders) == 1
        assert obs.intruders[0].z_rel == pytest.approx(0.25)
        assert obs.intruders[0].d_o == pytest.approx(d3 / 2500.0)

    def test_intruder_at_1km_normalized(self):
        world = self.make_world()
        a, b = world.aircraft["AC001"], world.aircraft["AC002"]
        # place intruder so the full 3-D separation is 1000 m
        dz_m = 500.0 * FT_TO_M
        b.z_ft = a.z_ft + 500.0
        b.x_m = a.x_m + math.sqrt(1000.0 ** 2 - dz_m ** 2)
        b.y_m = a.y_m
        obs = observe(world, "AC001", CFG)
        assert obs.intruders[0].z_rel == pytest.approx(0.25)
        assert obs.intruders[0].d_o == pytest.approx(0.4)

    def test_intruders_sorted_and_capped(self):
        obs = Observation(own(), tuple(intruder(0.0, d_o=d) for d in (0.1, 0.2, 0.3)))
        assert [i.d_o for i in obs.intruders] == sorted(i.d_o for i in obs.intruders)


class TestRewardNoise:
    def test_zero_at_top_layer(self):
        assert reward_noise(3000.0, CFG) == 0.0

    def test_minus_one_at_bottom_layer(self):
        assert reward_noise(1000.0, CFG) == -1.0

    def test_mid_layer_value(self):
        assert reward_noise(2000.0, CFG) == pytest.approx(-0.390, abs=0.005)

    def test_monotone_over_layers(self):
        vals = [reward_noise(z, CFG) for z in (1000, 1500, 2000, 2500, 3000)]
        assert vals == sorted(vals)

    def test_out_of_bounds_rejected(self):
        with pytest.raises(ValidationError):
            reward_noise(500.0, CFG)


class TestRewardSeparation:
    def test_no_intruders(self):
        assert reward_separation(Observation(own(), ()), CFG) == 0.0

    def test_four_violating_intruders(self):
        obs = Observation(own(), tuple(intruder(0.0) for _ in range(4)))
        assert reward_separation(obs, CFG) == pytest.approx(-0.4)

    def test_twelve_intruders_clamped(self):
        obs = Observation(own(), tuple(intruder(0.0) for _ in range(12)))
        assert reward_separation(obs, CFG) == -1.0

    def test_adjacent_layer_knife_edge(self):
        # 500 ft = 152.4 m > 150 m: adjacent layers never trigger the penalty
        obs = Observation(own(), (intruder(500.0), intruder(-500.0)))
        assert reward_separation(obs, CFG) == 0.0
        # just inside 150 m vertically does trigger
        dz_ft = 149.9 / FT_TO_M
        assert reward_separation(Observation(own(), (intruder(dz_ft),)), CFG) == \
            pytest.approx(-0.1)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(2)
        intr = [intruder(float(rng.uniform(-2000, 2000))) for _ in range(8)]
        base = reward_separation(Observation(own(), tuple(intr)), CFG)
        for _ in range(10):
            rng.shuffle(intr)
            assert reward_separation(Observation(own(), tuple(intr)), CFG) == base


class TestRewardTotal:
    def test_endpoints(self):
        assert reward_total(-0.3, -0.7, 0.0) == -0.7
        assert reward_total(-0.3, -0.7, 1.0) == -0.3

    def test_blend(self):
        assert reward_total(-0.390, -0.4, 0.5) == pytest.approx(-0.395)

    def test_affine_in_rho(self):
        rn, rs = -0.37, -0.81
        mid = reward_total(rn, rs, 0.5)
        assert mid == (reward_total(rn, rs, 0.0) + reward_total(rn, rs, 1.0)) / 2.0

    def test_bounds(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            rn, rs, rho = -rng.random(), -rng.random(), rng.random()
            assert -1.0 <= reward_total(rn, rs, rho) <= 0.0


class TestActionMask:
    def make_state(self, z, changing=False, z_target=None):
        from uamnoise.network import Route
        from uamnoise.sim import AircraftState
        return AircraftState(id="X", route=Route(("A-B",), "A", "B"),
                             z_ft=z, z_target_ft=z_target if z_target else z,
                             b_changing=changing)

    def test_mid_layer_all_allowed(self, line_network):
        st = self.make_state(2000.0)
        assert action_mask(st, line_network.layers) == (True, True, True)

    def test_locked_only_hold(self, line_network):
        st = self.make_state(2100.0, changing=True, z_target=2500.0)
        assert action_mask(st, line_network.layers) == (True, False, False)

    def test_top_boundary(self, line_network):
        st = self.make_state(3000.0)
        assert action_mask(st, line_network.layers) == (True, True, False)

    def test_bottom_boundary(self, line_network):
        st = self.make_state(1000.0)
        assert action_mask(st, line_network.layers) == (True, False, True)


class TestEncode:
    def test_shapes_and_one_hot(self):
        obs = Observation(
            OwnObservation(z=0.5, b_changing=1.0, z_target=0.75, last_action=Action.CLIMB),
            (intruder(500.0),))
        own_vec, intr_mat = encode_observation(obs)
        assert own_vec.shape == (6,) and intr_mat.shape == (1, 5)
        assert own_vec[3 + int(Action.CLIMB)] == 1.0
        assert own_vec[:3].tolist() == [0.5, 1.0, 0.75]
