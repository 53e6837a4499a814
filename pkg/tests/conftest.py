import pytest

from uamnoise.network import (AltitudeLayerSet, Link, Network, NoiseZone,
                              Vertiport, generate_scenario)


def make_line_network(link_len_m=12000.0, with_zone=True):
    """A -- B -- C line with both link directions."""
    vp = {
        "A": Vertiport("A", 0.0, 0.0),
        "B": Vertiport("B", link_len_m, 0.0),
        "C": Vertiport("C", 2.0 * link_len_m, 0.0),
    }
    links = {}
    for a, b in (("A", "B"), ("B", "C")):
        links[f"{a}-{b}"] = Link(f"{a}-{b}", a, b)
        links[f"{b}-{a}"] = Link(f"{b}-{a}", b, a)
    zones = {}
    if with_zone:
        zones = {"Z1": NoiseZone("Z1", tuple(sorted(links)) + ("A", "B", "C"), 50.0)}
    return Network(vp, links, AltitudeLayerSet(), zones)


def make_corridor_network(length_m=30000.0):
    """Single long A -- B corridor, both directions, no zones."""
    vp = {"A": Vertiport("A", 0.0, 0.0), "B": Vertiport("B", length_m, 0.0)}
    links = {
        "A-B": Link("A-B", "A", "B"),
        "B-A": Link("B-A", "B", "A"),
    }
    return Network(vp, links, AltitudeLayerSet(), {})


@pytest.fixture
def line_network():
    return make_line_network()


@pytest.fixture
def line_scenario(line_network):
    return generate_scenario(line_network, 12, [("A", "C"), ("C", "A")],
                             departure_spacing_s=50.0, seed=3)


@pytest.fixture
def corridor_network():
    return make_corridor_network()


@pytest.fixture
def solo_scenario(corridor_network):
    return generate_scenario(corridor_network, 1, [("A", "B")], seed=0)
