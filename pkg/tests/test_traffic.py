import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from countingstars.errors import NoAccessSatellite
from countingstars.flows import FlowKey
from countingstars.orbit import EARTH
from countingstars.topology import IRIDIUM, walker_elements, constellation_states
from countingstars.traffic import (
    DEFAULT_PROFILE,
    GroundStation,
    Packetizer,
    TrafficMatrix,
    TrafficParams,
    access_map,
    hour_buckets,
    local_hour,
    pairwise_demand,
    place_stations,
    station_demand,
    station_eci,
    station_matrix,
    to_satellite_matrix,
    total_demand,
    write_traffic_csv,
)

P = TrafficParams(0.5, 8.0, 30)


def test_total_demand():
    assert total_demand(TrafficParams(0.1, 8.0, 50)) == pytest.approx(40.0)


@pytest.mark.parametrize("t,lon,hour", [(0, 0, 0), (3600 * 5, 0, 5), (0, 15, 1), (0, -15, 23), (3600 * 23, 30, 1)])
def test_local_hour(t, lon, hour):
    assert local_hour(t, lon) == hour


def test_uniform_profile_splits_evenly():
    p = TrafficParams(1.0, 10.0, 4, (1.0,) * 24)
    stations = [GroundStation(i, -180 + 90 * i) for i in range(4)]
    for s in stations:
        assert station_demand(p, s, 0.0, stations) == pytest.approx(total_demand(p) / 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 86400 * 2))
def test_mass_invariant(seed, t):
    rng = np.random.default_rng(seed)
    stations = place_stations(30, rng)
    assert hour_buckets(stations, t).sum() == 30
    mass = math.fsum(station_demand(P, s, t, stations) for s in stations)
    assert mass == pytest.approx(total_demand(P), rel=1e-9)
    tm = station_matrix(P, stations, t, rng, duration_s=2.0)
    assert tm.mass == pytest.approx(2 * total_demand(P), rel=1e-9)


def test_pairwise_weights_bounded():
    rng = np.random.default_rng(0)
    stations = place_stations(10, rng)
    row = pairwise_demand(P, stations[0], stations, 0.0, rng, src_total=90.0)
    assert stations[0].id not in row
    assert sum(row.values()) == pytest.approx(90.0)
    vals = np.array(list(row.values()))
    assert vals.max() / vals.min() <= 10.0 + 1e-9


def test_place_stations_covers_zones():
    st_ = place_stations(24, np.random.default_rng(4))
    assert sorted(local_hour(0, s.longitude_deg) for s in st_) == list(range(24))
    assert all(abs(s.latitude_deg) <= 60 for s in st_)


def test_station_rotates_with_earth():
    s = GroundStation(0, 0.0, 0.0)
    quarter = (math.pi / 2) / EARTH.rotation_rad_s
    assert station_eci(s, quarter) == pytest.approx([0, EARTH.earth_radius_km, 0], abs=1e-6)


def test_access_picks_highest_elevation():
    states = constellation_states(walker_elements(IRIDIUM), 0.0)
    pos = np.array([s.position_km for s in states])
    stations = place_stations(20, np.random.default_rng(1))
    access = access_map(stations, pos, 0.0)
    for s in stations:
        g = station_eci(s, 0.0)
        d = pos - g
        sin_el = (d @ g) / (np.linalg.norm(d, axis=1) * np.linalg.norm(g))
        assert access[s.id] == int(np.argmax(sin_el))


def test_no_access_above_threshold():
    pos = np.array([[0.0, 0.0, -(EARTH.earth_radius_km + 800)]])
    with pytest.raises(NoAccessSatellite):
        access_map([GroundStation(0, 0.0, 45.0)], pos, 0.0, min_elevation_deg=10)


def test_satellite_projection():
    tm = TrafficMatrix(0.0, {(0, 1): 2.0, (1, 0): 1.0, (0, 2): 4.0, (2, 1): 0.5})
    sat, local = to_satellite_matrix(tm, {0: 5, 1: 5, 2: 7})
    assert local == 3.0
    assert sat == {FlowKey(5, 7): 4.0, FlowKey(7, 5): 0.5}


def test_packetizer_carries_fractions():
    pk = Packetizer()
    demand = {FlowKey(0, 1): 0.4}
    sent = [pk.counts(demand).get(FlowKey(0, 1), 0) for _ in range(10)]
    assert sent == [0, 0, 1, 0, 1, 0, 0, 1, 0, 1]
    assert sum(sent) == 4


def test_packetize_shuffles_deterministically():
    demand = {FlowKey(0, 1): 3.0, FlowKey(2, 1): 2.0}
    a = Packetizer().packetize(demand, 0, np.random.default_rng(5))
    b = Packetizer().packetize(demand, 0, np.random.default_rng(5))
    assert a == b and len(a) == 5


def test_bad_params():
    with pytest.raises(ValueError):
        TrafficParams(1.5, 1, 1)
    with pytest.raises(ValueError):
        TrafficParams(0.5, 1, 1, (1.0,) * 23)
    with pytest.raises(ValueError):
        GroundStation(0, 180.0)


def test_traffic_csv():
    buf = io.StringIO()
    write_traffic_csv([(1.0, {FlowKey(2, 3): 1.5})], buf)
    assert buf.getvalue().splitlines() == ["t,src_sat,dst_sat,units", "1.0,2,3,1.5"]
