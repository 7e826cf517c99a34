import io
import math

import numpy as np
import pytest

from countingstars.errors import PolicyInfeasible
from countingstars.orbit import elements_to_state
from countingstars.topology import (
    INTER,
    INTRA,
    IRIDIUM,
    STARLINK_SMALL,
    ConstellationSpec,
    IslPolicy,
    apply_isl_policy,
    constellation_states,
    default_seam,
    from_adjacency_text,
    grid_candidates,
    order_elements_as_grid,
    read_adjacency_csv,
    snapshot_series,
    to_adjacency_text,
    visibility_graph,
    walker_elements,
    write_adjacency_csv,
)


@pytest.fixture(scope="module")
def iridium_series():
    return snapshot_series(IRIDIUM, IslPolicy(), 0.0, 20.0, 1.0)


def snap_at(spec, policy, t=0.0):
    states = constellation_states(walker_elements(spec), t)
    return apply_isl_policy(visibility_graph(states), spec, policy, states)


def test_series_length_and_size(iridium_series):
    assert len(iridium_series) == 20
    assert all(s.n_nodes == 66 for s in iridium_series)


def test_degree_cap(iridium_series):
    for s in iridium_series:
        assert max(s.degree(n) for n in s.nodes) <= 4


def test_intra_rings_intact(iridium_series):
    for s in iridium_series:
        pairs = s.edge_pairs()
        for p in range(IRIDIUM.planes):
            for j in range(IRIDIUM.sats_per_plane):
                u, v = IRIDIUM.sat_id(p, j), IRIDIUM.sat_id(p, j + 1)
                assert (min(u, v), max(u, v)) in pairs


def test_seam_between_counter_rotating_planes():
    # star pattern: planes spread over 180 deg, so the widest gap is the wrap
    assert default_seam(IRIDIUM) == (5, 0)
    snap = snap_at(IRIDIUM, IslPolicy(latitude_rule_enabled=False))
    seam_links = [(u, v) for u, v, k in snap.edges if k == INTER and {IRIDIUM.plane_of(u), IRIDIUM.plane_of(v)} == {0, 5}]
    assert seam_links == []


def test_disabling_seam_restores_links():
    on = snap_at(IRIDIUM, IslPolicy(latitude_rule_enabled=False))
    off = snap_at(IRIDIUM, IslPolicy(seam_enabled=False, latitude_rule_enabled=False))
    assert len(off.edges) >= len(on.edges)


def test_latitude_rule_suppresses_polar_inter_links():
    snap = snap_at(IRIDIUM, IslPolicy())
    lat = np.degrees(np.arcsin(snap.positions_km[:, 2] / np.linalg.norm(snap.positions_km, axis=1)))
    for u, v, kind in snap.edges:
        if kind == INTER:
            assert abs(lat[u]) <= 70 and abs(lat[v]) <= 70
    # with the rule off, some high-latitude inter-plane link appears
    free = snap_at(IRIDIUM, IslPolicy(latitude_rule_enabled=False, seam_enabled=False))
    polar = [(u, v) for u, v, k in free.edges if k == INTER and max(abs(lat[u]), abs(lat[v])) > 70]
    assert polar


def test_ports_consistent():
    snap = snap_at(IRIDIUM, IslPolicy())
    for u, ports in enumerate(snap.port_map):
        for port, v in ports.items():
            assert snap.port_to(v, u) in (1, 2, 3, 4)
            if port == 1:
                assert snap.port_to(v, u) == 2
            if port == 4:
                assert snap.port_to(v, u) == 3


def test_delta_wrap_uses_phasing():
    spec = ConstellationSpec(4, 5, 550.0, 53.0, 1)
    wrap = [(u, v) for u, _, v, _, k in grid_candidates(spec) if k == INTER and spec.plane_of(u) == 3]
    assert all(spec.slot_of(v) == (spec.slot_of(u) + 1) % 5 for u, v in wrap)


def test_strict_policy_raises_on_invisible_link():
    spec = ConstellationSpec(2, 3, 200.0, 53.0)  # 120 deg apart in plane at 200 km: occulted
    states = constellation_states(walker_elements(spec), 0.0)
    gv = visibility_graph(states)
    with pytest.raises(PolicyInfeasible):
        apply_isl_policy(gv, spec, IslPolicy(strict=True), states)
    snap = apply_isl_policy(gv, spec, IslPolicy(), states)
    assert snap.dropped


def test_visibility_graph_is_superset(iridium_series):
    states = constellation_states(walker_elements(IRIDIUM), 0.0)
    gv = visibility_graph(states)
    assert iridium_series[0].edge_pairs() <= gv.edge_pairs()


def test_grid_order_from_shuffled_elements():
    els = walker_elements(STARLINK_SMALL)
    rng = np.random.default_rng(3)
    shuffled = [els[i] for i in rng.permutation(len(els))]
    ordered = order_elements_as_grid(shuffled, STARLINK_SMALL)
    assert [e.raan_rad for e in ordered] == pytest.approx([e.raan_rad for e in els])


def test_adjacency_text_roundtrip(iridium_series):
    snap = iridium_series[3]
    back = from_adjacency_text(to_adjacency_text(snap), snap.t_s)
    assert back.edge_pairs() == snap.edge_pairs()
    assert back.port_map == snap.port_map


def test_adjacency_csv_roundtrip(iridium_series):
    buf = io.StringIO()
    write_adjacency_csv(iridium_series[:3], buf)
    buf.seek(0)
    back = read_adjacency_csv(buf)
    assert [b.edge_pairs() for b in back] == [s.edge_pairs() for s in iridium_series[:3]]
