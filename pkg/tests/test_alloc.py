import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqgrid.alloc import (
    COMPONENTS,
    AllocationReport,
    allocate,
    bess_component,
    cooperative_gain,
    grid_component,
    net_shares,
    normalize,
    peak_component,
    solar_component,
)
from eqgrid.model import BessUnit

from helpers import make_schedule, scenario, shapley_classical


def _sc(n=2, T=2, **kw):
    return scenario(np.ones((n, T)), np.array([10.0, 30.0][:T] + [20.0] * max(0, T - 2)), **kw)


def test_solar_component():
    sc = _sc()
    assert solar_component(make_schedule(sc), sc, [1, 2]).tolist() == [0.0, 0.0]
    sc = _sc(solar=[[1.0, 1.0]])
    s = make_schedule(sc, solar=[[0.5, 0.5], [0.5, 0.5]])
    raw = solar_component(s, sc, [1.0, 2.0])
    assert raw[1] / raw[0] == pytest.approx(2.0)
    # three households, p_avg = 20: intake [0.2, 0.5, 1.0] times weights [1, 0.5, 2]
    sc = _sc(3, solar=[[2.0, 2.0]])
    s = make_schedule(sc, solar=[[0.2, 0.0], [0.25, 0.25], [0.5, 0.5]])
    assert solar_component(s, sc, [1.0, 0.5, 2.0]).tolist() == pytest.approx([4.0, 5.0, 40.0])


def test_bess_component():
    sc = _sc(bess=[BessUnit(0, 1.0, 0.5)])
    assert bess_component(make_schedule(sc), [1, 1], 0.1).tolist() == [0.0, 0.0]
    s = make_schedule(sc, charge=[[0.2, 0.0], [0.2, 0.0]])
    raw = bess_component(s, [1.0, 2.0], 0.1)
    assert raw[0] / raw[1] == pytest.approx(2.0)
    s = make_schedule(sc, charge=[[0.3, 0.0], [0.1, 0.0]], discharge=[[0.0, 0.1], [0.0, 0.4]])
    assert bess_component(s, [0.5, 2.0], 0.1).tolist() == pytest.approx([0.08, 0.025])


def test_peak_component():
    sc = _sc(1)
    assert peak_component(make_schedule(sc, p_grid=[[1.0, 0.5]]), [1.0], 8700).tolist() == [0.0]
    sc = _sc()
    s = make_schedule(sc, p_grid=[[0.2, 0.1], [0.1, 0.8]], p_peak=0.9)
    raw = peak_component(s, [1.0, 1.0], 1.0)
    assert raw.tolist() == pytest.approx([0.7, 0.1])
    assert peak_component(s, [2.0, 0.5], 10.0).tolist() == pytest.approx([14.0, 0.5])


def test_peak_component_clamps_noise():
    sc = _sc()
    s = make_schedule(sc, p_grid=[[1.0, 0.0], [0.0, 0.5]], p_peak=1.0 - 1e-12)
    assert peak_component(s, [1, 1], 1.0)[0] == 0.0


def test_grid_component():
    sc = _sc()
    assert grid_component(make_schedule(sc), [1, 1], 20.0).tolist() == [0.0, 0.0]
    s = make_schedule(sc, p_grid=[[1.0, 1.0], [1.0, 1.0]])
    a, b = grid_component(s, [1, 1], 20.0)
    assert a == b
    s = make_schedule(sc, p_grid=[[1.0, 1.0], [2.0, 0.0]])
    # weighted usage 2*0.5 + 2*2 = 5
    assert grid_component(s, [0.5, 2.0], 20.0).tolist() == pytest.approx([8.0, 8.0])


def test_normalize():
    assert normalize([2, 3, 5]).tolist() == pytest.approx([0.2, 0.3, 0.5])
    assert normalize([0, 0]).tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        normalize([1.0, -1.0])


def test_uniform_components_give_zero_net():
    raw = {c: np.full(4, 3.0) for c in COMPONENTS}
    _, net = net_shares(raw)
    assert np.allclose(net, 0.0)


def test_net_share_length_check():
    raw = {c: np.ones(3) for c in COMPONENTS}
    raw["grid"] = np.ones(2)
    with pytest.raises(ValueError):
        net_shares(raw)


@pytest.mark.parametrize("no_coop, coop, gain", [(36752.44, 30271.08, 6481.36), (10466.38, 4749.24, 5717.14),
                                                 (5.0, 5.0, 0.0)])
def test_cooperative_gain(no_coop, coop, gain):
    assert cooperative_gain(no_coop, coop) == pytest.approx(gain, abs=1e-9)
    assert cooperative_gain(no_coop, coop) == no_coop - coop


def test_cooperative_gain_rejects_nan():
    with pytest.raises(ValueError):
        cooperative_gain(float("nan"), 1.0)


raw_vec = st.lists(st.floats(0.0, 1e3, allow_nan=False), min_size=2, max_size=8)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_share_algebra(data):
    n = data.draw(st.integers(2, 8))
    comp = st.lists(st.floats(0.0, 1e3, allow_nan=False), min_size=n, max_size=n)
    raw = {c: np.array(data.draw(comp)) for c in COMPONENTS}
    hat, net = net_shares(raw)
    assert abs(net.sum()) <= 1e-9 or not all(raw[c].sum() > 0 for c in COMPONENTS)
    for c in COMPONENTS:
        assert np.all((hat[c] >= 0) & (hat[c] <= 1))
        if raw[c].sum() > 0:
            assert abs(hat[c].sum() - 1) <= 1e-9
    k = data.draw(st.floats(1e-3, 1e3))
    hat2, net2 = net_shares({c: k * raw[c] for c in COMPONENTS})
    for c in COMPONENTS:
        assert np.allclose(hat2[c], hat[c], atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.1, 5.0), min_size=3, max_size=3), st.integers(0, 2), st.floats(1.01, 3.0))
def test_weight_monotonicity_at_fixed_schedule(intake, j, factor):
    sc = _sc(3, solar=[[10.0, 10.0]], bess=[BessUnit(0, 1.0, 0.5)])
    s = make_schedule(sc, p_grid=[[0.3, 0.5], [0.2, 0.4], [0.6, 0.1]], p_peak=1.2,
                      solar=np.tile(np.array(intake)[:, None], (1, 2)), charge=np.tile(np.array(intake)[:, None], (1, 2)))
    w = np.array([0.5, 1.0, 1.5])
    w2 = w.copy()
    w2[j] = min(w[j] * factor, 2.0)
    if w2[j] <= w[j]:
        return
    before = allocate(s, sc, 1.0, 1.0, w).hat
    after = allocate(s, sc, 1.0, 1.0, w2).hat
    assert after["solar"][j] > before["solar"][j]
    assert after["peak"][j] > before["peak"][j]
    assert after["bess"][j] < before["bess"][j]


def test_report_json(tmp_path):
    sc = _sc(3, solar=[[2.0, 2.0]])
    sc = type(sc)(tuple(reversed(sc.households)), sc.solar, sc.bess, sc.prices, sc.params)  # ids 2, 1, 0
    s = make_schedule(sc, p_grid=[[1.0, 0.5], [0.5, 0.5], [0.2, 0.9]], solar=[[0.0, 0.5], [0.5, 0.5], [0.8, 0.1]])
    rep = allocate(s, sc, 100.0, 60.0)
    d = json.loads(rep.to_json())
    assert [h["id"] for h in d["households"]] == [0, 1, 2]
    assert d["cooperative_gain"] == 40.0
    assert set(d["households"][0]) == {"id", "net_share"} | {f"phi_{c}" for c in COMPONENTS} | {
        f"hat_phi_{c}" for c in COMPONENTS}
    back = AllocationReport.from_dict(d)
    assert back.to_dict() == d


def test_weights_must_be_positive():
    sc = _sc()
    with pytest.raises(ValueError):
        bess_component(make_schedule(sc), [0.0, 1.0], 0.1)


def test_classical_shapley_differs_from_component_shares():
    """Proportional component shares only coincide with the classical Shapley value on additive games."""
    stand_alone = np.array([3.0, 1.0, 2.0])
    additive = shapley_classical(3, lambda s: sum(stand_alone[i] for i in s))
    assert np.allclose(additive, stand_alone)
    assert np.allclose(additive / additive.sum(), normalize(stand_alone))

    # savings game: any pair saves 1, the grand coalition saves 3
    def saving(s):
        return {0: 0.0, 1: 0.0, 2: 1.0, 3: 3.0}[len(s)]

    phi = shapley_classical(3, saving)
    assert phi.sum() == pytest.approx(3.0)  # efficiency
    assert np.allclose(phi, 1.0)
    proportional = 3.0 * normalize([0.5, 1.0, 1.5])
    assert not np.allclose(proportional, phi)
