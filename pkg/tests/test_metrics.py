import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqgrid.metrics import (
    access_for_equity,
    compute_metrics,
    gini,
    lorenz,
    metrics_from_dict,
    read_lorenz_csv,
    seii,
    technical_metrics,
    write_lorenz_csv,
)
from eqgrid.model import BessUnit
from eqgrid.sched import baseline_costs

from helpers import gini_pairwise, make_schedule, scenario


@pytest.mark.parametrize("x, g", [([1, 1, 1, 1], 0.0), ([0, 1], 0.5), ([0, 0, 0, 1], 0.75), ([0, 0], 0.0)])
def test_gini_examples(x, g):
    assert gini(x) == pytest.approx(g, abs=1e-15)


def test_gini_rejects_negative():
    with pytest.raises(ValueError):
        gini([1.0, -0.1])
    with pytest.raises(ValueError):
        lorenz([math.nan, 1.0])


def _auc(points):
    p = np.asarray(points)
    return float(np.sum((p[1:, 0] - p[:-1, 0]) * (p[1:, 1] + p[:-1, 1]) / 2))


def test_gini_properties_on_random_vectors():
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.exponential(size=int(rng.integers(2, 60)))
        g = gini(x)
        assert gini(x * rng.uniform(0.01, 100)) == pytest.approx(g, abs=1e-12)
        assert gini(rng.permutation(x)) == pytest.approx(g, abs=1e-12)
        assert g == pytest.approx(gini_pairwise(x), abs=1e-12)
        assert abs(g - (1 - 2 * _auc(lorenz(x)))) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=40))
def test_gini_range(x):
    assert 0.0 <= gini(x) <= 1.0


def test_lorenz_examples():
    assert lorenz([1, 1]).tolist() == [[0, 0], [0.5, 0.5], [1, 1]]
    assert lorenz([1, 0]).tolist() == [[0, 0], [0.5, 0], [1, 1]]


def test_lorenz_shape():
    rng = np.random.default_rng(1)
    pts = lorenz(rng.exponential(size=50))
    assert pts.shape == (51, 2)
    assert pts[0].tolist() == [0, 0] and pts[-1].tolist() == pytest.approx([1, 1])
    assert np.all(np.diff(pts, axis=0) >= 0)
    assert np.all(pts[:, 1] <= pts[:, 0] + 1e-12)


def test_lorenz_csv_round_trip(tmp_path):
    pts = lorenz([0.1, 0.4, 0.2])
    write_lorenz_csv(pts, tmp_path / "l.csv")
    assert np.allclose(read_lorenz_csv(tmp_path / "l.csv"), pts, atol=5e-7)
    assert (tmp_path / "l.csv").read_text().splitlines()[0] == "population_share,access_share"


def test_seii_examples():
    assert seii([1, 2], [2, 1]) == pytest.approx(1.0)
    assert seii([1, 2], [1, 2]) == pytest.approx(0.0)
    rho = np.corrcoef([1, 2, 3], [2, 2, 1])[0, 1]
    assert rho == pytest.approx(-math.sqrt(3) / 2)
    assert seii([1, 2, 3], [2, 2, 1]) == pytest.approx((1 + math.sqrt(3) / 2) / 2)


def test_seii_errors():
    with pytest.raises(ValueError, match="constant"):
        seii([1, 2, 3], [1, 1, 1])
    with pytest.raises(ValueError):
        seii([1], [1])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(1, 1e6), st.floats(0.1, 2.0)), min_size=2, max_size=20))
def test_seii_range(pairs):
    x, y = map(np.array, zip(*pairs))
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return
    assert 0.0 <= seii(x, y) <= 1.0


def test_access_clamp():
    assert access_for_equity([-0.2, 0.3]).tolist() == [0.0, 0.3]


def _sc():
    return scenario([[1.0, 2.0], [1.0, 1.0]], [10.0, 20.0], solar=[[1.0, 1.0]], bess=[BessUnit(0, 2.0, 1.0)])


def test_technical_metrics():
    sc = _sc()
    s = make_schedule(sc, p_grid=[[0.0, 1.0], [0.0, 1.0]], solar=[[1.0, 0.0], [0.0, 1.0]], p_peak=3.0,
                      bess_discharge=[[0.0, 1.0]], discharge=[[0.0, 1.0], [1.0, 0.0]])
    m = technical_metrics(s, sc)
    assert m["peak_original"] == 3.0 and m["peak_reduction_pct"] == 0.0
    assert m["solar_utilization_pct"] == pytest.approx(100.0)
    assert m["avg_bess_cycles"] == pytest.approx(0.5)
    s = make_schedule(sc, p_grid=[[1.0, 1.0], [1.0, 0.5]], p_peak=1.5)
    m = technical_metrics(s, sc)
    assert m["peak_reduction_pct"] == pytest.approx(50.0)
    assert m["solar_utilization_pct"] == 0.0


def test_not_applicable_markers():
    sc = scenario([[1.0]], [1.0])
    m = technical_metrics(make_schedule(sc, p_grid=[[1.0]]), sc)
    assert m["solar_utilization_pct"] is None and m["avg_bess_cycles"] is None


def test_compute_metrics_report():
    sc = _sc()
    s = make_schedule(sc, p_grid=[[0.5, 1.0], [0.5, 1.0]], solar=[[0.5, 1.0], [0.5, 0.0]])
    base = baseline_costs(sc)
    rep = compute_metrics(s, sc, base, final_weights=[1.5, 0.5])
    coop = float(sc.prices @ s.p_grid.sum(axis=0)) + sc.params.c_peak * s.p_peak
    assert rep.cooperative_cost == pytest.approx(coop)
    assert rep.cooperative_gain == base.total - rep.cooperative_cost
    assert rep.gini == pytest.approx(gini([1.5 / 3, 0.5 / 2]))
    assert rep.seii is None  # equal incomes
    d = rep.to_dict()
    assert metrics_from_dict(d).to_dict() == d
