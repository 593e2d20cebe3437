"""Preset topology studies and the Monte Carlo estimation study."""
import numpy as np
import pytest

from selfsync import (
    ConnectivityClass,
    EstimationConfig,
    VerdictKind,
    classify,
    preset_network,
    run_estimation_study,
    run_topology_study,
)


# === Presets ===

def test_chain_preset_structure():
    g, params = preset_network("chain", delay_s=0.05)
    rep = classify(g)
    assert rep.kind is ConnectivityClass.QSC_NOT_SC
    assert rep.root_nodes() == ((0, 1, 2),)
    assert params.n == 9
    assert np.array_equal(params.stats, np.arange(1.0, 10.0))


def test_forest_preset_structure():
    g, params = preset_network("forest", delay_s=0.05)
    rep = classify(g)
    assert rep.kind is ConnectivityClass.WC_NOT_QSC
    assert rep.root_nodes() == ((0,), (3,))
    assert params.n == 8


def test_preset_unknown_name():
    with pytest.raises(ValueError):
        preset_network("ring", delay_s=0.0)


# === Topology studies ===

def test_chain_study_reaches_global_predicted_rate():
    result = run_topology_study("chain")
    assert result.verdict.kind is VerdictKind.GLOBAL
    # Root cycle statistics are 1, 2, 3 with unit weights and three unit
    # in-gains delayed by 50 ms at K = 30: (1+2+3) / (3 + 30*3*0.05) = 0.8.
    assert result.prediction.global_omega == pytest.approx(0.8, rel=1e-12)
    assert result.verdict.omega == pytest.approx(
        result.prediction.global_omega, rel=1e-6
    )


def test_forest_study_two_clusters_middle_in_neither():
    result = run_topology_study("forest")
    assert result.verdict.kind is VerdictKind.CLUSTERED
    assert result.prediction.unresolved == (6, 7)
    assert len(result.prediction.clusters) == 2

    detected = {grp.members: grp.omega for grp in result.verdict.groups}
    for cluster in result.prediction.clusters:
        assert cluster.members in detected
        assert detected[cluster.members] == pytest.approx(cluster.omega, rel=1e-6)
        assert 6 not in cluster.members and 7 not in cluster.members


def test_forest_rates_are_the_root_statistics():
    # Singleton roots with no in-edges: delays cancel and each tree locks
    # to its root's statistic exactly.
    result = run_topology_study("forest")
    omegas = sorted(c.omega for c in result.prediction.clusters)
    assert omegas == [2.0, 4.0]


def test_study_report_json_overlay():
    result = run_topology_study("chain", horizon=10000)
    doc = result.report_json_dict()
    assert doc["class"] == "QSC_NOT_SC"
    assert doc["detected"]["verdict"] == "GLOBAL"
    assert doc["detected"]["omega"] == pytest.approx(doc["global_omega"], rel=1e-6)


def test_study_zero_lag_matches_zero_delay_prediction():
    result = run_topology_study("chain", lag_steps=0, horizon=4000)
    assert result.verdict.kind is VerdictKind.GLOBAL
    assert result.prediction.global_omega == pytest.approx(2.0, rel=1e-12)
    assert result.verdict.omega == pytest.approx(2.0, rel=1e-8)


def test_study_argument_validation():
    from selfsync import Digraph, Edge, NodeParams

    g = Digraph(2, (Edge(1, 0, 1.0, 0.0),))
    params = NodeParams(weights=[1.0, 1.0], stats=[1.0, 2.0])
    with pytest.raises(ValueError):
        run_topology_study("chain", graph=g, params=params)
    with pytest.raises(ValueError):
        run_topology_study(None)
    with pytest.raises(ValueError):
        run_topology_study(None, graph=g)  # params missing
    with pytest.raises(ValueError):
        run_topology_study("chain", lag_steps=-1)


def test_study_with_user_graph():
    from selfsync import Digraph, Edge, NodeParams

    g = Digraph(2, (Edge(1, 0, 1.0, 0.01),))
    params = NodeParams(weights=[1.0, 1.0], stats=[3.0, 0.0])
    result = run_topology_study(None, graph=g, params=params, horizon=3000)
    assert result.verdict.kind is VerdictKind.GLOBAL
    assert result.verdict.omega == pytest.approx(3.0, abs=1e-8)


# === Estimation study ===

def test_estimation_config_validation():
    with pytest.raises(ValueError):
        EstimationConfig(nodes=1)
    with pytest.raises(ValueError):
        EstimationConfig(runs=0)
    with pytest.raises(ValueError):
        EstimationConfig(amplitude=0.0)
    with pytest.raises(ValueError):
        EstimationConfig(noise_var=0.0)


def test_estimation_study_small_scale():
    cfg = EstimationConfig(nodes=8, runs=4, horizon=900, seed=12)
    summary = run_estimation_study(cfg)
    assert summary.steps.shape == (900,)
    assert summary.finals_a.shape == (4,)
    # Centralized estimates are per-run constants.
    assert np.array_equal(summary.mean_a, np.full(900, summary.mean_a[0]))
    # The debiased curve ends close to the no-delay curve.
    assert summary.mean_d[-1] == pytest.approx(summary.mean_b[-1], abs=0.02)
    doc = summary.summary_dict()
    assert doc["runs"] == 4
    assert doc["ml_variance"] == pytest.approx(1.0 / 8.0, rel=1e-15)


def test_estimation_study_deterministic():
    cfg = EstimationConfig(nodes=6, runs=3, horizon=400, seed=7)
    s1 = run_estimation_study(cfg)
    s2 = run_estimation_study(cfg)
    for attr in ("mean_a", "mean_b", "mean_c", "mean_d", "finals_d"):
        assert np.array_equal(getattr(s1, attr), getattr(s2, attr))


def test_estimation_study_zero_delay_collapses_curves():
    cfg = EstimationConfig(nodes=6, runs=3, horizon=400, delay_span_steps=0, seed=7)
    summary = run_estimation_study(cfg)
    assert np.array_equal(summary.mean_b, summary.mean_c)
    assert np.array_equal(summary.finals_b, summary.finals_c)


def test_estimation_summary_csv(tmp_path):
    cfg = EstimationConfig(nodes=6, runs=2, horizon=50, seed=1)
    summary = run_estimation_study(cfg)
    path = tmp_path / "mc.csv"
    summary.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,mean_a,mean_b,mean_c,mean_d,std_a,std_b,std_c,std_d"
    assert len(lines) == 51
    first = lines[1].split(",")
    assert first[0] == "0"
    assert float(first[1]) == summary.mean_a[0]
