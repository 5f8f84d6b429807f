import json

import numpy as np
import pytest

from siggm import simgen
from siggm.model_core import InputError, PrecisionEstimate, partial_correlation, triu_pairs
from siggm.simgen import (
    GraphTopology,
    ScSpec,
    gen_graph,
    gen_precision,
    gen_sc,
    make_ground_truth,
    read_bundle,
    sample_timeseries,
    verify_ground_truth,
    write_bundle,
)


def degree_sequence(edges, p):
    deg = np.zeros(p, dtype=int)
    for j, k in edges:
        deg[j] += 1
        deg[k] += 1
    return deg


# ---------------------------------------------------------------------------
# gen_graph


def test_topology_validation():
    with pytest.raises(InputError):
        GraphTopology(kind="erdos_renyi", p=2)
    with pytest.raises(InputError):
        GraphTopology(kind="bogus", p=10)
    with pytest.raises(InputError):
        GraphTopology(kind="erdos_renyi", p=10, er_prob=1.5)


def test_er_edge_count_within_binomial_bounds():
    p, prob = 100, 0.15
    n_pairs = p * (p - 1) // 2
    mean = n_pairs * prob
    sd = np.sqrt(n_pairs * prob * (1 - prob))
    edges = gen_graph(GraphTopology(kind="erdos_renyi", p=p, er_prob=prob, seed=7))
    assert abs(len(edges) - mean) <= 3 * sd


def test_ring_lattice_when_no_rewiring():
    topo = GraphTopology(kind="small_world", p=30, sw_neighbors=4, sw_rewire=0.0, seed=0)
    edges = gen_graph(topo)
    deg = degree_sequence(edges, 30)
    assert np.all(deg == 8)


def test_scale_free_hub_property():
    for seed in range(20):
        edges = gen_graph(GraphTopology(kind="scale_free", p=200, sf_attach=3, seed=seed))
        deg = degree_sequence(edges, 200)
        assert deg.max() >= 5 * np.median(deg), (seed, deg.max(), np.median(deg))


def test_gen_graph_deterministic():
    topo = GraphTopology(kind="erdos_renyi", p=40, seed=11)
    assert gen_graph(topo) == gen_graph(topo)


# ---------------------------------------------------------------------------
# gen_precision


def test_empty_graph_gives_identity():
    est = gen_precision(frozenset(), 6, seed=0)
    assert np.array_equal(est.omega, np.eye(6))


def test_precision_eigenvalue_margin_and_support():
    for seed in range(10):
        graph = gen_graph(GraphTopology(kind="erdos_renyi", p=20, er_prob=0.3, seed=seed))
        est = gen_precision(graph, 20, seed=seed)
        assert np.linalg.eigvalsh(est.omega).min() >= 0.1 - 1e-10
        assert est.edge_set == graph
        np.linalg.cholesky(est.omega)


# ---------------------------------------------------------------------------
# gen_sc


def _fixture_precision(seed=0, p=40):
    graph = gen_graph(GraphTopology(kind="erdos_renyi", p=p, er_prob=0.25, seed=seed))
    return gen_precision(graph, p, seed=seed)


def test_sc_no_misspec_sits_on_true_edges():
    omega = _fixture_precision()
    sc = gen_sc(omega, ScSpec("MI", misspec_frac=0.0, seed=1))
    rows, cols = triu_pairs(omega.p)
    for j, k in zip(rows, cols):
        if sc.P[j, k] > 0:
            assert (j, k) in omega.edge_set


def test_sc_misspec_fraction_exact():
    omega = _fixture_precision()
    p = omega.p
    n_non = p * (p - 1) // 2 - len(omega.edge_set)
    for frac in (0.04, 0.10, 0.20, 0.50):
        sc = gen_sc(omega, ScSpec("MI", misspec_frac=frac, seed=2))
        rows, cols = triu_pairs(p)
        bad = sum(
            1 for j, k in zip(rows, cols)
            if sc.P[j, k] > 0 and (j, k) not in omega.edge_set
        )
        assert bad == int(round(frac * n_non))


def test_sc_band_structure_by_fc_tercile():
    omega = _fixture_precision(seed=3)
    sc = gen_sc(omega, ScSpec("MI", misspec_frac=0.0, seed=3))
    R = partial_correlation(omega)
    edges = sorted(omega.edge_set)
    strengths = np.array([abs(R[j, k]) for j, k in edges])
    order = np.argsort(-strengths, kind="stable")
    thirds = np.array_split(order, 3)
    moderate, weak = set(thirds[1].tolist()), set(thirds[2].tolist())
    for idx, (j, k) in enumerate(edges):
        v = sc.P[j, k]
        assert 0.0 < v < 1.0
        if idx in moderate:
            assert 0.3 <= v <= 0.7
        elif idx in weak:
            assert v <= 0.3


def test_sc_strong_bucket_proportions_mi():
    # aggregate over seeds: strong-FC edges land in the three bands with
    # proportions near (0.5, 0.25, 0.25)
    counts = np.zeros(3)
    total = 0
    for seed in range(25):
        omega = _fixture_precision(seed=seed, p=30)
        sc = gen_sc(omega, ScSpec("MI", misspec_frac=0.0, seed=seed))
        R = partial_correlation(omega)
        edges = sorted(omega.edge_set)
        strengths = np.array([abs(R[j, k]) for j, k in edges])
        order = np.argsort(-strengths, kind="stable")
        strong = np.array_split(order, 3)[0]
        for idx in strong:
            v = sc.P[edges[int(idx)]]
            counts[0 if v > 0.7 else (1 if v > 0.3 else 2)] += 1
            total += 1
    props = counts / total
    # 99% multinomial bounds: ~2.6 standard errors on each component
    for got, want in zip(props, (0.5, 0.25, 0.25)):
        se = np.sqrt(want * (1 - want) / total)
        assert abs(got - want) <= 2.6 * se, (props, total)


def test_sc_requires_three_edges():
    est = gen_precision(frozenset({(0, 1)}), 4, seed=0)
    with pytest.raises(InputError):
        gen_sc(est, ScSpec("MI", 0.1, seed=0))


# ---------------------------------------------------------------------------
# sample_timeseries


def test_timeseries_identity_cross_correlations_small():
    ts = sample_timeseries(PrecisionEstimate(omega=np.eye(6)), T=10_000, seed=0)
    C = np.corrcoef(ts.values.T)
    off = C[~np.eye(6, dtype=bool)]
    assert np.max(np.abs(off)) < 0.05


def test_timeseries_covariance_matches_inverse_precision():
    rng = np.random.default_rng(5)
    graph = frozenset({(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)})
    omega = gen_precision(graph, 5, seed=4)
    cov_true = np.linalg.inv(omega.omega)
    ts = sample_timeseries(omega, T=100_000, seed=9)
    emp = ts.values.T @ ts.values / 100_000
    # Monte-Carlo se of an entry of the sample covariance
    for j in range(5):
        for k in range(5):
            se = np.sqrt((cov_true[j, j] * cov_true[k, k] + cov_true[j, k] ** 2) / 100_000)
            assert abs(emp[j, k] - cov_true[j, k]) <= 3 * se + 1e-12


def test_timeseries_deterministic():
    omega = PrecisionEstimate(omega=np.eye(4))
    a = sample_timeseries(omega, T=50, seed=3)
    b = sample_timeseries(omega, T=50, seed=3)
    assert np.array_equal(a.values, b.values)


# ---------------------------------------------------------------------------
# bundles


def test_ground_truth_invariants_and_roundtrip(tmp_path):
    topo = GraphTopology(kind="small_world", p=20, seed=2)
    gt = make_ground_truth(topo, ScSpec("MII", 0.2, seed=2), T=60, seed=2)
    verify_ground_truth(gt)
    assert gt.omega_true.edge_set == gt.graph
    assert np.all(np.diag(gt.sc.P) == 0)
    assert np.all((gt.sc.P >= 0) & (gt.sc.P <= 1))

    write_bundle(gt, tmp_path / "b", meta={"seed": 2, "scenario": "MII"})
    back = read_bundle(tmp_path / "b")
    verify_ground_truth(back)
    assert np.allclose(back.omega_true.omega, gt.omega_true.omega)
    assert np.allclose(back.sc.P, gt.sc.P)
    assert np.allclose(back.timeseries.values, gt.timeseries.values)
    meta = json.loads((tmp_path / "b" / "meta.json").read_text())
    assert meta["seed"] == 2 and meta["p"] == 20 and meta["T"] == 60


def test_make_ground_truth_deterministic():
    topo = GraphTopology(kind="erdos_renyi", p=15, seed=8)
    a = make_ground_truth(topo, ScSpec("MI", 0.1, seed=1), T=40, seed=5)
    b = make_ground_truth(topo, ScSpec("MI", 0.1, seed=1), T=40, seed=5)
    assert np.array_equal(a.timeseries.values, b.timeseries.values)
    assert np.array_equal(a.sc.P, b.sc.P)
