"""Synthetic data factory: graphs, precision matrices, structural priors
with controlled mis-specification, and Gaussian time series.

Structural-prior scenarios assign connection strengths to true edges by
functional-strength tercile (strong / moderate / weak partial correlation)
with scenario-specific proportions, and plant a controlled fraction of
spurious strengths on non-edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import networkx as nx
import numpy as np

from .model_core import (
    InputError,
    PrecisionEstimate,
    StructuralPrior,
    TimeSeriesData,
    partial_correlation,
    triu_pairs,
)

PD_MARGIN = 0.1

SCENARIO_PROPORTIONS = {
    "MI": (0.50, 0.25, 0.25),
    "MII": (0.30, 0.35, 0.35),
}


@dataclass(frozen=True)
class GraphTopology:
    kind: str  # erdos_renyi | small_world | scale_free
    p: int
    er_prob: float = 0.15
    sw_neighbors: int = 5
    sw_rewire: float = 0.1
    sf_attach: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.p < 3:
            raise InputError(f"need p >= 3, got {self.p}")
        if self.kind not in ("erdos_renyi", "small_world", "scale_free"):
            raise InputError(f"unknown topology {self.kind!r}")
        if not (0 <= self.er_prob <= 1 and 0 <= self.sw_rewire <= 1):
            raise InputError("probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class ScSpec:
    scenario: str  # MI | MII
    misspec_frac: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIO_PROPORTIONS:
            raise InputError(f"unknown scenario {self.scenario!r}")
        if not 0 <= self.misspec_frac <= 1:
            raise InputError("misspec_frac must lie in [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    graph: frozenset
    omega_true: PrecisionEstimate
    sc: StructuralPrior
    timeseries: TimeSeriesData


def gen_graph(topo: GraphTopology) -> frozenset:
    """Seeded edge set under one of the three standard random-graph models."""
    if topo.kind == "erdos_renyi":
        g = nx.gnp_random_graph(topo.p, topo.er_prob, seed=topo.seed)
    elif topo.kind == "small_world":
        g = nx.watts_strogatz_graph(topo.p, 2 * topo.sw_neighbors, topo.sw_rewire, seed=topo.seed)
    else:
        g = nx.barabasi_albert_graph(topo.p, topo.sf_attach, seed=topo.seed)
    return frozenset((min(u, v), max(u, v)) for u, v in g.edges())


def gen_precision(graph: frozenset, p: int, seed: int = 0) -> PrecisionEstimate:
    """Uniform(-1,1) entries on the edges, unit diagonal, then a shift of
    |lambda_min| + 0.1 on the diagonal whenever the smallest eigenvalue is
    negative (the extra margin keeps the matrix comfortably invertible)."""
    rng = np.random.default_rng(seed)
    O = np.zeros((p, p))
    for j, k in sorted(graph):
        v = rng.uniform(-1.0, 1.0)
        while abs(v) < 1e-6:  # atomless in principle; guard fp-tiny draws
            v = rng.uniform(-1.0, 1.0)
        O[j, k] = O[k, j] = v
    np.fill_diagonal(O, 1.0)
    lam_min = float(np.linalg.eigvalsh(O)[0])
    if lam_min < PD_MARGIN:
        O += (abs(lam_min) + PD_MARGIN) * np.eye(p) if lam_min < 0 else (PD_MARGIN - lam_min) * np.eye(p)
    return PrecisionEstimate(omega=O)


def gen_sc(omega_true: PrecisionEstimate, spec: ScSpec) -> StructuralPrior:
    """Structural strengths from the scenario recipe.

    True edges are ranked by |partial correlation| and cut into terciles.
    Strong-functional edges draw their strength class per the scenario
    proportions; moderate ones get moderate strengths, weak ones weak
    strengths.  Non-edges are zero except for a mis-specified subset of
    size round(misspec_frac * #non-edges) with strengths in (0.3, 1).
    """
    p = omega_true.p
    rng = np.random.default_rng(spec.seed)
    R = partial_correlation(omega_true)
    edges = sorted(omega_true.edge_set)
    if len(edges) < 3:
        raise InputError("need at least 3 true edges to form strength terciles")

    strengths = np.array([abs(R[j, k]) for j, k in edges])
    order = np.argsort(-strengths, kind="stable")
    n = len(edges)
    thirds = np.array_split(order, 3)
    strong, moderate, weak = (set(ix.tolist()) for ix in thirds)

    props = SCENARIO_PROPORTIONS[spec.scenario]
    bands = [(0.7, 1.0), (0.3, 0.7), (0.0, 0.3)]

    P = np.zeros((p, p))
    for idx, (j, k) in enumerate(edges):
        if idx in strong:
            band = bands[rng.choice(3, p=props)]
        elif idx in moderate:
            band = bands[1]
        else:
            band = bands[2]
        P[j, k] = P[k, j] = rng.uniform(*band)

    rows, cols = triu_pairs(p)
    edge_set = set(edges)
    non_edges = [(int(j), int(k)) for j, k in zip(rows, cols) if (j, k) not in edge_set]
    n_bad = int(round(spec.misspec_frac * len(non_edges)))
    if n_bad > 0:
        picks = rng.choice(len(non_edges), size=n_bad, replace=False)
        for ix in picks:
            j, k = non_edges[int(ix)]
            P[j, k] = P[k, j] = rng.uniform(0.3, 1.0)
    return StructuralPrior(P=P)


def sample_timeseries(omega_true: PrecisionEstimate, T: int, seed: int = 0) -> TimeSeriesData:
    """i.i.d. zero-mean Gaussian rows with covariance omega^-1."""
    if T < 2:
        raise InputError(f"need T >= 2, got {T}")
    cov = np.linalg.inv(omega_true.omega)
    cov = (cov + cov.T) / 2.0
    L = np.linalg.cholesky(cov)
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((T, omega_true.p))
    return TimeSeriesData(values=Z @ L.T)


def make_ground_truth(topo: GraphTopology, spec: ScSpec, T: int, seed: int = 0) -> GroundTruth:
    """Full bundle with independent per-stage RNG streams off one seed."""
    s_prec, s_sc, s_ts = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(3))
    graph = gen_graph(topo)
    omega = gen_precision(graph, topo.p, seed=s_prec)
    sc = gen_sc(omega, ScSpec(spec.scenario, spec.misspec_frac, seed=s_sc))
    ts = sample_timeseries(omega, T, seed=s_ts)
    return GroundTruth(graph=graph, omega_true=omega, sc=sc, timeseries=ts)


# ---------------------------------------------------------------------------
# bundle I/O


def write_bundle(gt: GroundTruth, out_dir, meta: dict | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "omega_true.csv", gt.omega_true.omega, delimiter=",")
    np.savetxt(out / "sc.csv", gt.sc.P, delimiter=",")
    np.savetxt(out / "timeseries.csv", gt.timeseries.values, delimiter=",")
    info = {"format_version": "1.0", "p": gt.omega_true.p, "T": gt.timeseries.T_points}
    if meta:
        info.update(meta)
    tmp = out / "meta.json.tmp"
    tmp.write_text(json.dumps(info, indent=2, sort_keys=True))
    tmp.rename(out / "meta.json")


def read_bundle(in_dir) -> GroundTruth:
    src = Path(in_dir)
    omega = PrecisionEstimate(omega=np.loadtxt(src / "omega_true.csv", delimiter=",", ndmin=2))
    sc = StructuralPrior(P=np.loadtxt(src / "sc.csv", delimiter=",", ndmin=2))
    ts = TimeSeriesData(values=np.loadtxt(src / "timeseries.csv", delimiter=",", ndmin=2))
    return GroundTruth(graph=omega.edge_set, omega_true=omega, sc=sc, timeseries=ts)


def verify_ground_truth(gt: GroundTruth):
    """Raise if a bundle violates its construction invariants."""
    if gt.omega_true.edge_set != gt.graph:
        raise InputError("precision support does not match the graph")
    P = gt.sc.P
    if np.any(np.diag(P) != 0) or np.any(P < 0) or np.any(P > 1):
        raise InputError("structural prior out of range")
    np.linalg.cholesky(gt.omega_true.omega)
