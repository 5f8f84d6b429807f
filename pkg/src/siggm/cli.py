"""Command-line surface: estimation, simulation, benchmarking, metrics,
reliability, and group-difference analysis.

Exit codes: 0 success, 1 internal/convergence failure, 2 input error.
"""

from __future__ import annotations

import json
import sys
import time
import warnings
from pathlib import Path

import click
import numpy as np

from . import bench as bench_mod
from . import netmetrics as nm
from . import siggm as sg
from . import simgen
from .fileio import read_json, read_matrix_csv, read_modules_csv, write_json
from .model_core import (
    ConvergenceError,
    InputError,
    PrecisionEstimate,
    SampleCovariance,
    StructuralPrior,
    TimeSeriesData,
    partial_correlation,
    sample_covariance,
    triu_pairs,
)


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(fn):
    """Map exception classes onto the exit-code contract."""
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InputError as exc:
            _fail(2, exc)
        except (OSError, json.JSONDecodeError) as exc:
            _fail(2, exc)
        except (ConvergenceError, RuntimeError) as exc:
            _fail(1, exc)

    return wrapper


@click.group()
def main():
    """Sparse functional-network estimation with anatomical priors."""


# ---------------------------------------------------------------------------
# estimate


def _estimate_payload(result: sg.FitResult, p, wall_time, config_echo, has_sc):
    omega = result.omega.omega
    rows, cols = triu_pairs(p)
    vals = omega[rows, cols]
    nz = np.abs(vals) > result.omega.zero_tol
    R = partial_correlation(result.omega)
    return {
        "p": p,
        "omega_diag": np.diag(omega).tolist(),
        "omega_triplets": [
            [int(j), int(k), float(v)]
            for j, k, v in zip(rows[nz], cols[nz], vals[nz])
        ],
        "partial_correlation_triplets": [
            [int(j), int(k), float(R[j, k])] for j, k in zip(rows[nz], cols[nz])
        ],
        "alpha": result.state.alpha.tolist(),
        "mu": result.state.mu.tolist(),
        "eta": float(result.state.eta) if has_sc else None,
        "selected_nu": float(result.state.nu),
        "bic": float(result.bic),
        "n_iter": result.n_iter,
        "converged": result.converged,
        "wall_time_seconds": wall_time,
        "config": config_echo,
    }


def payload_to_precision(payload: dict) -> PrecisionEstimate:
    p = payload["p"]
    omega = np.diag(np.array(payload["omega_diag"], dtype=float))
    for j, k, v in payload["omega_triplets"]:
        omega[j, k] = omega[k, j] = v
    return PrecisionEstimate(omega=omega)


def payload_edge_set(payload: dict) -> frozenset:
    return frozenset((int(j), int(k)) for j, k, _ in payload["omega_triplets"])


def payload_fc_vector(payload: dict) -> np.ndarray:
    """Full flattened partial-correlation vector (zeros at absent edges)."""
    p = payload["p"]
    R = np.zeros((p, p))
    for j, k, v in payload["partial_correlation_triplets"]:
        R[j, k] = R[k, j] = v
    rows, cols = triu_pairs(p)
    return R[rows, cols]


@main.command()
@click.argument("ts_path", type=click.Path(exists=True))
@click.option("--sc", "sc_path", type=click.Path(exists=True), default=None,
              help="Structural prior CSV; omitted -> structure-free mode.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=0)
@click.option("--verbose", is_flag=True)
@_guard
def estimate(ts_path, sc_path, config_path, out, seed, verbose):
    """Estimate a sparse network from a time-series CSV."""
    t0 = time.perf_counter()
    Y = TimeSeriesData(values=read_matrix_csv(ts_path))
    p = Y.p
    if sc_path is not None:
        P = StructuralPrior(P=read_matrix_csv(sc_path))
        if P.p != p:
            raise InputError(
                f"dimension mismatch: {ts_path} has p={p}, {sc_path} has p={P.p}"
            )
        mode = "full"
    else:
        P = StructuralPrior(P=np.zeros((p, p)))
        mode = "eta_zero"

    cfg_kw = {}
    if config_path is not None:
        raw = json.loads(Path(config_path).read_text())
        for key in ("nu", "epsilon", "max_outer", "mode"):
            if key in raw:
                cfg_kw[key] = tuple(raw[key]) if key == "nu" and isinstance(raw[key], list) else raw[key]
        if "hyper_overrides" in raw:
            cfg_kw["hyper_overrides"] = sg.HyperOverrides(**raw["hyper_overrides"])
    cfg_kw.setdefault("mode", mode)
    cfg = sg.FitConfig(seed=seed, **cfg_kw)

    with warnings.catch_warnings():
        if not verbose:
            warnings.simplefilter("ignore")
        path, idx = sg.fit_path(Y, P, cfg)
    result = path[idx]
    echo = {"mode": cfg.mode, "epsilon": cfg.epsilon, "seed": seed,
            "ts_path": str(ts_path), "sc_path": str(sc_path) if sc_path else None}
    write_json(out, _estimate_payload(result, p, time.perf_counter() - t0, echo, sc_path is not None))
    if verbose:
        click.echo(f"selected nu={result.state.nu:.4g}, edges={len(result.omega.edge_set)}")


# ---------------------------------------------------------------------------
# simulate


@main.command()
@click.option("--structure", type=click.Choice(["er", "sw", "sf"]), required=True)
@click.option("--p", type=int, required=True)
@click.option("--t", "t_points", type=int, default=200, help="Number of time points.")
@click.option("--scenario", type=click.Choice(["MI", "MII"]), default="MI")
@click.option("--misspec", type=float, default=0.10)
@click.option("--er-prob", type=float, default=0.15)
@click.option("--sw-neighbors", type=int, default=5)
@click.option("--sw-rewire", type=float, default=0.1)
@click.option("--sf-attach", type=int, default=3)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--verify", is_flag=True, help="Re-check bundle invariants after writing.")
@_guard
def simulate(structure, p, t_points, scenario, misspec, er_prob, sw_neighbors,
             sw_rewire, sf_attach, seed, out_dir, verify):
    """Generate a ground-truth bundle (omega, SC, time series, meta)."""
    topo = simgen.GraphTopology(
        kind=bench_mod.STRUCTURE_KINDS[structure], p=p, er_prob=er_prob,
        sw_neighbors=sw_neighbors, sw_rewire=sw_rewire, sf_attach=sf_attach, seed=seed,
    )
    spec = simgen.ScSpec(scenario=scenario, misspec_frac=misspec, seed=seed)
    gt = simgen.make_ground_truth(topo, spec, T=t_points, seed=seed)
    meta = {
        "structure": structure, "scenario": scenario, "misspec_frac": misspec,
        "seed": seed, "er_prob": er_prob, "sw_neighbors": sw_neighbors,
        "sw_rewire": sw_rewire, "sf_attach": sf_attach,
        "n_edges": len(gt.graph),
    }
    simgen.write_bundle(gt, out_dir, meta=meta)
    if verify:
        simgen.verify_ground_truth(simgen.read_bundle(out_dir))
        click.echo("bundle verified")


# ---------------------------------------------------------------------------
# bench


def _parse_sweep(spec_str):
    try:
        start, stop, step = (float(x) for x in spec_str.split(":"))
    except ValueError:
        raise InputError(f"--sweep-misspec expects start:stop:step, got {spec_str!r}") from None
    if step <= 0 or stop < start:
        raise InputError("invalid sweep range")
    return [round(v, 6) for v in np.arange(start, stop + step / 2, step)]


@main.command(name="bench")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--sweep-misspec", default=None,
              help="start:stop:step; emit per-level curves as CSV instead of the table.")
@click.option("--import", "import_path", type=click.Path(exists=True), default=None,
              help="JSON mapping external method names to directories of per-replicate precision CSVs.")
@click.option("--verbose", is_flag=True)
@_guard
def bench(config_path, out, sweep_misspec, import_path, verbose):
    """Run the simulation benchmark described by a JSON config."""
    raw = json.loads(Path(config_path).read_text())
    cfg = bench_mod.BenchmarkConfig(
        structures=tuple(raw.get("structures", ["sw"])),
        p_values=tuple(raw.get("p_values", [100])),
        scenarios=tuple((s, float(f)) for s, f in raw.get("scenarios", [["MI", 0.10]])),
        T=int(raw.get("T", 200)),
        n_replicates=int(raw.get("n_replicates", 10)),
        methods=tuple(raw.get("methods", ["siggm", "siggm_eta0", "glasso"])),
        master_seed=int(raw.get("master_seed", 0)),
        nu=tuple(raw["nu"]) if "nu" in raw else None,
        topology=raw.get("topology", {}),
    )
    progress = None
    if verbose:
        def progress(done, total):
            click.echo(f"  replicate {done}/{total}", err=True)

    if sweep_misspec is not None:
        fracs = _parse_sweep(sweep_misspec)
        rows = bench_mod.sweep_misspec(
            cfg.structures[0], cfg.p_values[0], fracs, cfg.methods,
            cfg.n_replicates, cfg.master_seed, T=cfg.T,
            scenario=cfg.scenarios[0][0], topology=cfg.topology, progress=progress,
        )
        header = "method,misspec,l1,l1_se,auc,mcc"
        lines = [header] + [
            f"{r['method']},{r['misspec']},{r['l1']},{r['l1_se']},{r['auc']},{r['mcc']}"
            for r in rows
        ]
        from .fileio import atomic_write_text

        atomic_write_text(out, "\n".join(lines) + "\n")
        return

    rows = bench_mod.run_benchmark(cfg, progress=progress)
    if import_path is not None:
        rows += _score_imports(import_path, cfg)
    write_json(out, {"rows": rows, "config": raw})
    from .fileio import atomic_write_text

    atomic_write_text(Path(out).with_suffix(".txt"), bench_mod.render_table(rows) + "\n")


def _score_imports(import_path, cfg: bench_mod.BenchmarkConfig):
    """Score externally produced precision matrices against the same truths."""
    mapping = json.loads(Path(import_path).read_text())
    rows = []
    for name, directory in mapping.items():
        directory = Path(directory)
        for structure in cfg.structures:
            for p in cfg.p_values:
                for scenario, misspec in cfg.scenarios:
                    scores = []
                    for rep in range(cfg.n_replicates):
                        f = directory / f"rep{rep}.csv"
                        if not f.exists():
                            continue
                        tag = f"{structure}/{p}/{scenario}/{misspec}/{rep}"
                        seed = bench_mod._replicate_seed(cfg.master_seed, tag)
                        topo = simgen.GraphTopology(
                            kind=bench_mod.STRUCTURE_KINDS[structure], p=p,
                            seed=seed % (2**31), **cfg.topology)
                        gt = simgen.make_ground_truth(
                            topo, simgen.ScSpec(scenario, misspec), T=cfg.T,
                            seed=seed % (2**31) + 1)
                        est = PrecisionEstimate(omega=read_matrix_csv(f))
                        scores.append(bench_mod.score(est, [est.edge_set], gt))
                    if not scores:
                        continue
                    row = {"method": name, "structure": structure,
                           "scenario": f"{scenario}({misspec:g})", "p": p,
                           "n_replicates": len(scores),
                           "partial": len(scores) < cfg.n_replicates,
                           "runtime_seconds": 0.0, "runtime_seconds_se": 0.0}
                    for k in ("eglob_bias", "mcc", "auc", "l1"):
                        v = np.array([s[k] for s in scores])
                        row[k] = float(v.mean())
                        row[k + "_se"] = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
                    rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# metrics


@main.command()
@click.argument("estimate_json", type=click.Path(exists=True))
@click.option("--truth", "truth_dir", type=click.Path(exists=True), required=True)
@click.option("--out", required=True, type=click.Path())
@_guard
def metrics(estimate_json, truth_dir, out):
    """Score an estimate JSON against a ground-truth bundle."""
    payload = read_json(estimate_json)
    gt = simgen.read_bundle(truth_dir)
    p = gt.omega_true.p
    if payload["p"] != p:
        raise InputError(f"estimate has p={payload['p']}, truth has p={p}")
    est = payload_to_precision(payload)
    edges = payload_edge_set(payload)
    c = nm.confusion(edges, gt.graph, p)
    record = {
        "p": p,
        "tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn,
        "sensitivity": c.sensitivity,
        "specificity": c.specificity,
        "mcc": nm.mcc(c),
        "l1": nm.rel_l1_error(est.omega, gt.omega_true.omega),
        "global_efficiency": nm.global_efficiency(edges, p),
        "eglob_bias": nm.global_efficiency(edges, p) - nm.global_efficiency(gt.graph, p),
    }
    write_json(out, record)


# ---------------------------------------------------------------------------
# icc


ICC_METRICS = ("clustering", "char_path_length", "local_efficiency",
               "global_efficiency", "mean_degree")


@main.command()
@click.argument("session1_dir", type=click.Path(exists=True))
@click.argument("session2_dir", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--shuffle-pairs", is_flag=True,
              help="Diagnostic: shuffle the subject pairing before ICC.")
@click.option("--seed", type=int, default=0)
@_guard
def icc(session1_dir, session2_dir, out, shuffle_pairs, seed):
    """Test-retest reliability of graph summaries across two sessions."""
    d1, d2 = Path(session1_dir), Path(session2_dir)
    names1 = sorted(f.name for f in d1.glob("*.json"))
    names2 = sorted(f.name for f in d2.glob("*.json"))
    unmatched = sorted(set(names1) ^ set(names2))
    if unmatched:
        raise InputError(f"unmatched subjects between sessions: {unmatched}")
    if len(names1) < 2:
        raise InputError("need at least 2 matched subjects")

    def summaries(path):
        payload = read_json(path)
        return nm.graph_summaries(payload_edge_set(payload), payload["p"])

    s1 = [summaries(d1 / n) for n in names1]
    s2 = [summaries(d2 / n) for n in names1]
    if shuffle_pairs:
        rng = np.random.default_rng(seed)
        s2 = [s2[i] for i in rng.permutation(len(s2))]

    table = []
    for metric in ICC_METRICS:
        X = np.array([[a[metric], b[metric]] for a, b in zip(s1, s2)])
        try:
            value = nm.icc31(X)
            table.append({"metric": metric, "icc": value,
                          "label": nm.icc_label(value), "n_subjects": len(names1)})
        except InputError:
            table.append({"metric": metric, "icc": None, "label": "undefined",
                          "n_subjects": len(names1)})
    write_json(out, {"rows": table})
    for row in table:
        icc_txt = "undefined" if row["icc"] is None else f"{row['icc']:.4f}"
        click.echo(f"{row['metric']:>20}  {icc_txt:>10}  {row['label']}")


# ---------------------------------------------------------------------------
# dwe


@main.command()
@click.argument("group_a_dir", type=click.Path(exists=True))
@click.argument("group_b_dir", type=click.Path(exists=True))
@click.argument("modules_csv", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--n-perm", type=int, default=5000)
@click.option("--fdr-q", type=float, default=0.05)
@click.option("--seed", type=int, default=0)
@_guard
def dwe(group_a_dir, group_b_dir, modules_csv, out, n_perm, fdr_q, seed):
    """Differentially weighted edges and their module-block distribution."""
    def load_group(directory):
        files = sorted(Path(directory).glob("*.json"))
        if not files:
            raise InputError(f"{directory}: no estimate JSON files")
        vecs, ps = [], set()
        for f in files:
            payload = read_json(f)
            ps.add(payload["p"])
            vecs.append(payload_fc_vector(payload))
        if len(ps) != 1:
            raise InputError(f"{directory}: inconsistent node counts {sorted(ps)}")
        return np.array(vecs), ps.pop()

    A, p_a = load_group(group_a_dir)
    B, p_b = load_group(group_b_dir)
    if p_a != p_b:
        raise InputError(f"groups differ in node count: {p_a} vs {p_b}")
    modules = read_modules_csv(modules_csv, p_a)

    mask, pvals = nm.dwe_test(A, B, n_perm=n_perm, fdr_q=fdr_q, seed=seed)
    blocks = nm.module_chi_square(mask, modules, n_perm=n_perm, seed=seed)
    write_json(out, {
        "p": p_a,
        "n_dwe": int(mask.sum()),
        "dwe_edges": [[int(j), int(k)] for (j, k), flag in
                      zip(zip(*triu_pairs(p_a)), mask) if flag],
        "blocks": blocks,
    })
    click.echo(f"{int(mask.sum())} differentially weighted edges")


if __name__ == "__main__":
    main()
