"""Evaluation machinery: edge-recovery metrics, binary-graph summaries,
test-retest reliability, and group-difference permutation tests.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .model_core import InputError, triu_pairs


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def sensitivity(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def specificity(self):
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else 0.0


@dataclass(frozen=True)
class ModuleAssignment:
    labels: list[int]

    def __post_init__(self):
        if len(self.labels) < 1:
            raise InputError("every node needs a module label")

    @property
    def modules(self):
        return sorted(set(self.labels))

    def size(self, g):
        return sum(1 for x in self.labels if x == g)


def confusion(est: frozenset, truth: frozenset, p: int) -> ConfusionCounts:
    """Counts over all unordered node pairs j < k."""
    total = p * (p - 1) // 2
    tp = len(est & truth)
    fp = len(est - truth)
    fn = len(truth - est)
    tn = total - tp - fp - fn
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation; 0 by convention when a denominator factor is 0."""
    denom = (
        (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    )
    if denom == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / np.sqrt(denom)


def auc(path: list[frozenset], truth: frozenset, p: int) -> float:
    """Trapezoidal area under sensitivity vs (1 - specificity).

    The sweep points are augmented with the (0,0) and (1,1) endpoints;
    points tied on false-positive rate keep the best sensitivity.
    """
    if not path:
        raise InputError("need at least one edge set in the path")
    pts = {0.0: 0.0, 1.0: 1.0}
    for est in path:
        c = confusion(est, truth, p)
        fpr = 1.0 - c.specificity
        pts[fpr] = max(pts.get(fpr, 0.0), c.sensitivity)
    xs = sorted(pts)
    ys = [pts[x] for x in xs]
    return float(np.trapezoid(ys, xs))


def rel_l1_error(omega_hat, omega_true) -> float:
    """Entrywise |error| sum over the full matrix, relative to |truth|."""
    A = np.asarray(omega_hat, dtype=float)
    B = np.asarray(omega_true, dtype=float)
    if A.shape != B.shape:
        raise InputError("matrices must have the same shape")
    denom = float(np.abs(B).sum())
    if denom == 0:
        raise InputError("true matrix has zero L1 norm")
    return float(np.abs(A - B).sum()) / denom


def _adjacency(edges: frozenset, p: int):
    A = np.zeros((p, p), dtype=bool)
    for j, k in edges:
        A[j, k] = A[k, j] = True
    return A


def _distances(edges: frozenset, p: int):
    A = _adjacency(edges, p)
    return shortest_path(csr_matrix(A), method="D", unweighted=True)


def global_efficiency(edges: frozenset, p: int) -> float:
    """Mean inverse shortest-path length; disconnected pairs contribute 0."""
    if p < 2:
        return 0.0
    d = _distances(edges, p)
    with np.errstate(divide="ignore"):
        inv = 1.0 / d
    inv[~np.isfinite(inv)] = 0.0
    np.fill_diagonal(inv, 0.0)
    return float(inv.sum()) / (p * (p - 1))


def _clustering(A):
    """Average binary clustering coefficient (0 for degree < 2 nodes)."""
    deg = A.sum(axis=1)
    tri = np.diag(A.astype(float) @ A @ A) / 2.0
    coef = np.zeros(len(deg))
    ok = deg >= 2
    coef[ok] = 2.0 * tri[ok] / (deg[ok] * (deg[ok] - 1))
    return float(coef.mean())


def graph_summaries(edges: frozenset, p: int) -> dict:
    """Standard binary-graph summaries.

    Characteristic path length averages over connected pairs only; the
    number of disconnected pairs is reported alongside.
    """
    A = _adjacency(edges, p)
    d = _distances(edges, p)
    off = ~np.eye(p, dtype=bool)
    finite = np.isfinite(d) & off
    n_disconnected = int((off & ~np.isfinite(d)).sum()) // 2
    cpl = float(d[finite].mean()) if finite.any() else float("inf")

    # local efficiency: global efficiency of each node's neighborhood subgraph
    eff_local = []
    for i in range(p):
        nbrs = np.nonzero(A[i])[0]
        if len(nbrs) < 2:
            eff_local.append(0.0)
            continue
        sub = A[np.ix_(nbrs, nbrs)]
        sub_edges = frozenset(
            (int(a), int(b)) for a in range(len(nbrs)) for b in range(a + 1, len(nbrs)) if sub[a, b]
        )
        eff_local.append(global_efficiency(sub_edges, len(nbrs)))

    return {
        "clustering": _clustering(A),
        "char_path_length": cpl,
        "n_disconnected_pairs": n_disconnected,
        "local_efficiency": float(np.mean(eff_local)),
        "global_efficiency": global_efficiency(edges, p),
        "mean_degree": float(A.sum()) / p,
    }


# ---------------------------------------------------------------------------
# reliability


ICC_SCALE = (
    (0.2, "poor"),
    (0.4, "fair"),
    (0.6, "moderate"),
    (0.8, "strong"),
    (np.inf, "near perfect"),
)


def icc_label(value: float) -> str:
    for cutoff, label in ICC_SCALE:
        if value <= cutoff:
            return label
    return "near perfect"


def icc31(measurements) -> float:
    """ICC(3,1): two-way mixed, single measures, consistency.

    (BMS - EMS) / (BMS + (k-1) EMS) from the subjects x sessions ANOVA
    decomposition; may be negative and is returned unclamped.
    """
    X = np.asarray(measurements, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 2:
        raise InputError("need an n_subjects x k_sessions matrix, n,k >= 2")
    if not np.all(np.isfinite(X)):
        raise InputError("measurements contain non-finite values")
    n, k = X.shape
    grand = X.mean()
    ss_total = float(((X - grand) ** 2).sum())
    if ss_total == 0:
        raise InputError("zero total variance: ICC undefined")
    ss_subj = k * float(((X.mean(axis=1) - grand) ** 2).sum())
    ss_sess = n * float(((X.mean(axis=0) - grand) ** 2).sum())
    ss_err = ss_total - ss_subj - ss_sess
    bms = ss_subj / (n - 1)
    ems = ss_err / ((n - 1) * (k - 1))
    return (bms - ems) / (bms + (k - 1) * ems)


# ---------------------------------------------------------------------------
# group differences


def benjamini_hochberg(pvals, q):
    """Boolean rejection mask at FDR level q."""
    p = np.asarray(pvals, dtype=float)
    m = len(p)
    order = np.argsort(p)
    thresh = q * (np.arange(1, m + 1)) / m
    below = p[order] <= thresh
    mask = np.zeros(m, dtype=bool)
    if below.any():
        cutoff = np.max(np.nonzero(below)[0])
        mask[order[: cutoff + 1]] = True
    return mask


def dwe_test(group_a, group_b, n_perm: int = 5000, fdr_q: float = 0.05, seed: int = 0):
    """Differentially weighted edges via a label-permutation test.

    Per edge: statistic |mean_A - mean_B|, p-value
    (1 + #{permuted >= observed}) / (1 + n_perm), then Benjamini-Hochberg
    at ``fdr_q``.  Returns (mask, p_values).
    """
    A = np.asarray(group_a, dtype=float)
    B = np.asarray(group_b, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise InputError("groups must be 2-D with matching edge dimension")
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise InputError("both groups must be nonempty")
    if n_perm < 100:
        warnings.warn(f"n_perm={n_perm} is very low for a permutation test")
    n_a = A.shape[0]
    # canonicalize subject order within each group so the permutation draw
    # (and hence the p-values) cannot depend on input ordering
    A = A[np.lexsort(A.T)]
    B = B[np.lexsort(B.T)]
    pooled = np.vstack([A, B])
    observed = np.abs(A.mean(axis=0) - B.mean(axis=0))
    rng = np.random.default_rng(seed)
    exceed = np.zeros(A.shape[1], dtype=np.int64)
    idx = np.arange(pooled.shape[0])
    for _ in range(n_perm):
        rng.shuffle(idx)
        pa = pooled[idx[:n_a]]
        pb = pooled[idx[n_a:]]
        stat = np.abs(pa.mean(axis=0) - pb.mean(axis=0))
        exceed += stat >= observed
    pvals = (1.0 + exceed) / (1.0 + n_perm)
    return benjamini_hochberg(pvals, fdr_q), pvals


def _block_of(j, k, labels):
    g1, g2 = labels[j], labels[k]
    return (g1, g2) if g1 <= g2 else (g2, g1)


def module_chi_square(dwe_mask, modules: ModuleAssignment, n_perm: int = 5000, seed: int = 0):
    """Per-module-block goodness of fit for the spread of flagged edges.

    Q is the observed flagged-edge count per block; E is the count expected
    when flags spread proportionally: within-module 0.5 p* |g|(|g|-1),
    between-module p* |g1||g2|, with p* the overall flagged fraction.
    X^2 = (Q-E)^2 / E.  Block p-values come from redistributing the total
    flag count uniformly over edges ``n_perm`` times.
    """
    mask = np.asarray(dwe_mask, dtype=bool)
    labels = modules.labels
    p = len(labels)
    m = p * (p - 1) // 2
    if mask.shape != (m,):
        raise InputError(f"mask must cover all {m} edges, got {mask.shape}")

    rows, cols = triu_pairs(p)
    block_names = []
    for g1 in modules.modules:
        for g2 in modules.modules:
            if g1 <= g2:
                block_names.append((g1, g2))
    block_index = {b: i for i, b in enumerate(block_names)}
    edge_block = np.array(
        [block_index[_block_of(int(j), int(k), labels)] for j, k in zip(rows, cols)]
    )

    total = int(mask.sum())
    p_star = total / m
    sizes = {g: modules.size(g) for g in modules.modules}

    Q = np.bincount(edge_block[mask], minlength=len(block_names)).astype(float)
    E = np.zeros(len(block_names))
    for (g1, g2), i in block_index.items():
        if g1 == g2:
            # the within-block pair count is an exact integer; multiply by
            # p_star last so a proportional spread yields E == Q exactly
            E[i] = p_star * (sizes[g1] * (sizes[g2] - 1) // 2)
        else:
            E[i] = p_star * (sizes[g1] * sizes[g2])

    with np.errstate(divide="ignore", invalid="ignore"):
        X2 = np.where(E > 0, (Q - E) ** 2 / np.where(E > 0, E, 1.0), 0.0)

    rng = np.random.default_rng(seed)
    exceed = np.zeros(len(block_names), dtype=np.int64)
    for _ in range(n_perm):
        picks = rng.choice(m, size=total, replace=False)
        Qp = np.bincount(edge_block[picks], minlength=len(block_names)).astype(float)
        X2p = np.where(E > 0, (Qp - E) ** 2 / np.where(E > 0, E, 1.0), 0.0)
        exceed += X2p >= X2
    pvals = (1.0 + exceed) / (1.0 + n_perm)

    return [
        {
            "block": block_names[i],
            "Q": float(Q[i]),
            "E": float(E[i]),
            "X2": float(X2[i]),
            "p_value": float(pvals[i]),
            "degenerate": bool(E[i] == 0),
        }
        for i in range(len(block_names))
    ]
