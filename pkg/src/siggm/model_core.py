"""Core data types, the joint objective, and elementary matrix transforms.

All vector-valued edge quantities (shrinkage exponents, baselines, prior
strengths) use a fixed row-major upper-triangular flattening over pairs
(j, k) with j < k; see :func:`flatten_triu` / :func:`unflatten_triu`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InputError(ValueError):
    """Invalid user-supplied data (bad shapes, non-finite values, ...)."""


class DomainError(ValueError):
    """An operation was evaluated outside its mathematical domain."""


class ConvergenceError(RuntimeError):
    """A solver exhausted its iteration budget.

    Carries the last iterate and diagnostics so callers can inspect or
    restart.
    """

    def __init__(self, message, last_iterate=None, diagnostics=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.diagnostics = diagnostics or {}


# ---------------------------------------------------------------------------
# upper-triangular flattening


def triu_pairs(p):
    """Row-major (j, k), j < k index arrays for a p-node graph."""
    return np.triu_indices(p, k=1)


def flatten_triu(M):
    """Flatten the strict upper triangle of a symmetric matrix, row-major."""
    M = np.asarray(M, dtype=float)
    rows, cols = triu_pairs(M.shape[0])
    return M[rows, cols].copy()


def unflatten_triu(v, p):
    """Inverse of :func:`flatten_triu`: symmetric matrix with zero diagonal."""
    v = np.asarray(v, dtype=float)
    if v.shape != (p * (p - 1) // 2,):
        raise InputError(f"expected vector of length {p * (p - 1) // 2}, got {v.shape}")
    M = np.zeros((p, p))
    rows, cols = triu_pairs(p)
    M[rows, cols] = v
    M[cols, rows] = v
    return M


def _check_symmetric(M, name, tol=1e-12):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{name} contains non-finite entries")
    if np.max(np.abs(M - M.T), initial=0.0) > tol:
        raise InputError(f"{name} is not symmetric within {tol}")


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class TimeSeriesData:
    """T x p observation matrix: rows are time points, columns are regions."""

    values: np.ndarray
    region_labels: list[str] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise InputError(f"time series must be 2-D, got shape {values.shape}")
        T, p = values.shape
        if T < 2 or p < 2:
            raise InputError(f"need T >= 2 and p >= 2, got T={T}, p={p}")
        if not np.all(np.isfinite(values)):
            raise InputError("time series contains non-finite entries")
        if self.region_labels is not None and len(self.region_labels) != p:
            raise InputError("region_labels length does not match number of columns")

    @property
    def T_points(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class SampleCovariance:
    """p x p sample covariance together with the sample size it came from."""

    S: np.ndarray
    T: int

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        object.__setattr__(self, "S", S)
        _check_symmetric(S, "S")
        if np.any(np.diag(S) < 0):
            raise InputError("sample covariance has a negative diagonal entry")
        if self.T < 1:
            raise InputError(f"T must be positive, got {self.T}")

    @property
    def p(self):
        return self.S.shape[0]


@dataclass(frozen=True)
class StructuralPrior:
    """Symmetric matrix of anatomical connection strengths in [0, 1]."""

    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        object.__setattr__(self, "P", P)
        _check_symmetric(P, "P")
        if np.any(P < 0) or np.any(P > 1):
            raise InputError("structural prior entries must lie in [0, 1]")
        if np.any(np.diag(P) != 0):
            raise InputError("structural prior diagonal must be zero")

    @property
    def p(self):
        return self.P.shape[0]

    def triu(self):
        return flatten_triu(self.P)


@dataclass(frozen=True)
class PrecisionEstimate:
    """A symmetric positive definite precision matrix with its edge set."""

    omega: np.ndarray
    zero_tol: float = 1e-8

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "omega", omega)
        _check_symmetric(omega, "omega", tol=1e-10)
        try:
            np.linalg.cholesky(omega)
        except np.linalg.LinAlgError:
            raise InputError("omega is not positive definite") from None

    @property
    def p(self):
        return self.omega.shape[0]

    @property
    def edge_set(self):
        rows, cols = triu_pairs(self.p)
        mask = np.abs(self.omega[rows, cols]) > self.zero_tol
        return frozenset(zip(rows[mask].tolist(), cols[mask].tolist()))


@dataclass(frozen=True)
class ShrinkageState:
    """Everything in the parameter block except the precision matrix.

    ``alpha`` holds per-edge log-shrinkage values, ``mu`` the anatomical-free
    baselines, ``eta`` the global coupling between structural strength and
    shrinkage, ``nu`` the overall sparsity tuner.  The remaining fields are
    fixed hyperparameters.  ``eta == 0`` is allowed as the frozen value used
    by the structure-free mode; the positive-coupling prior term is then
    dropped from the objective.
    """

    alpha: np.ndarray
    mu: np.ndarray
    eta: float
    nu: float
    sigma2_lambda: float
    sigma2_mu: float = 5.0
    mu0: float = 0.0
    a_eta: float = 36.0
    b_eta: float = 6.0

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "mu", mu)
        if alpha.shape != mu.shape or alpha.ndim != 1:
            raise InputError("alpha and mu must be 1-D vectors of equal length")
        if self.eta < 0:
            raise InputError(f"eta must be >= 0, got {self.eta}")
        for name in ("nu", "sigma2_lambda", "sigma2_mu", "a_eta", "b_eta"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def n_edges(self):
        return self.alpha.shape[0]

    def replace(self, **kw):
        from dataclasses import replace

        return replace(self, **kw)


# ---------------------------------------------------------------------------
# operations


def sample_covariance(Y: TimeSeriesData, center: bool = False) -> SampleCovariance:
    """S = (1/T) sum_t y_t y_t'.

    The model assumes mean-zero signals, so no centering happens by default;
    pass ``center=True`` to subtract column means first.
    """
    values = Y.values
    if center:
        values = values - values.mean(axis=0, keepdims=True)
    T = values.shape[0]
    S = values.T @ values / T
    S = (S + S.T) / 2.0  # kill fp asymmetry
    return SampleCovariance(S=S, T=T)


def partial_correlation(omega: PrecisionEstimate) -> np.ndarray:
    """r_jk = -omega_jk / sqrt(omega_jj * omega_kk), with unit diagonal."""
    O = omega.omega
    d = np.diag(O)
    if np.any(d <= 0):
        raise DomainError("precision matrix has a non-positive diagonal entry")
    scale = np.sqrt(d)
    R = -O / np.outer(scale, scale)
    np.fill_diagonal(R, 1.0)
    R = (R + R.T) / 2.0
    if np.max(np.abs(R)) > 1.0 + 1e-10:
        raise DomainError("partial correlation exceeded 1 beyond tolerance")
    return np.clip(R, -1.0, 1.0)


def penalty_value(omega_mat, alpha, nu):
    """The L1 shrinkage part of the objective for a given precision matrix."""
    p = omega_mat.shape[0]
    off = flatten_triu(np.abs(omega_mat))
    return nu * float(np.exp(alpha) @ off) + 0.5 * nu * float(np.trace(omega_mat))


def objective(
    omega: PrecisionEstimate,
    state: ShrinkageState,
    S: SampleCovariance,
    prior_matrix: StructuralPrior,
) -> float:
    """Negative log-posterior to be minimized over the full parameter block.

    F = -log|O| + tr(SO)
        + nu * sum_{j<k} e^{alpha}|o_jk| + (nu/2) * sum_k o_kk
        + sum (alpha - (mu - eta p))^2 / (2 s2_lambda)
        + sum (mu - mu0)^2 / (2 s2_mu)
        - (a_eta - 1) log eta + b_eta * eta
        - p log(nu / 2)

    The coupling-prior terms in eta are dropped when eta is frozen at zero
    (structure-free mode), where log eta is undefined.
    """
    O = omega.omega
    p = O.shape[0]
    sign, logdet = np.linalg.slogdet(O)
    if sign <= 0:
        raise DomainError("precision matrix has non-positive determinant")
    p_triu = prior_matrix.triu()
    resid = state.alpha - (state.mu - state.eta * p_triu)
    F = -logdet + float(np.sum(S.S * O))
    F += penalty_value(O, state.alpha, state.nu)
    F += float(resid @ resid) / (2.0 * state.sigma2_lambda)
    F += float((state.mu - state.mu0) @ (state.mu - state.mu0)) / (2.0 * state.sigma2_mu)
    if state.eta > 0:
        F += -(state.a_eta - 1.0) * np.log(state.eta) + state.b_eta * state.eta
    F += -p * np.log(state.nu / 2.0)
    return float(F)
