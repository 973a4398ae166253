"""Variational Bayesian PCA with missing-value support.

The model explains an n-by-p data matrix X as X = Y'A' + 1 m' + noise,
with a q-column loading matrix A, factor matrix Y, and a per-column bias
m.  Mean-field variational inference keeps a Gaussian posterior for each
row of A, each column of Y, and each bias entry, point estimates of the
noise variance, and per-component prior variances for the loadings that
are re-estimated every sweep.  Components the data cannot support are
driven to a small prior variance, which is what keeps larger-than-
necessary fits from interpolating the data.

Two details matter for behaviour.  First, after every sweep the fit is
re-expressed in a normal form (factor second moment identity, loading
Gram matrix diagonal); the reconstruction is unchanged but convergence
is much faster and the per-component prior variances become directly
comparable.  Second, the re-estimated prior variances are floored at a
small fraction of the data variance, so pruned components retain honest
posterior uncertainty instead of collapsing to numerical zero; that
residual uncertainty is what the downstream null resampling relies on.

Missing entries are simply excluded from every sufficient statistic.
When the data are fully observed all rows share one posterior covariance
and all columns share another, and the sweep reduces to a handful of
dense matrix products; that path is used automatically.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError, NumericalError
from .linalg import MaskedMatrix
from .rng import RngStream

# Initialisation constants: random means with variance 1e-2, isotropic
# posterior covariances 1e-2 I, bias at the observed column means, noise
# at the observed data variance.  The per-component loading prior starts
# at the data variance so every component is free to engage, and the
# evidence-maximisation update then withdraws variance from components
# the data cannot support.
_INIT_STD = 0.1
_INIT_COV = 1e-2

# The per-component prior variances start at this fraction of the data
# variance.  The value trades off two failure modes: too small and the
# evidence-maximisation race prunes weak but genuine directions before
# their loadings can grow out of the random start; too large and noise
# directions survive long enough to be absorbed as spurious structure.
_INIT_PRIOR_REL = 0.1

# Sweeps during which the per-component prior variances stay at their
# broad initial value.  Components grow toward the directions the data
# supports before the evidence-maximisation race starts withdrawing
# variance, which keeps engagement of genuine directions from depending
# on the luck of the random start.  Early stopping is disabled until the
# priors have been re-estimated at least once.
_PRIOR_WARMUP_SWEEPS = 0

# The re-estimated loading prior variances are floored at this fraction
# of the data variance.  Pruned components then keep a small posterior
# covariance instead of collapsing to zero, so the elementwise
# reconstruction variance stays honest about directions the fit chose
# not to use.  The floor is far too small to let a pruned component
# re-engage (the data-driven part of its posterior scale is v / n, which
# dominates the floor whenever the component would matter).
_PRIOR_UNCERTAINTY_FLOOR_REL = 1e-3

# Floors keeping re-estimated variances strictly positive.  Relative to
# the observed data variance so behaviour is scale-free.
_PRIOR_FLOOR_REL = 1e-14
_NOISE_FLOOR_REL = 1e-12
_TINY = 1e-300

# Degenerate inputs (constant columns everywhere) have zero observed
# variance; anchoring the relative floors to this absolute value instead
# keeps the first sweeps finite.  Data whose variance is genuinely below
# this is outside float range for the downstream quadratic forms anyway.
_ABS_SCALE_FLOOR = 1e-30

# Candidate counts whose scan cost lies within this relative tolerance
# of the best cost are treated as tied.  The band separates two cost
# scales.  Fits that differ only in iteration-path noise, or because one
# of them absorbed a noise direction, differ by at most the largest
# noise eigenvalue's share of the residual, about (sqrt(n)+sqrt(p))^2 /
# (n p) and well under the band.  Fits that differ by a genuine
# direction differ by that direction's share of the residual error,
# which is many times the band.  Treating the first scale as a tie and
# resolving it toward the largest count keeps the selection clear of
# occasional noise captures at intermediate counts.
_COST_TIE_REL = 6e-2


@dataclass(frozen=True)
class VbpcaConfig:
    """Settings for one fit.

    ``n_components`` is the number of retained components (at least 2 and
    at most min(n, p) of the data).  Iteration stops after ``max_iters``
    sweeps or once the relative change of the reconstruction cost drops
    below ``conv_tol``.
    """

    n_components: int
    max_iters: int = 80
    conv_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.n_components) != self.n_components or self.n_components < 2:
            raise ConfigError(
                f"n_components must be an integer >= 2, got {self.n_components}"
            )
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0 <= self.conv_tol < np.inf:
            raise ConfigError(f"conv_tol must be finite and >= 0, got {self.conv_tol}")
        RngStream(self.seed)  # validates the seed range


@dataclass(frozen=True)
class VbpcaModel:
    """Posterior summary of one fit.

    Shapes, for n rows, p columns and q components: ``loadings_mean``
    (p, q) with per-row covariance blocks ``loadings_cov`` (p, q, q),
    ``factors_mean`` (q, n) with per-column blocks ``factors_cov``
    (n, q, q), bias mean/variance of length p, the scalar noise variance,
    and the reconstruction cost recorded at initialisation and after each
    sweep.
    """

    loadings_mean: np.ndarray
    loadings_cov: np.ndarray
    factors_mean: np.ndarray
    factors_cov: np.ndarray
    bias_mean: np.ndarray
    bias_var: np.ndarray
    noise_var: float
    cost_trace: np.ndarray

    @property
    def n_components(self) -> int:
        return self.loadings_mean.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.factors_mean.shape[1], self.loadings_mean.shape[0]


@dataclass(frozen=True)
class Reconstruction:
    """Elementwise posterior of the reconstruction: mean and variance of
    a'y + m for every matrix position, both shaped like the data."""

    mean: np.ndarray
    var: np.ndarray


def _freeze(arr: np.ndarray) -> np.ndarray:
    if arr.flags.writeable:
        arr.flags.writeable = False
    return arr


def _inv_sym(s: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix (or a batch),
    symmetrised to suppress rounding drift."""
    try:
        inv = np.linalg.inv(s)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"posterior precision not invertible: {exc}") from exc
    return 0.5 * (inv + np.swapaxes(inv, -1, -2))


def fit(data: MaskedMatrix, config: VbpcaConfig) -> VbpcaModel:
    """Fit the model to ``data`` and return the posterior summary.

    Raises ConfigError if ``n_components`` exceeds min(n, p), DataError if
    a column has no observed entries, NumericalError if the cost becomes
    non-finite.
    """
    n, p = data.shape
    q = config.n_components
    if q > min(n, p):
        raise ConfigError(
            f"n_components={q} exceeds min(n, p)={min(n, p)} for shape {data.shape}"
        )
    col_counts = data.column_observed_counts()
    if np.any(col_counts == 0):
        bad = int(np.flatnonzero(col_counts == 0)[0])
        raise DataError(f"column {bad} has no observed entries")
    if data.all_observed:
        return _fit_complete(data, config)
    return _fit_masked(data, config, col_counts)


def _init_state(data: MaskedMatrix, q: int, seed: int):
    """Random starting point, shared across component counts.

    The initial loading and factor columns are drawn at the maximum
    admissible count and truncated to ``q``, so fits at different counts
    start from a common prefix (common random numbers).  Scan costs that
    get compared against each other then differ by what the extra columns
    contribute, not by the luck of independent starts.
    """
    n, p = data.shape
    cap = min(n, p)
    gen = RngStream(seed).generator()
    loadings = (gen.standard_normal((p, cap)) * _INIT_STD)[:, :q].copy()
    factors = (gen.standard_normal((n, cap)) * _INIT_STD)[:, :q].copy()
    bias = data.column_means()
    if data.all_observed:
        scale = float(data.values.var())
    else:
        obs = data.values[data.mask]
        scale = float(obs.var()) if obs.size else 0.0
    return loadings, factors, bias, scale


def _gauge_maps(A: np.ndarray, Ca_mean: np.ndarray, Yb: np.ndarray,
                Cy_mean: np.ndarray, n: int, p: int):
    """Maps that put the fit into its normal form.

    Returns (M, N) such that replacing each loading row a by M'a and each
    factor y by N'y leaves the reconstruction A Y' unchanged while making
    the factor second moment the identity and the loading Gram matrix
    diagonal with decreasing entries.  ``Ca_mean`` / ``Cy_mean`` are the
    (average) posterior covariances used to form the second moments.
    """
    second_y = (Yb.T @ Yb) / n + Cy_mean
    dy, Ey = np.linalg.eigh(0.5 * (second_y + second_y.T))
    dy = np.sqrt(np.maximum(dy, _TINY))
    T = Ey * dy  # second_y = T T'
    Tinv_t = Ey / dy  # transpose of T's inverse
    A_w = A @ T
    gram = A_w.T @ A_w + p * (T.T @ Ca_mean @ T)
    dg, V = np.linalg.eigh(0.5 * (gram + gram.T))
    V = V[:, np.argsort(dg)[::-1]]
    return T @ V, Tinv_t @ V  # M (loadings), N (factors)


def _fit_complete(data: MaskedMatrix, config: VbpcaConfig) -> VbpcaModel:
    V = data.values
    n, p = V.shape
    q = config.n_components
    A, Yb, m, scale = _init_state(data, q, config.seed)
    anchor = max(scale, _ABS_SCALE_FLOOR)
    eye = np.eye(q)
    Ca = eye * _INIT_COV  # loading-row covariance, shared across rows
    Cy = eye * _INIT_COV  # factor-column covariance, shared across columns
    mvar = _INIT_COV
    va = np.full(q, anchor * _INIT_PRIOR_REL)
    vm = 1.0
    prior_floor = anchor * _PRIOR_FLOOR_REL
    uncertainty_floor = anchor * _PRIOR_UNCERTAINTY_FLOOR_REL
    noise_floor = anchor * _NOISE_FLOOR_REL
    v = max(scale, anchor)

    Rm = V - m
    resid = Rm - Yb @ A.T
    flat = resid.ravel()
    trace = [float(np.dot(flat, flat))]

    for it in range(config.max_iters):
        # factor posteriors (unit prior)
        Cy = _inv_sym(eye + (A.T @ A + p * Ca) / v)
        Yb = (Rm @ A) @ Cy / v
        # loading posteriors under the per-component prior
        Ca = _inv_sym(np.diag(1.0 / va) + (Yb.T @ Yb + n * Cy) / v)
        A = (Rm.T @ Yb) @ Ca / v
        # bias
        F = Yb @ A.T
        mvar = 1.0 / (n / v + 1.0 / vm)
        m = (mvar / v) * (V - F).sum(axis=0)
        Rm = V - m
        # normal form: reconstruction unchanged, coordinates rotated
        M, N = _gauge_maps(A, Ca, Yb, Cy, n, p)
        A = A @ M
        Ca = M.T @ Ca @ M
        Yb = Yb @ N
        Cy = N.T @ Cy @ N
        F = Yb @ A.T
        # prior variances by evidence maximisation, floored so pruned
        # components keep honest uncertainty
        if it >= _PRIOR_WARMUP_SWEEPS:
            va = np.maximum((A * A).mean(axis=0) + np.diag(Ca), uncertainty_floor)
        vm = max(float(np.dot(m, m)) / p + mvar, prior_floor)
        # noise variance from residual plus posterior second moments
        resid = Rm - F
        flat = resid.ravel()
        sse = float(np.dot(flat, flat))
        if not np.isfinite(sse):
            raise NumericalError(f"cost became non-finite at iteration {it + 1}")
        second = (
            n * float(np.sum((A @ Cy) * A))
            + p * float(np.sum((Yb @ Ca) * Yb))
            + n * p * float(np.sum(Ca * Cy))
            + n * p * mvar
        )
        v = max((sse + second) / (n * p), noise_floor)
        prev = trace[-1]
        trace.append(sse)
        if it >= _PRIOR_WARMUP_SWEEPS and abs(prev - sse) <= config.conv_tol * max(
            prev, _TINY
        ):
            break

    return VbpcaModel(
        loadings_mean=_freeze(A),
        loadings_cov=np.broadcast_to(_freeze(Ca), (p, q, q)),
        factors_mean=_freeze(Yb.T.copy()),
        factors_cov=np.broadcast_to(_freeze(Cy), (n, q, q)),
        bias_mean=_freeze(m),
        bias_var=_freeze(np.full(p, mvar)),
        noise_var=float(v),
        cost_trace=_freeze(np.asarray(trace)),
    )


def _fit_masked(
    data: MaskedMatrix, config: VbpcaConfig, col_counts: np.ndarray
) -> VbpcaModel:
    V = data.values  # masked-out entries are zero
    W = data.mask.astype(np.float64)
    n, p = V.shape
    q = config.n_components
    n_obs = int(col_counts.sum())
    A, Yb, m, scale = _init_state(data, q, config.seed)
    anchor = max(scale, _ABS_SCALE_FLOOR)
    eye = np.eye(q)
    Ca = np.broadcast_to(eye * _INIT_COV, (p, q, q)).copy()
    Cy = np.broadcast_to(eye * _INIT_COV, (n, q, q)).copy()
    mvar = np.full(p, _INIT_COV)
    va = np.full(q, anchor * _INIT_PRIOR_REL)
    vm = 1.0
    prior_floor = anchor * _PRIOR_FLOOR_REL
    uncertainty_floor = anchor * _PRIOR_UNCERTAINTY_FLOOR_REL
    noise_floor = anchor * _NOISE_FLOOR_REL
    v = max(scale, anchor)

    def masked_sse(fit_mean: np.ndarray, bias: np.ndarray) -> float:
        r = (V - fit_mean - bias) * W
        flat = r.ravel()
        return float(np.dot(flat, flat))

    trace = [masked_sse(Yb @ A.T, m)]

    for it in range(config.max_iters):
        Rm = (V - m) * W
        # factor posteriors; each row sums statistics over its observed columns
        TA = A[:, :, None] * A[:, None, :] + Ca
        Cy = _inv_sym(eye + np.einsum("ij,jkl->ikl", W, TA, optimize=True) / v)
        Yb = np.einsum("ikl,il->ik", Cy, Rm @ A, optimize=True) / v
        # loading posteriors
        TY = Yb[:, :, None] * Yb[:, None, :] + Cy
        Ca = _inv_sym(
            np.diag(1.0 / va) + np.einsum("ij,ikl->jkl", W, TY, optimize=True) / v
        )
        A = np.einsum("jkl,jl->jk", Ca, Rm.T @ Yb, optimize=True) / v
        # bias
        F = Yb @ A.T
        mvar = 1.0 / (col_counts / v + 1.0 / vm)
        m = (mvar / v) * (((V - F) * W).sum(axis=0))
        # normal form via the average posterior covariances
        M, N = _gauge_maps(A, Ca.mean(axis=0), Yb, Cy.mean(axis=0), n, p)
        A = A @ M
        Ca = M.T @ Ca @ M
        Yb = Yb @ N
        Cy = N.T @ Cy @ N
        F = Yb @ A.T
        # prior variances, floored so pruned components keep honest
        # uncertainty
        if it >= _PRIOR_WARMUP_SWEEPS:
            va = np.maximum(
                (A * A).mean(axis=0) + Ca.diagonal(axis1=1, axis2=2).mean(axis=0),
                uncertainty_floor,
            )
        vm = max(float(np.dot(m, m)) / p + float(mvar.mean()), prior_floor)
        # noise variance
        sse = masked_sse(F, m)
        if not np.isfinite(sse):
            raise NumericalError(f"cost became non-finite at iteration {it + 1}")
        terms = _second_moment_terms(A, Ca, Yb, Cy) + mvar[None, :]
        v = max((sse + float((terms * W).sum())) / n_obs, noise_floor)
        prev = trace[-1]
        trace.append(sse)
        if it >= _PRIOR_WARMUP_SWEEPS and abs(prev - sse) <= config.conv_tol * max(
            prev, _TINY
        ):
            break

    return VbpcaModel(
        loadings_mean=_freeze(A),
        loadings_cov=_freeze(Ca),
        factors_mean=_freeze(Yb.T.copy()),
        factors_cov=_freeze(Cy),
        bias_mean=_freeze(m),
        bias_var=_freeze(mvar),
        noise_var=float(v),
        cost_trace=_freeze(np.asarray(trace)),
    )


def _second_moment_terms(
    A: np.ndarray, Acov: np.ndarray, Yb: np.ndarray, Ycov: np.ndarray
) -> np.ndarray:
    """Variance of a_j'y_i per position (i, j), excluding the bias term."""
    t1 = np.einsum("jk,ikl,jl->ij", A, Ycov, A, optimize=True)
    t2 = np.einsum("ik,jkl,il->ij", Yb, Acov, Yb, optimize=True)
    t3 = np.einsum("ikl,jkl->ij", Ycov, Acov, optimize=True)
    return t1 + t2 + t3


def reconstruct(model: VbpcaModel) -> Reconstruction:
    """Posterior mean and elementwise variance of the reconstruction.

    The variance at (i, j) combines the factor covariance mapped through
    the loading mean, the loading covariance mapped through the factor
    mean, the product of the two covariances, and the bias variance.
    """
    A = model.loadings_mean
    Yb = model.factors_mean.T
    mean = Yb @ A.T + model.bias_mean
    shared = model.factors_cov.strides[0] == 0 and model.loadings_cov.strides[0] == 0
    if shared:
        Cy = model.factors_cov[0]
        Ca = model.loadings_cov[0]
        per_col = np.sum((A @ Cy) * A, axis=1)  # a_j' Cy a_j
        per_row = np.sum((Yb @ Ca) * Yb, axis=1)  # y_i' Ca y_i
        cross = float(np.sum(Ca * Cy))
        var = per_row[:, None] + (per_col + cross + model.bias_var)[None, :]
    else:
        var = (
            _second_moment_terms(A, model.loadings_cov, Yb, model.factors_cov)
            + model.bias_var[None, :]
        )
    var = np.maximum(var, 0.0)
    return Reconstruction(mean=_freeze(mean), var=_freeze(var))


@dataclass(frozen=True)
class RankScan:
    """Outcome of scanning candidate component counts.

    ``costs`` holds (count, squared reconstruction error over observed
    entries) per candidate in ascending order; ``selected`` is the count
    with the smallest error.  Candidates within a small relative
    tolerance of the best cost count as tied, and ties resolve toward
    the largest count: a self-pruning fit makes the cost curve flat past
    the supported rank, and the deepest tied candidate gives the
    downstream significance test the most reference directions.
    ``model`` is the fit at the selected count.
    """

    selected: int
    costs: tuple[tuple[int, float], ...]
    model: VbpcaModel


def select_n_components(
    data: MaskedMatrix,
    config: VbpcaConfig,
    q_min: int = 2,
    q_max: int | None = None,
    workers: int = 1,
) -> RankScan:
    """Fit every candidate count in [q_min, q_max] and pick the count
    whose posterior-mean reconstruction has the smallest squared error
    over observed entries.

    ``config.n_components`` is ignored; each candidate reuses the other
    settings.  Results are independent of ``workers``.
    """
    n, p = data.shape
    cap = min(n, p)
    if q_max is None:
        q_max = cap
    if not 2 <= q_min <= q_max <= cap:
        raise ConfigError(
            f"scan range [{q_min}, {q_max}] invalid for min(n, p)={cap}"
        )
    candidates = list(range(q_min, q_max + 1))

    def final_cost(count: int) -> float:
        model = fit(data, replace(config, n_components=count))
        return float(model.cost_trace[-1])

    if workers <= 1:
        costs = [final_cost(c) for c in candidates]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            costs = list(pool.map(final_cost, candidates))
    cutoff = min(costs) * (1.0 + _COST_TIE_REL) + _TINY
    best = max(c for c, cost in zip(candidates, costs) if cost <= cutoff)
    model = fit(data, replace(config, n_components=best))
    return RankScan(
        selected=best,
        costs=tuple(zip(candidates, (float(c) for c in costs))),
        model=model,
    )
