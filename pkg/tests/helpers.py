"""Shared oracle helpers for the test suite.

Everything here is implemented independently of the package internals so
that it can serve as a cross-check: Monte Carlo estimators, a literal
step-down adjustment, and plain-numpy spectrum computations.
"""

from __future__ import annotations

import numpy as np

from sigpca import MaskedMatrix, VbpcaModel


def rank_k_matrix(n: int, p: int, k: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    """Exact rank-k matrix from a random factorization."""
    gen = np.random.default_rng(seed)
    left = gen.standard_normal((n, k))
    right = gen.standard_normal((k, p))
    return scale * (left @ right)


def center_cols(x: np.ndarray) -> np.ndarray:
    return x - x.mean(axis=0, keepdims=True)


def complete(x: np.ndarray) -> MaskedMatrix:
    return MaskedMatrix.complete(np.asarray(x, dtype=np.float64))


def masked_mse(data: MaskedMatrix, approx: np.ndarray) -> float:
    """Mean squared error over the observed entries of ``data``."""
    diff = np.where(data.mask, data.values - approx, 0.0)
    return float((diff**2).sum() / data.observed_count())


def _random_spd(gen: np.random.Generator, k: int, scale: float) -> np.ndarray:
    w = gen.standard_normal((k, k))
    return scale * (w @ w.T / k + 0.5 * np.eye(k))


def random_posterior_model(gen: np.random.Generator, n: int, p: int, q: int) -> VbpcaModel:
    """A syntactically valid posterior with random means and random SPD
    covariance blocks, for exercising the reconstruction formulas."""
    return VbpcaModel(
        loadings_mean=gen.standard_normal((p, q)),
        loadings_cov=np.stack([_random_spd(gen, q, gen.uniform(0.05, 0.6)) for _ in range(p)]),
        factors_mean=gen.standard_normal((q, n)),
        factors_cov=np.stack([_random_spd(gen, q, gen.uniform(0.05, 0.6)) for _ in range(n)]),
        bias_mean=gen.standard_normal(p),
        bias_var=gen.uniform(0.01, 0.5, size=p),
        noise_var=float(gen.uniform(0.1, 2.0)),
        cost_trace=np.array([1.0, 0.5]),
    )


def mc_reconstruction_variance(model: VbpcaModel, n_draws: int, seed: int) -> np.ndarray:
    """Monte Carlo estimate of the elementwise reconstruction variance.

    For every matrix position (i, j), draws loadings row, factor column
    and bias independently from their posteriors and takes the sample
    variance of loadings . factors + bias.
    """
    gen = np.random.default_rng(seed)
    n, p = model.shape
    q = model.n_components
    chol_a = np.linalg.cholesky(model.loadings_cov)
    chol_y = np.linalg.cholesky(model.factors_cov)
    var = np.empty((n, p))
    for i in range(n):
        y = model.factors_mean[:, i] + gen.standard_normal((n_draws, q)) @ chol_y[i].T
        for j in range(p):
            a = model.loadings_mean[j] + gen.standard_normal((n_draws, q)) @ chol_a[j].T
            m = model.bias_mean[j] + np.sqrt(model.bias_var[j]) * gen.standard_normal(n_draws)
            x = np.einsum("sk,sk->s", a, y) + m
            var[i, j] = x.var(ddof=1)
    return var


def stepdown_adjust_reference(raw_p, m: int) -> np.ndarray:
    """Literal step-down adjustment: running maximum of min(1, (m-s+1) p_s)
    over testing order s = 1, 2, ...  Written as a plain loop."""
    out = []
    running = 0.0
    for s, p_s in enumerate(raw_p, start=1):
        running = max(running, min(1.0, (m - s + 1) * p_s))
        out.append(running)
    return np.asarray(out)


def gram_top_eigvals(x: np.ndarray, q: int) -> np.ndarray:
    """Top-q eigenvalues of x x^T, descending, plain numpy."""
    g = x @ x.T if x.shape[0] <= x.shape[1] else x.T @ x
    vals = np.linalg.eigvalsh(0.5 * (g + g.T))[::-1]
    return np.maximum(vals[:q], 0.0)


def normalize_spectrum_reference(lam: np.ndarray) -> np.ndarray:
    """Tail normalization written as a plain loop: value at index r is
    (q - 1 - r) * lam[r] / (lam[r] + ... + lam[q-2]), last index 0."""
    q = lam.size
    out = np.zeros(q)
    for r in range(q - 1):
        tail = float(np.sum(lam[r : q - 1]))
        out[r] = (q - 1 - r) * lam[r] / tail if tail > 0 else 0.0
    return out
