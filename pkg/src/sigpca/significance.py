"""Significance testing of principal component spectra.

The observed spectrum comes from the Gram matrix of the reconstruction
mean.  Each eigenvalue is normalised against the tail that follows it,
which removes overall scale and lets spectra of different matrices be
compared rank by rank.  A null distribution for the normalised values is
sampled by perturbing every matrix entry independently with its posterior
reconstruction variance, and ranks are tested sequentially with a
Holm-Bonferroni step-down correction sized to the full spectrum.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .linalg import sym_eigvals
from .rng import RngStream
from .vbpca import Reconstruction

_QUANTILES = (5.0, 50.0, 95.0)

# Eigenvalues below this fraction of the leading one are rounding
# artefacts of a rank-deficient matrix and are reported as exact zeros.
# Without the cutoff their ratios would masquerade as structure when the
# tail of the spectrum is normalised.
_RANK_TOL_REL = 1e-9

# Default absolute eigenvalue floor.  Spectrum functions also accept an
# explicit ``energy_floor``; analyses anchor it to the total energy of
# the data matrix so that a reconstruction consisting entirely of
# numerical residue (all its eigenvalues are a vanishing fraction of the
# data energy) yields an exactly zero spectrum instead of a spectrum of
# noise ratios.  A floor relative to the leading eigenvalue cannot make
# that call, because it only sees the reconstruction itself.
_DEFAULT_ENERGY_FLOOR = 0.0


def normalized_eigenvalues(eigenvalues) -> np.ndarray:
    """Tail-normalised spectrum.

    For eigenvalues l_1 >= ... >= l_q the value at rank r is
    (q - r) * l_r / (l_r + ... + l_{q-1}); the last rank is 0 by
    construction.  Ranks whose tail sum vanishes are defined as 0.
    The result is invariant under scaling of the input.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.ndim != 1 or lam.size < 1:
        raise ShapeError("eigenvalues must be a nonempty 1-D array")
    q = lam.size
    # tail[i] = lam[i] + ... + lam[q-2]; the top eigenvalue is excluded
    # from no tail, the last eigenvalue from every tail.
    tail = np.zeros(q)
    if q > 1:
        tail[:-1] = np.cumsum(lam[-2::-1])[::-1]
    numer = (q - 1 - np.arange(q)) * lam
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(tail > 0.0, numer / tail, 0.0)
    return out


@dataclass(frozen=True)
class Spectrum:
    """Top eigenvalues of a Gram matrix with their normalised form."""

    eigenvalues: np.ndarray
    normalized: np.ndarray

    def __post_init__(self) -> None:
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        norm = np.asarray(self.normalized, dtype=np.float64)
        if lam.ndim != 1 or lam.shape != norm.shape:
            raise ShapeError("eigenvalues and normalized must be matching 1-D arrays")
        if lam.size and (np.any(lam < 0.0) or np.any(np.diff(lam) > 0.0)):
            raise ShapeError("eigenvalues must be nonnegative and weakly descending")
        lam = lam.copy()
        norm = norm.copy()
        lam.flags.writeable = False
        norm.flags.writeable = False
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "normalized", norm)

    @classmethod
    def from_eigenvalues(cls, eigenvalues) -> "Spectrum":
        return cls(np.asarray(eigenvalues), normalized_eigenvalues(eigenvalues))

    @property
    def n_ranks(self) -> int:
        return self.eigenvalues.size


def _top_eigenvalues(
    x: np.ndarray, q: int, energy_floor: float = _DEFAULT_ENERGY_FLOOR
) -> np.ndarray:
    """Top q eigenvalues of x x' via the smaller-sided Gram matrix,
    with the numerical-rank cutoff and the absolute floor applied."""
    n, p = x.shape
    g = x @ x.T if n <= p else x.T @ x
    g = 0.5 * (g + g.T)
    lam = sym_eigvals(g)[:q]
    if lam[0] <= 0.0:
        return np.zeros_like(lam)
    cutoff = max(energy_floor, lam[0] * _RANK_TOL_REL)
    return np.where(lam > cutoff, lam, 0.0)


def reconstruction_spectrum(
    x_mean, q: int, energy_floor: float = _DEFAULT_ENERGY_FLOOR
) -> Spectrum:
    """Spectrum of the reconstruction mean truncated to the top q ranks.

    Eigenvalues at or below ``energy_floor`` are reported as exact
    zeros.  Pass a floor anchored to the energy of the underlying data
    matrix to keep directions indistinguishable from numerical residue
    out of the spectrum; the default applies only the relative
    rank cutoff.
    """
    x = np.asarray(x_mean, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"x_mean must be 2-D, got ndim={x.ndim}")
    if not 2 <= q <= min(x.shape):
        raise ConfigError(f"q={q} out of range [2, {min(x.shape)}] for shape {x.shape}")
    if energy_floor < 0.0 or not np.isfinite(energy_floor):
        raise ConfigError(f"energy_floor must be finite and >= 0, got {energy_floor}")
    return Spectrum.from_eigenvalues(_top_eigenvalues(x, q, energy_floor))


@dataclass(frozen=True)
class SigTestConfig:
    """Null sampling and testing settings: number of null samples (at
    least 100), the familywise error level alpha, and the sampling seed."""

    n_null_samples: int = 2000
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_null_samples < 100:
            raise ConfigError(
                f"n_null_samples must be >= 100, got {self.n_null_samples}"
            )
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        RngStream(self.seed)  # validates the seed range


@dataclass(frozen=True)
class NullSpectra:
    """Null spectra stacked row-wise: (n_samples, q) eigenvalue and
    normalised-value arrays, rows in sample order."""

    eigenvalues: np.ndarray
    normalized: np.ndarray

    def __post_init__(self) -> None:
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        norm = np.asarray(self.normalized, dtype=np.float64)
        if lam.ndim != 2 or lam.shape != norm.shape or lam.shape[0] < 1:
            raise ShapeError("null spectra must be matching nonempty 2-D arrays")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "normalized", norm)

    @property
    def n_samples(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_ranks(self) -> int:
        return self.eigenvalues.shape[1]


def sample_null_spectra(
    recon: Reconstruction,
    q: int,
    config: SigTestConfig,
    workers: int = 1,
    energy_floor: float = _DEFAULT_ENERGY_FLOOR,
) -> NullSpectra:
    """Draw spectra under the elementwise null.

    Sample k perturbs every entry of the reconstruction mean with an
    independent normal draw scaled by the posterior standard deviation at
    that entry, using the dedicated stream (seed, k).  Results are
    assembled in sample order, so worker count never affects them.
    ``energy_floor`` must match the floor used for the observed
    spectrum; with an identically zero posterior variance every null
    spectrum then equals the observed one exactly.
    """
    mean = recon.mean
    if mean.ndim != 2:
        raise ShapeError("reconstruction mean must be 2-D")
    if not 2 <= q <= min(mean.shape):
        raise ConfigError(
            f"q={q} out of range [2, {min(mean.shape)}] for shape {mean.shape}"
        )
    if energy_floor < 0.0 or not np.isfinite(energy_floor):
        raise ConfigError(f"energy_floor must be finite and >= 0, got {energy_floor}")
    std = np.sqrt(recon.var)
    n_samples = config.n_null_samples
    eigenvalues = np.empty((n_samples, q))
    normalized = np.empty((n_samples, q))

    def run(k: int) -> None:
        gen = RngStream(config.seed, k).generator()
        draw = mean + std * gen.standard_normal(mean.shape)
        lam = _top_eigenvalues(draw, q, energy_floor)
        eigenvalues[k] = lam
        normalized[k] = normalized_eigenvalues(lam)

    if workers <= 1:
        for k in range(n_samples):
            run(k)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for _ in pool.map(run, range(n_samples)):
                pass
    eigenvalues.flags.writeable = False
    normalized.flags.writeable = False
    return NullSpectra(eigenvalues=eigenvalues, normalized=normalized)


def holm_bonferroni(raw_p, m: int) -> np.ndarray:
    """Step-down adjustment for p-values given in testing order.

    Entry r becomes max over s <= r of min(1, (m - s + 1) * p_s) with
    1-based s, where m is the total number of hypotheses in the family
    (at least the number supplied; untested hypotheses still count).
    """
    p = np.asarray(raw_p, dtype=np.float64)
    if p.ndim != 1:
        raise ShapeError("raw_p must be 1-D")
    if p.size and (np.any(p < 0.0) or np.any(p > 1.0) or not np.all(np.isfinite(p))):
        raise ValueError("p-values must lie in [0, 1]")
    if m < p.size:
        raise ConfigError(f"family size m={m} smaller than the {p.size} p-values given")
    scaled = np.minimum(1.0, (m - np.arange(p.size)) * p)
    return np.maximum.accumulate(scaled)


@dataclass(frozen=True)
class SpectrumTestResult:
    """Outcome of the sequential rank test.

    ``raw_p`` and ``adjusted_p`` cover only the ranks actually tested
    (testing stops at the first adjusted p >= alpha).  ``n_significant``
    counts the ranks whose adjusted p stayed below alpha.
    ``null_quantiles`` holds the 5/50/95 percent points of the null
    normalised values for every rank, shape (q, 3).
    """

    spectrum: Spectrum
    raw_p: np.ndarray
    adjusted_p: np.ndarray
    n_significant: int
    null_quantiles: np.ndarray
    n_null_samples: int
    alpha: float


def count_significant(
    spectrum: Spectrum, null: NullSpectra, config: SigTestConfig
) -> SpectrumTestResult:
    """Sequentially test ranks against the null spectra.

    The raw p-value at rank r is the fraction of null samples whose
    normalised value strictly exceeds the observed one (ties count as
    non-exceedances).  Ranks are tested from the top; after Holm
    adjustment sized to the full spectrum, testing stops at the first
    rank that is not significant.
    """
    q = spectrum.n_ranks
    if q < 2:
        raise ConfigError(f"spectrum must have at least 2 ranks, got {q}")
    if null.n_ranks != q:
        raise ShapeError(
            f"null spectra have {null.n_ranks} ranks, spectrum has {q}"
        )
    n_null = null.n_samples
    raw: list[float] = []
    adjusted = np.empty(0)
    for r in range(q):
        exceed = int(np.count_nonzero(null.normalized[:, r] > spectrum.normalized[r]))
        raw.append(exceed / n_null)
        adjusted = holm_bonferroni(np.asarray(raw), m=q)
        if adjusted[-1] >= config.alpha:
            break
    n_significant = int(np.count_nonzero(adjusted < config.alpha))
    quantiles = np.percentile(null.normalized, _QUANTILES, axis=0).T
    raw_arr = np.asarray(raw)
    raw_arr.flags.writeable = False
    adjusted.flags.writeable = False
    quantiles.flags.writeable = False
    return SpectrumTestResult(
        spectrum=spectrum,
        raw_p=raw_arr,
        adjusted_p=adjusted,
        n_significant=n_significant,
        null_quantiles=quantiles,
        n_null_samples=n_null,
        alpha=config.alpha,
    )
