"""Ground-truth Monte Carlo evaluation of the Bayesian mean and variance of
an observable over the density-matrix set, under the flat (Hilbert-Schmidt)
prior, by self-normalized importance sampling from that prior.

Desk-scale only: the importance weights exp(total_shots * f) collapse as the
posterior sharpens, so an effective-sample-size guard refuses estimates that
would be dominated by a handful of draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hermitian import DensityMatrix, HermitianMatrix
from .likelihood import MeasurementDataset

_ESS_FLOOR = 50.0
_CHUNK = 8192


class EffectiveSampleSizeError(RuntimeError):
    """Importance weights collapsed; raise samples or lower the shot count."""


@dataclass(frozen=True)
class McOptions:
    samples: int
    seed: int = 0
    batches: int = 20  # batch-means blocks for the standard errors

    def __post_init__(self):
        if self.samples < 1000:
            raise ValueError("at least 1000 samples required for a reported estimate")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.batches < 2:
            raise ValueError("need at least 2 batches for standard errors")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    variance: float
    std_error_mean: float
    std_error_variance: float
    effective_sample_size: float
    samples: int
    seed: int

    def to_json_obj(self) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "se_mean": self.std_error_mean,
            "se_var": self.std_error_variance,
            "ess": self.effective_sample_size,
            "samples": self.samples,
            "seed": self.seed,
        }


def _ginibre_density(d: int, rng: np.random.Generator) -> np.ndarray:
    """One flat-measure sample: normalized square of a complex Gaussian."""
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    m = g @ g.conj().T
    return m / float(np.trace(m).real)


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    # Sample `index` owns this generator, so any chunking or scheduling of
    # the sampling loop reproduces identical draws.
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def sample_density_hs(d: int, rng: np.random.Generator) -> DensityMatrix:
    """Draw a density matrix from the flat (Hilbert-Schmidt) measure."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    return DensityMatrix(_ginibre_density(d, rng))


def _snis(log_w: np.ndarray, values: np.ndarray, batches: int):
    """Self-normalized importance estimates with batch-means standard errors.

    Invariant under shifting log_w by any constant. Returns
    (mean, variance, se_mean, se_var, ess).
    """
    shift = float(np.max(log_w))
    if not math.isfinite(shift):
        raise EffectiveSampleSizeError("all samples carry zero likelihood")
    w = np.exp(log_w - shift)
    wsum = float(w.sum())
    ess = wsum**2 / float((w**2).sum())
    mean = float(np.dot(w, values) / wsum)
    variance = float(np.dot(w, (values - mean) ** 2) / wsum)

    block_means, block_vars = [], []
    for wb, vb in zip(np.array_split(w, batches), np.array_split(values, batches)):
        sb = float(wb.sum())
        if sb <= 0.0:
            continue
        mb = float(np.dot(wb, vb) / sb)
        block_means.append(mb)
        block_vars.append(float(np.dot(wb, (vb - mb) ** 2) / sb))
    if len(block_means) < 2:
        raise EffectiveSampleSizeError("importance weight mass concentrated in one batch")
    k = len(block_means)
    se_mean = float(np.std(block_means, ddof=1) / math.sqrt(k))
    se_var = float(np.std(block_vars, ddof=1) / math.sqrt(k))
    return mean, variance, se_mean, se_var, ess


def mc_bayes(
    ds: MeasurementDataset, observable: HermitianMatrix, opts: McOptions
) -> McEstimate:
    """Bayesian mean and variance of tr(rho A) under the flat prior, by
    importance sampling with weights proportional to exp(total_shots * f).

    Deterministic given (seed, samples). Raises EffectiveSampleSizeError when
    the effective sample size drops below 50.
    """
    d = ds.dim
    if observable.dim != d:
        raise ValueError(f"dimension mismatch: observable {observable.dim}, dataset {d}")
    stack = ds.effect_stack
    weights = ds.weights
    seen = weights > 0
    n_shots = ds.total_shots

    log_w = np.empty(opts.samples)
    vals = np.empty(opts.samples)
    a_m = observable.matrix
    for start in range(0, opts.samples, _CHUNK):
        count = min(_CHUNK, opts.samples - start)
        rhos = np.empty((count, d, d), dtype=complex)
        for i in range(count):
            rhos[i] = _ginibre_density(d, _sample_rng(opts.seed, start + i))
        probs = np.einsum("sij,mji->sm", rhos, stack).real[:, seen]
        good = np.all(probs > 0.0, axis=1)
        f = np.full(count, -np.inf)
        if np.any(good):
            f[good] = np.log(probs[good]) @ weights[seen]
        log_w[start:start + count] = n_shots * f
        vals[start:start + count] = np.einsum("sij,ji->s", rhos, a_m).real

    mean, variance, se_mean, se_var, ess = _snis(log_w, vals, opts.batches)
    if ess < _ESS_FLOOR:
        raise EffectiveSampleSizeError(
            f"effective sample size {ess:.1f} below {_ESS_FLOOR:.0f}; "
            "raise samples or lower the shot count"
        )
    return McEstimate(
        mean=mean,
        variance=variance,
        std_error_mean=se_mean,
        std_error_variance=se_var,
        effective_sample_size=ess,
        samples=opts.samples,
        seed=opts.seed,
    )
