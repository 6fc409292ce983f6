"""Analytic Gaussian-mixture targets and their exact denoiser.

A single GaussianMixture carries both the unconditional target P(x) (all
components) and the conditional target P(x|y) (components flagged in
``conditional_mask``, renormalized). Noising the mixture through the forward
process yields another Gaussian mixture in closed form, so scores and the
optimal noise predictor are exact — no learned model anywhere.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import logsumexp

from .schedule import DiffusionSchedule

__all__ = [
    "GaussianComponent",
    "GaussianMixture",
    "conditional_view",
    "noised_marginal",
    "log_density",
    "score",
    "denoiser_eps",
]

_WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class GaussianComponent:
    """One mixture component: weight * N(mean, covariance).

    The covariance must be symmetric positive definite; a Cholesky
    factorization is attempted at construction and its failure is the
    SPD check.
    """

    weight: float
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.covariance, dtype=float)
        d = mean.shape[0]
        if mean.ndim != 1:
            raise ValueError("component mean must be a vector")
        if cov.shape != (d, d):
            raise ValueError(f"covariance must be {d}x{d} to match the mean")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if not self.weight > 0:
            raise ValueError("component weight must be > 0")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


class GaussianMixture:
    """Weighted Gaussian mixture with a conditional sub-population.

    Attributes:
        components: Tuple of GaussianComponent, weights summing to 1.
        conditional_mask: Boolean flags marking the components of P(x|y).

    The object is immutable after construction; all evaluation methods are
    pure and safe to call concurrently.
    """

    def __init__(self, components, conditional_mask):
        components = tuple(components)
        if not components:
            raise ValueError("mixture needs at least one component")
        mask = np.asarray(conditional_mask, dtype=bool)
        if mask.shape != (len(components),):
            raise ValueError("conditional_mask length must match components")
        d = components[0].dim
        if any(c.dim != d for c in components):
            raise ValueError("all components must share one dimension")
        total = sum(c.weight for c in components)
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1 (got {total!r})")

        self.components = components
        self.conditional_mask = mask
        mask.setflags(write=False)

        self._weights = np.array([c.weight for c in components])
        self._means = np.stack([c.mean for c in components])
        self._covs = np.stack([c.covariance for c in components])
        chols = np.stack([np.linalg.cholesky(c.covariance) for c in components])
        self._log_weights = np.log(self._weights)
        # log of the normalizing constant of each component
        self._log_norms = -0.5 * d * np.log(2.0 * np.pi) - np.log(
            np.diagonal(chols, axis1=1, axis2=2)
        ).sum(axis=1)
        eye = np.eye(d)
        self._precisions = np.stack(
            [cho_solve((chols[i], True), eye) for i in range(len(components))]
        )
        for arr in (self._weights, self._means, self._covs, self._log_weights,
                    self._log_norms, self._precisions):
            arr.setflags(write=False)
        self._conditional: GaussianMixture | None = None
        self._noised_cache: dict[tuple[str, int], GaussianMixture] = {}

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def means(self) -> np.ndarray:
        return self._means

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(self._weights.tobytes())
        digest.update(self._means.tobytes())
        digest.update(self._covs.tobytes())
        digest.update(self.conditional_mask.tobytes())
        return digest.hexdigest()[:16]

    def _log_component_densities(self, x: np.ndarray) -> np.ndarray:
        """Per-component log densities log(w_i N(x; mu_i, Sigma_i)).

        Args:
            x: Points, shape (..., d).

        Returns:
            Array of shape (..., K).
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {x.shape[-1]}")
        diff = x[..., None, :] - self._means  # (..., K, d)
        maha = np.einsum("...ki,kij,...kj->...k", diff, self._precisions, diff)
        return self._log_weights + self._log_norms - 0.5 * maha


def conditional_view(mixture: GaussianMixture) -> GaussianMixture:
    """The conditional distribution P(x|y): flagged components, renormalized.

    Raises:
        ValueError: if no component is flagged ("empty conditional support").
    """
    if mixture._conditional is not None:
        return mixture._conditional
    mask = mixture.conditional_mask
    if not mask.any():
        raise ValueError("empty conditional support")
    if mask.all():
        mixture._conditional = mixture
        return mixture
    kept = [c for c, keep in zip(mixture.components, mask) if keep]
    total = sum(c.weight for c in kept)
    comps = [
        GaussianComponent(weight=c.weight / total, mean=c.mean, covariance=c.covariance)
        for c in kept
    ]
    view = GaussianMixture(comps, np.ones(len(comps), dtype=bool))
    mixture._conditional = view
    return view


def noised_marginal(mixture: GaussianMixture, schedule: DiffusionSchedule, t: int) -> GaussianMixture:
    """The distribution of x_t = alpha_t x + sigma_t eps when x ~ mixture.

    Each component maps to N(alpha_t mu, alpha_t^2 Sigma + sigma_t^2 I);
    weights and conditional flags are unchanged. Results are cached per
    (schedule, t) on the mixture.
    """
    a = schedule.alpha(t)
    s = schedule.sigma(t)
    if a == 1.0 and s == 0.0:
        return GaussianMixture(mixture.components, mixture.conditional_mask)
    key = (schedule.key, int(t))
    cached = mixture._noised_cache.get(key)
    if cached is not None:
        return cached
    eye = np.eye(mixture.dim)
    comps = [
        GaussianComponent(
            weight=c.weight,
            mean=a * c.mean,
            covariance=a * a * c.covariance + s * s * eye,
        )
        for c in mixture.components
    ]
    noised = GaussianMixture(comps, mixture.conditional_mask)
    mixture._noised_cache[key] = noised
    return noised


def log_density(mixture: GaussianMixture, x: np.ndarray) -> np.ndarray | float:
    """log P(x) under the mixture, via a numerically stable log-sum-exp.

    Args:
        mixture: Target mixture.
        x: Point(s), shape (..., d).

    Returns:
        Scalar for a single point, array of shape (...) for a batch.
    """
    logcomp = mixture._log_component_densities(x)
    out = logsumexp(logcomp, axis=-1)
    return float(out) if out.ndim == 0 else out


def score(mixture: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """The score grad_x log P(x).

    Equals the responsibility-weighted sum of per-component scores
    Sigma_i^{-1} (mu_i - x), with responsibilities computed in log space.

    Args:
        mixture: Target mixture.
        x: Point(s), shape (..., d).

    Returns:
        Score vector(s), shape (..., d).
    """
    x = np.asarray(x, dtype=float)
    logcomp = mixture._log_component_densities(x)
    logcomp = logcomp - logcomp.max(axis=-1, keepdims=True)
    gamma = np.exp(logcomp)
    gamma /= gamma.sum(axis=-1, keepdims=True)
    diff = mixture._means - x[..., None, :]  # (..., K, d)
    comp_scores = np.einsum("kij,...kj->...ki", mixture._precisions, diff)
    return np.einsum("...k,...ki->...i", gamma, comp_scores)


def denoiser_eps(
    mixture: GaussianMixture,
    schedule: DiffusionSchedule,
    xt: np.ndarray,
    t: int,
    conditional: bool,
) -> np.ndarray:
    """The exact optimal noise predictor -sigma_t grad log P(x_t).

    This is the closed-form stand-in for a trained denoiser: it evaluates the
    score of the noised marginal (conditional or unconditional) at x_t.

    Args:
        mixture: Clean-data mixture.
        schedule: Forward-process coefficients.
        xt: Noised point(s), shape (..., d).
        t: Integer timestep in [0, T].
        conditional: Use the conditional restriction of the mixture.

    Returns:
        Predicted noise, shape (..., d). Zero at t = 0, exactly epsilon at t = T.
    """
    base = conditional_view(mixture) if conditional else mixture
    marginal = noised_marginal(base, schedule, t)
    return -schedule.sigma(t) * score(marginal, np.asarray(xt, dtype=float))
