"""Noise-residual estimators used in place of the distillation gradient's residual term.

Every estimator maps (x0, epsilon, t) to a vector that a trajectory optimizer
descends along. They differ in which mixture scores they combine and in how
the injected noise is subtracted back out:

  * mode_disengaging      h = eps_hat(cond) - eps_hat(uncond)
  * mode_seeking          eps_hat(cond)
  * sds                   omega * h + eps_hat(cond) - eps
  * ssd                   h above a timestep threshold M, otherwise the
                          variance-reduced residual rescaled to ||h||

All operations broadcast over leading axes of ``epsilon`` (and ``x0``), so a
batch of noise draws at a fixed t evaluates in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gmm import GaussianMixture, denoiser_eps
from .schedule import DiffusionSchedule

__all__ = [
    "EstimatorSpec",
    "EstimatorOutput",
    "mode_disengaging",
    "mode_seeking",
    "projection_ratio",
    "variance_reduced_mode_seeking",
    "optimal_c",
    "sds_estimator",
    "ssd_estimator",
    "evaluate",
    "total_variance",
    "trace_cross_covariance",
]

ESTIMATOR_KINDS = ("sds", "mode_seeking", "mode_disengaging", "ssd")
VARIANCE_REDUCTIONS = ("none", "sds_style", "adaptive")

_DEGENERATE_NORM = 1e-12


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to run and its hyperparameters.

    Attributes:
        kind: One of "sds", "mode_seeking", "mode_disengaging", "ssd".
        omega: CFG scale (sds only).
        M: Timestep threshold (ssd only); must satisfy 0 <= M <= T.
        variance_reduction: Residual used by mode_seeking: "none" (raw),
            "sds_style" (subtract eps) or "adaptive" (subtract r * eps).
    """

    kind: str
    omega: float = 100.0
    M: int = 200
    variance_reduction: str = "none"

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        if self.M < 0:
            raise ValueError("M must be >= 0")
        if self.variance_reduction not in VARIANCE_REDUCTIONS:
            raise ValueError(f"unknown variance_reduction {self.variance_reduction!r}")


@dataclass
class EstimatorOutput:
    """An estimator value plus the intermediates that produced it.

    ``parts`` holds whichever of h, eps_hat_cond, eps_hat_uncond, eps,
    r_scalar and rescale_factor the estimator computed. ``branch`` is "h"
    exactly when an ssd evaluation took the t > M path. ``degenerate`` flags
    ssd draws where ||eps_tilde|| vanished and the zero vector was returned
    instead of an undefined rescale.
    """

    value: np.ndarray
    parts: dict = field(default_factory=dict)
    branch: str | None = None
    degenerate: bool | np.ndarray = False


def _noised_point(schedule, x0, epsilon, t):
    x0 = np.asarray(x0, dtype=float)
    epsilon = np.asarray(epsilon, dtype=float)
    return schedule.alpha(t) * x0 + schedule.sigma(t) * epsilon, epsilon


def mode_disengaging(
    mixture: GaussianMixture, schedule: DiffusionSchedule, x0, epsilon, t: int
) -> np.ndarray:
    """h: the gap between conditional and unconditional noise predictions.

    Descending along h pushes the point toward conditional structure while
    disengaging it from unconditional modes; it vanishes wherever the two
    noised marginals have equal score.
    """
    xt, _ = _noised_point(schedule, x0, epsilon, t)
    return denoiser_eps(mixture, schedule, xt, t, True) - denoiser_eps(
        mixture, schedule, xt, t, False
    )


def mode_seeking(
    mixture: GaussianMixture, schedule: DiffusionSchedule, x0, epsilon, t: int
) -> np.ndarray:
    """The conditional noise prediction; points at the nearest conditional mode."""
    xt, _ = _noised_point(schedule, x0, epsilon, t)
    return denoiser_eps(mixture, schedule, xt, t, True)


def projection_ratio(eps_hat: np.ndarray, epsilon: np.ndarray):
    """The scalar k minimizing ||eps_hat - k * epsilon||.

    Computed as (eps_hat . epsilon) / ||epsilon||^2 along the last axis.

    Raises:
        ValueError: if any epsilon has zero norm ("degenerate noise").
    """
    eps_hat = np.asarray(eps_hat, dtype=float)
    epsilon = np.asarray(epsilon, dtype=float)
    denom = np.sum(epsilon * epsilon, axis=-1)
    if np.any(denom == 0.0):
        raise ValueError("degenerate noise")
    out = np.sum(eps_hat * epsilon, axis=-1) / denom
    return float(out) if out.ndim == 0 else out


def variance_reduced_mode_seeking(
    mixture: GaussianMixture, schedule: DiffusionSchedule, x0, epsilon, t: int
) -> np.ndarray:
    """eps_tilde = eps_hat(cond) - r * epsilon; orthogonal to epsilon by construction."""
    eps_hat = mode_seeking(mixture, schedule, x0, epsilon, t)
    r = projection_ratio(eps_hat, epsilon)
    return eps_hat - np.asarray(r)[..., None] * np.asarray(epsilon, dtype=float)


def total_variance(samples: np.ndarray) -> float:
    """Trace of the sample covariance (ddof=1) of row vectors."""
    samples = np.asarray(samples, dtype=float)
    return float(np.var(samples, axis=0, ddof=1).sum())


def trace_cross_covariance(a: np.ndarray, b: np.ndarray) -> float:
    """Trace of the sample cross-covariance between row vectors a and b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    return float((ac * bc).sum() / (n - 1))


def optimal_c(
    mixture: GaussianMixture,
    schedule: DiffusionSchedule,
    x0,
    t: int,
    n_samples: int,
    rng_seed: int,
) -> float:
    """The constant coefficient minimizing the residual's total variance.

    Draws ``n_samples`` fresh noises, evaluates the conditional denoiser on
    each, and returns tr(Cov(eps_hat, eps)) / tr(Cov(eps)) over that sample
    set. The denominator estimates tr(Cov(eps)) = d; using the sample value
    instead of d makes the returned coefficient the exact minimizer of the
    sampled residual total variance tr(Cov(eps_hat - k eps)) over k.

    Deterministic given ``rng_seed``.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    x0 = np.asarray(x0, dtype=float)
    rng = np.random.default_rng(rng_seed)
    eps = rng.standard_normal((int(n_samples), x0.shape[-1]))
    eps_hat = mode_seeking(mixture, schedule, x0, eps, t)
    return trace_cross_covariance(eps_hat, eps) / total_variance(eps)


def sds_estimator(
    mixture: GaussianMixture, schedule: DiffusionSchedule, x0, epsilon, t: int, omega: float
) -> np.ndarray:
    """The CFG residual omega * h + eps_hat(cond) - eps.

    Algebraically identical to (1 + omega) eps_hat(cond) - omega eps_hat(uncond) - eps.
    """
    xt, epsilon = _noised_point(schedule, x0, epsilon, t)
    eps_cond = denoiser_eps(mixture, schedule, xt, t, True)
    eps_uncond = denoiser_eps(mixture, schedule, xt, t, False)
    return omega * (eps_cond - eps_uncond) + eps_cond - epsilon


def ssd_estimator(
    mixture: GaussianMixture, schedule: DiffusionSchedule, x0, epsilon, t: int, M: int
) -> EstimatorOutput:
    """The piecewise estimator: h for t > M, norm-matched eps_tilde for t <= M.

    For t <= M the variance-reduced residual is rescaled to ||h|| so both
    regimes feed the optimizer steps of comparable size. Draws where
    ||eps_tilde|| < 1e-12 (e.g. t = 0, where the denoiser vanishes) return
    the zero vector and are flagged degenerate rather than dividing by
    near-zero.
    """
    if not 0 <= M <= schedule.T:
        raise ValueError(f"threshold M={M} out of range [0, {schedule.T}]")
    xt, epsilon = _noised_point(schedule, x0, epsilon, t)
    eps_cond = denoiser_eps(mixture, schedule, xt, t, True)
    eps_uncond = denoiser_eps(mixture, schedule, xt, t, False)
    h = eps_cond - eps_uncond
    parts = {"h": h, "eps_hat_cond": eps_cond, "eps_hat_uncond": eps_uncond, "eps": epsilon}
    if t > M:
        return EstimatorOutput(value=h, parts=parts, branch="h")
    r = projection_ratio(eps_cond, epsilon)
    eps_tilde = eps_cond - np.asarray(r)[..., None] * epsilon
    h_norm = np.linalg.norm(h, axis=-1)
    tilde_norm = np.linalg.norm(eps_tilde, axis=-1)
    degenerate = tilde_norm < _DEGENERATE_NORM
    factor = np.where(degenerate, 0.0, h_norm / np.where(degenerate, 1.0, tilde_norm))
    value = np.asarray(factor)[..., None] * eps_tilde
    parts["r_scalar"] = r
    parts["rescale_factor"] = float(factor) if np.ndim(factor) == 0 else factor
    return EstimatorOutput(
        value=value,
        parts=parts,
        branch="rescaled",
        degenerate=bool(degenerate) if np.ndim(degenerate) == 0 else degenerate,
    )


def evaluate(
    spec: EstimatorSpec,
    mixture: GaussianMixture,
    schedule: DiffusionSchedule,
    x0,
    epsilon,
    t: int,
) -> EstimatorOutput:
    """Run the estimator selected by ``spec`` and collect its intermediates."""
    if spec.kind == "ssd":
        return ssd_estimator(mixture, schedule, x0, epsilon, t, spec.M)
    xt, epsilon = _noised_point(schedule, x0, epsilon, t)
    eps_cond = denoiser_eps(mixture, schedule, xt, t, True)
    parts = {"eps_hat_cond": eps_cond, "eps": epsilon}
    if spec.kind == "mode_seeking":
        if spec.variance_reduction == "none":
            value = eps_cond
        elif spec.variance_reduction == "sds_style":
            value = eps_cond - epsilon
        else:  # adaptive
            r = projection_ratio(eps_cond, epsilon)
            parts["r_scalar"] = r
            value = eps_cond - np.asarray(r)[..., None] * epsilon
        return EstimatorOutput(value=value, parts=parts, branch=spec.kind)
    eps_uncond = denoiser_eps(mixture, schedule, xt, t, False)
    h = eps_cond - eps_uncond
    parts["eps_hat_uncond"] = eps_uncond
    parts["h"] = h
    if spec.kind == "mode_disengaging":
        return EstimatorOutput(value=h, parts=parts, branch=spec.kind)
    value = spec.omega * h + eps_cond - epsilon
    return EstimatorOutput(value=value, parts=parts, branch=spec.kind)
