"""Monte-Carlo estimator statistics, mode finding, and density diagnostics.

The sweep machinery reproduces the estimator statistics protocol: for a fixed
clean probe point and each timestep, a batch of noises is drawn, the exact
denoisers are evaluated on every draw, and norms / correlation / variance-
reduction coefficients are aggregated per timestep.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    projection_ratio,
    total_variance,
    trace_cross_covariance,
)
from .gmm import GaussianMixture, conditional_view, denoiser_eps, log_density, noised_marginal, score
from .schedule import DiffusionSchedule

__all__ = [
    "StatSweep",
    "ModeSet",
    "DensityMap",
    "stat_sweep",
    "find_modes",
    "transient_onset",
    "density_map",
    "sds_loss_estimate",
]

_SWEEP_COLUMNS = ("norm_eps_hat", "norm_h", "correlation", "c", "r_min", "r_max")


@dataclass
class StatSweep:
    """Per-timestep Monte-Carlo statistics at a fixed clean probe point.

    per_t maps column name -> array aligned with ``timesteps``:
    mean ||eps_hat||, mean ||h||, the trace-normalized linear correlation
    between eps_hat and eps, the optimal constant coefficient c, and the
    extremes of the per-sample projection ratio r.

    ``violations`` lists any timestep where c escaped [min r, max r]; the
    value is reported as computed, never clipped.
    """

    timesteps: list[int]
    per_t: dict
    n_samples: int
    probe_x0: np.ndarray
    violations: list[str] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# n_samples={self.n_samples} probe_x0={self.probe_x0.tolist()}\n")
            writer = csv.writer(fh)
            writer.writerow(["t", *_SWEEP_COLUMNS])
            for i, t in enumerate(self.timesteps):
                writer.writerow(
                    [t] + [repr(float(self.per_t[col][i])) for col in _SWEEP_COLUMNS]
                )


def stat_sweep(
    mixture: GaussianMixture,
    schedule: DiffusionSchedule,
    probe_x0,
    timesteps,
    n_samples: int,
    seed: int,
) -> StatSweep:
    """Sweep estimator statistics over timesteps at one clean probe point.

    Each timestep gets an independent substream spawned from ``seed``, so the
    per-t results do not depend on sweep order or parallel execution. The
    coefficient c is computed from the same sample set as the r extremes.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    probe_x0 = np.asarray(probe_x0, dtype=float)
    timesteps = [int(t) for t in timesteps]
    children = np.random.SeedSequence(seed).spawn(len(timesteps))
    cols = {name: np.empty(len(timesteps)) for name in _SWEEP_COLUMNS}
    violations = []
    for i, t in enumerate(timesteps):
        rng = np.random.default_rng(children[i])
        eps = rng.standard_normal((n_samples, probe_x0.shape[-1]))
        xt = schedule.alpha(t) * probe_x0 + schedule.sigma(t) * eps
        eps_cond = denoiser_eps(mixture, schedule, xt, t, True)
        eps_uncond = denoiser_eps(mixture, schedule, xt, t, False)
        h = eps_cond - eps_uncond
        r = projection_ratio(eps_cond, eps)
        tr_cross = trace_cross_covariance(eps_cond, eps)
        tv_eps = total_variance(eps)
        tv_hat = total_variance(eps_cond)
        denom = np.sqrt(tv_hat * tv_eps)
        cols["norm_eps_hat"][i] = np.linalg.norm(eps_cond, axis=-1).mean()
        cols["norm_h"][i] = np.linalg.norm(h, axis=-1).mean()
        cols["correlation"][i] = 0.0 if denom == 0.0 else tr_cross / denom
        cols["c"][i] = tr_cross / tv_eps
        cols["r_min"][i] = r.min()
        cols["r_max"][i] = r.max()
        if not (cols["r_min"][i] - 1e-12 <= cols["c"][i] <= cols["r_max"][i] + 1e-12):
            violations.append(
                f"t={t}: c={cols['c'][i]!r} outside [min r, max r] = "
                f"[{cols['r_min'][i]!r}, {cols['r_max'][i]!r}]"
            )
    return StatSweep(
        timesteps=timesteps,
        per_t=cols,
        n_samples=int(n_samples),
        probe_x0=probe_x0,
        violations=violations,
    )


@dataclass
class ModeSet:
    """Distinct local maxima of a mixture density, sorted by log-density."""

    modes: np.ndarray
    log_densities: np.ndarray
    tolerance: float

    def __len__(self) -> int:
        return self.modes.shape[0]

    def write_csv(self, path) -> None:
        d = self.modes.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x_{i}" for i in range(d)] + ["log_density"])
            for mode, lp in zip(self.modes, self.log_densities):
                writer.writerow([repr(float(v)) for v in mode] + [repr(float(lp))])


def _grid_seeds(region, resolution) -> np.ndarray:
    axes = []
    if np.isscalar(resolution):
        resolution = [int(resolution)] * len(region)
    for (lo, hi), n in zip(region, resolution):
        axes.append(np.linspace(lo, hi, int(n)))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _ascend(mixture, seeds, grad_tol=1e-8, max_iter=500):
    """Batched gradient ascent on log-density with backtracking line search."""
    x = np.array(seeds, dtype=float)
    step = np.ones(len(x))
    lp = np.atleast_1d(log_density(mixture, x))
    converged = np.zeros(len(x), dtype=bool)
    for _ in range(max_iter):
        g = score(mixture, x)
        gn2 = np.sum(g * g, axis=-1)
        converged |= gn2 <= grad_tol**2
        active = np.where(~converged)[0]
        if active.size == 0:
            break
        xa, ga, lpa, sa, gna = x[active], g[active], lp[active], step[active], gn2[active]
        ok = np.zeros(active.size, dtype=bool)
        cand, lpc = xa, lpa
        for _ in range(60):
            trial = np.where(ok[:, None], cand, xa + sa[:, None] * ga)
            lpt = np.atleast_1d(log_density(mixture, trial))
            accept = ok | (lpt >= lpa + 1e-4 * sa * gna)
            cand = np.where(accept[:, None], trial, cand)
            lpc = np.where(accept, lpt, lpc)
            sa = np.where(accept, sa, sa * 0.5)
            ok = accept
            if ok.all():
                break
        x[active] = np.where(ok[:, None], cand, xa)
        lp[active] = np.where(ok, lpc, lpa)
        step[active] = np.minimum(sa * 2.0, 1e6)
    return x, lp, converged


def find_modes(mixture: GaussianMixture, region, resolution, tolerance: float = 1e-3) -> ModeSet:
    """Locate distinct density modes by multi-start gradient ascent.

    For dimension <= 2 the starts form a regular grid over ``region``
    (one (lo, hi) pair per dimension); in higher dimension the component
    means and their pairwise midpoints seed the search. Converged points
    (score norm < 1e-8) are greedily clustered with radius ``tolerance``.

    Raises:
        RuntimeError: "no convergence" if no seed converged within the
            iteration cap.
    """
    if mixture.dim <= 2:
        seeds = _grid_seeds(region, resolution)
    else:
        means = mixture.means
        mids = [(a + b) / 2.0 for i, a in enumerate(means) for b in means[i + 1:]]
        seeds = np.concatenate([means, np.array(mids).reshape(-1, mixture.dim)]) \
            if mids else means.copy()
    x, lp, converged = _ascend(mixture, seeds)
    if not converged.any():
        raise RuntimeError("no convergence")
    x, lp = x[converged], lp[converged]
    order = np.argsort(-lp)
    kept: list[np.ndarray] = []
    kept_lp: list[float] = []
    for i in order:
        if all(np.linalg.norm(x[i] - m) > tolerance for m in kept):
            kept.append(x[i])
            kept_lp.append(lp[i])
    return ModeSet(
        modes=np.array(kept), log_densities=np.array(kept_lp), tolerance=tolerance
    )


def _auto_region(mixture: GaussianMixture, pad_stds: float = 5.0):
    stds = np.sqrt(
        np.stack([np.diagonal(c.covariance) for c in mixture.components])
    )
    lo = (mixture.means - pad_stds * stds).min(axis=0)
    hi = (mixture.means + pad_stds * stds).max(axis=0)
    return list(zip(lo.tolist(), hi.tolist()))


def _n_modes_at(cond: GaussianMixture, schedule: DiffusionSchedule, t: int, resolution: int) -> int:
    marginal = noised_marginal(cond, schedule, t)
    return len(find_modes(marginal, _auto_region(marginal), resolution))


def transient_onset(
    mixture: GaussianMixture, schedule: DiffusionSchedule, resolution: int = 15
) -> int:
    """Smallest t at which the noised conditional marginal becomes unimodal.

    Binary-searches the merge point of the conditional modes under the
    forward process.

    Raises:
        ValueError: "no bimodal regime" if the conditional marginal is
            already unimodal at t = 1.
    """
    cond = conditional_view(mixture)
    if _n_modes_at(cond, schedule, 1, resolution) < 2:
        raise ValueError("no bimodal regime")
    if _n_modes_at(cond, schedule, schedule.T, resolution) != 1:
        raise RuntimeError("marginal not unimodal at the horizon")
    lo, hi = 1, schedule.T
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _n_modes_at(cond, schedule, mid, resolution) == 1:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class DensityMap:
    """Raster of log-densities over a rectangle, row-major with cell centers.

    values[i, j] is the log-density at (x0 + j*dx, y0 + i*dy).
    """

    values: np.ndarray
    x0: float
    y0: float
    dx: float
    dy: float
    t: int
    region: list

    def argmax_point(self) -> np.ndarray:
        i, j = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return np.array([self.x0 + j * self.dx, self.y0 + i * self.dy])

    def cell_area(self) -> float:
        return self.dx * self.dy

    def write_csv(self, path) -> None:
        ny, nx = self.values.shape
        with open(path, "w", newline="") as fh:
            fh.write(
                f"# t={self.t} x0={self.x0!r} y0={self.y0!r} dx={self.dx!r} dy={self.dy!r} "
                f"nx={nx} ny={ny}\n"
            )
            writer = csv.writer(fh)
            for row in self.values:
                writer.writerow([repr(float(v)) for v in row])


def density_map(
    mixture: GaussianMixture,
    schedule: DiffusionSchedule,
    t: int,
    region,
    resolution,
) -> DensityMap:
    """Rasterize the log-density of the noised conditional marginal (d = 2).

    Args:
        region: ((xlo, xhi), (ylo, yhi)) rectangle.
        resolution: (nx, ny) pixel counts, both positive.
    """
    if mixture.dim != 2:
        raise ValueError("density_map requires a 2-D mixture")
    (xlo, xhi), (ylo, yhi) = region
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    nx, ny = int(nx), int(ny)
    if nx <= 0 or ny <= 0:
        raise ValueError("resolution must be positive")
    marginal = noised_marginal(conditional_view(mixture), schedule, t)
    dx = (xhi - xlo) / nx
    dy = (yhi - ylo) / ny
    xs = xlo + (np.arange(nx) + 0.5) * dx
    ys = ylo + (np.arange(ny) + 0.5) * dy
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx, gy], axis=-1)
    values = log_density(marginal, pts)
    return DensityMap(
        values=values, x0=float(xs[0]), y0=float(ys[0]), dx=float(dx), dy=float(dy),
        t=int(t), region=[list(map(float, region[0])), list(map(float, region[1]))],
    )


def sds_loss_estimate(
    mixture: GaussianMixture,
    schedule: DiffusionSchedule,
    x0,
    t: int,
    n_samples: int,
    seed: int,
    weight: float = 1.0,
) -> float:
    """Monte-Carlo estimate of the distillation loss at one (x0, t).

    Estimates (sigma_t / alpha_t) * w * KL(N(alpha_t x0, sigma_t^2 I) ||
    noised conditional marginal) by sampling from the first distribution and
    averaging the log-density difference.

    Raises:
        ValueError: at alpha_t = 0 ("undefined weight at terminal t") and at
            sigma_t = 0 (the noising kernel degenerates to a point mass).
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    a = schedule.alpha(t)
    s = schedule.sigma(t)
    if a == 0.0:
        raise ValueError("undefined weight at terminal t")
    if s == 0.0:
        raise ValueError("zero-noise timestep: KL against a point mass is undefined")
    x0 = np.asarray(x0, dtype=float)
    d = x0.shape[-1]
    rng = np.random.default_rng(seed)
    zeta = rng.standard_normal((int(n_samples), d))
    xi = a * x0 + s * zeta
    log_q = -0.5 * d * np.log(2.0 * np.pi * s * s) - 0.5 * np.sum(zeta * zeta, axis=-1)
    marginal = noised_marginal(conditional_view(mixture), schedule, t)
    log_p = log_density(marginal, xi)
    kl = float(np.mean(log_q - log_p))
    return (s / a) * weight * kl
