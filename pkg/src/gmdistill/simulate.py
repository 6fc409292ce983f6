"""Gradient-descent trajectories driven by a noise-residual estimator.

The optimized variable is the point itself (theta = x), so each step is

    theta <- theta - learning_rate * w(t) * estimator(theta, eps, t)

with t drawn uniformly from an annealed integer range and eps ~ N(0, I),
both from a single per-trajectory seeded stream (t first, then eps).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .estimators import EstimatorSpec, evaluate
from .gmm import GaussianMixture, conditional_view, log_density
from .schedule import DiffusionSchedule

__all__ = [
    "OptimizerConfig",
    "Trajectory",
    "DivergenceError",
    "sample_timestep",
    "run_trajectory",
    "run_trap_escape",
]

W_OF_T_KINDS = ("constant", "sigma_squared")
OPTIMIZER_KINDS = ("sgd", "adam")

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for one optimization trajectory.

    Attributes:
        steps: Number of update steps.
        learning_rate: Step size, > 0.
        t_range_initial: Inclusive timestep range sampled before annealing.
        t_range_final: Inclusive range sampled from ``anneal_after`` onwards.
        anneal_after: Step index at which the range switches (<= steps).
        w_of_t: Gradient weighting, "constant" (1) or "sigma_squared".
        seed: RNG seed for the trajectory's draw stream.
        init_theta: Starting point.
        optimizer: "sgd" (plain descent, default) or "adam".
    """

    steps: int = 3000
    learning_rate: float = 0.01
    t_range_initial: tuple[int, int] = (20, 980)
    t_range_final: tuple[int, int] = (20, 500)
    anneal_after: int = 1000
    w_of_t: str = "constant"
    seed: int = 0
    init_theta: tuple[float, ...] = (0.0, 0.0)
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.anneal_after <= self.steps:
            raise ValueError("anneal_after must lie in [0, steps]")
        for name, rng in (("t_range_initial", self.t_range_initial),
                          ("t_range_final", self.t_range_final)):
            lo, hi = rng
            if lo > hi or lo < 1:
                raise ValueError(f"{name} must satisfy 1 <= lo <= hi")
        if self.w_of_t not in W_OF_T_KINDS:
            raise ValueError(f"unknown w_of_t {self.w_of_t!r}")
        if self.optimizer not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def validate_against(self, schedule: DiffusionSchedule) -> None:
        for name, rng in (("t_range_initial", self.t_range_initial),
                          ("t_range_final", self.t_range_final)):
            if rng[1] > schedule.T - 1:
                raise ValueError(f"{name} must stay within [1, T-1] = [1, {schedule.T - 1}]")


class DivergenceError(RuntimeError):
    """theta left the finite range; carries the partial trajectory."""

    def __init__(self, message: str, trajectory: "Trajectory"):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class Trajectory:
    """An optimization run: the visited points plus per-step diagnostics.

    ``points`` has ``steps + 1`` rows (initial point included). Diagnostics
    are parallel arrays of length ``steps`` describing the step taken FROM
    ``points[k]``: sampled t, branch taken, estimator norm, projection ratio
    r (NaN when not computed), and the clean log-densities of theta under
    P(x) and P(x|y).
    """

    points: np.ndarray
    diagnostics: dict
    config_hash: str

    @property
    def final(self) -> np.ndarray:
        return self.points[-1]

    def write_csv(self, path) -> None:
        d = self.points.shape[1]
        diag = self.diagnostics
        steps = self.points.shape[0] - 1
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_hash={self.config_hash}\n")
            writer = csv.writer(fh)
            writer.writerow(
                ["step", "t"] + [f"theta_{i}" for i in range(d)]
                + ["branch", "est_norm", "r", "logp_uncond", "logp_cond"]
            )
            for k in range(steps + 1):
                theta = [repr(float(v)) for v in self.points[k]]
                if k < steps:
                    r = diag["r"][k]
                    writer.writerow(
                        [k, int(diag["t"][k])] + theta
                        + [
                            diag["branch"][k],
                            repr(float(diag["est_norm"][k])),
                            "" if math.isnan(r) else repr(float(r)),
                            repr(float(diag["logp_uncond"][k])),
                            repr(float(diag["logp_cond"][k])),
                        ]
                    )
                else:
                    writer.writerow([k, ""] + theta + ["", "", "", "", ""])


def sample_timestep(config: OptimizerConfig, step_index: int, rng: np.random.Generator) -> int:
    """Uniform integer timestep from the range active at ``step_index``."""
    lo, hi = (
        config.t_range_initial
        if step_index < config.anneal_after
        else config.t_range_final
    )
    return int(rng.integers(lo, hi + 1))


def config_fingerprint(
    mixture: GaussianMixture,
    schedule: DiffusionSchedule,
    estimator: EstimatorSpec,
    config: OptimizerConfig,
) -> str:
    payload = {
        "mixture": mixture.fingerprint(),
        "schedule": schedule.key,
        "estimator": [estimator.kind, estimator.omega, estimator.M, estimator.variance_reduction],
        "optimizer": [
            config.steps, config.learning_rate,
            list(config.t_range_initial), list(config.t_range_final),
            config.anneal_after, config.w_of_t, config.seed,
            list(config.init_theta), config.optimizer,
        ],
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run_trajectory(
    mixture: GaussianMixture,
    schedule: DiffusionSchedule,
    estimator: EstimatorSpec,
    config: OptimizerConfig,
) -> Trajectory:
    """Optimize theta from ``config.init_theta`` under the chosen estimator.

    Returns the full Trajectory; replaying with the same inputs reproduces it
    bit for bit.

    Raises:
        DivergenceError: if theta becomes non-finite; the partial trajectory
            is attached to the exception.
    """
    config.validate_against(schedule)
    d = mixture.dim
    theta = np.array(config.init_theta, dtype=float)
    if theta.shape != (d,):
        raise ValueError(f"init_theta must have dimension {d}")
    rng = np.random.default_rng(config.seed)
    cond = conditional_view(mixture)

    points = np.empty((config.steps + 1, d))
    points[0] = theta
    diag = {
        "t": np.empty(config.steps, dtype=int),
        "branch": [],
        "est_norm": np.empty(config.steps),
        "r": np.full(config.steps, np.nan),
        "logp_uncond": np.empty(config.steps),
        "logp_cond": np.empty(config.steps),
    }
    fingerprint = config_fingerprint(mixture, schedule, estimator, config)

    adam_m = np.zeros(d)
    adam_v = np.zeros(d)

    for k in range(config.steps):
        t = sample_timestep(config, k, rng)
        eps = rng.standard_normal(d)
        out = evaluate(estimator, mixture, schedule, theta, eps, t)
        w = 1.0 if config.w_of_t == "constant" else schedule.sigma(t) ** 2
        grad = w * out.value
        if config.optimizer == "adam":
            adam_m = _ADAM_BETA1 * adam_m + (1 - _ADAM_BETA1) * grad
            adam_v = _ADAM_BETA2 * adam_v + (1 - _ADAM_BETA2) * grad * grad
            m_hat = adam_m / (1 - _ADAM_BETA1 ** (k + 1))
            v_hat = adam_v / (1 - _ADAM_BETA2 ** (k + 1))
            step = m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
        else:
            step = grad

        diag["t"][k] = t
        branch = out.branch or estimator.kind
        if estimator.kind == "ssd" and out.degenerate:
            branch = "degenerate"
        diag["branch"].append(branch)
        diag["est_norm"][k] = np.linalg.norm(out.value)
        r = out.parts.get("r_scalar")
        if r is not None:
            diag["r"][k] = float(r)
        diag["logp_uncond"][k] = log_density(mixture, theta)
        diag["logp_cond"][k] = log_density(cond, theta)

        theta = theta - config.learning_rate * step
        points[k + 1] = theta
        if not np.all(np.isfinite(theta)):
            partial = Trajectory(
                points=points[: k + 2].copy(),
                diagnostics={key: (val[: k + 1] if key != "branch" else val)
                             for key, val in diag.items()},
                config_hash=fingerprint,
            )
            raise DivergenceError(f"divergence at step {k}", partial)

    return Trajectory(points=points, diagnostics=diag, config_hash=fingerprint)


def run_trap_escape(
    mixture: GaussianMixture,
    schedule: DiffusionSchedule,
    config: OptimizerConfig,
) -> Trajectory:
    """Run the mode-disengaging estimator from a trapping-point initialization.

    The caller sets ``config.init_theta`` to the trapping point; the estimator
    kind is forced to mode_disengaging.
    """
    return run_trajectory(mixture, schedule, EstimatorSpec(kind="mode_disengaging"), config)


def with_seed(config: OptimizerConfig, seed: int) -> OptimizerConfig:
    return replace(config, seed=seed)
