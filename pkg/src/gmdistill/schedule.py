"""Forward-process noise schedules over discrete timesteps 0..T.

Both supported families are variance preserving (alpha_t^2 + sigma_t^2 = 1)
with endpoints clamped to (alpha, sigma) = (1, 0) at t = 0 and (0, 1) at
t = T, which is what the rest of the library assumes.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DiffusionSchedule",
    "NoisySample",
    "make_schedule",
    "forward_noise",
]

SCHEDULE_FAMILIES = ("cosine", "linear_beta")

_COSINE_OFFSET = 0.008  # shifts t=0 away from the cosine's flat spot


@dataclass(frozen=True)
class DiffusionSchedule:
    """Tables of (alpha_t, sigma_t) for integer timesteps t in [0, T].

    Attributes:
        kind: Schedule family tag ("cosine" or "linear_beta").
        T: Horizon; arrays hold T + 1 entries.
        alphas: Signal coefficients, non-increasing, alphas[0] = 1, alphas[T] = 0.
        sigmas: Noise coefficients, non-decreasing, sigmas[0] = 0, sigmas[T] = 1.
    """

    kind: str
    T: int
    alphas: np.ndarray
    sigmas: np.ndarray
    key: str = field(init=False)

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float)
        sigmas = np.asarray(self.sigmas, dtype=float)
        if alphas.shape != (self.T + 1,) or sigmas.shape != (self.T + 1,):
            raise ValueError(f"schedule tables must have length T+1 = {self.T + 1}")
        if alphas[0] != 1.0 or sigmas[0] != 0.0 or alphas[-1] != 0.0 or sigmas[-1] != 1.0:
            raise ValueError("schedule endpoints must be (1, 0) at t=0 and (0, 1) at t=T")
        if np.any(np.diff(alphas) > 0) or np.any(np.diff(sigmas) < 0):
            raise ValueError("alpha must be non-increasing and sigma non-decreasing")
        vp = alphas**2 + sigmas**2
        if np.max(np.abs(vp - 1.0)) > 1e-9:
            raise ValueError("schedule is not variance preserving within 1e-9")
        alphas.setflags(write=False)
        sigmas.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "sigmas", sigmas)
        digest = hashlib.sha256()
        digest.update(self.kind.encode())
        digest.update(alphas.tobytes())
        digest.update(sigmas.tobytes())
        object.__setattr__(self, "key", digest.hexdigest()[:16])

    def _check_t(self, t: int) -> int:
        t = int(t)
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} out of range [0, {self.T}]")
        return t

    def alpha(self, t: int) -> float:
        return float(self.alphas[self._check_t(t)])

    def sigma(self, t: int) -> float:
        return float(self.sigmas[self._check_t(t)])

    def write_csv(self, path) -> None:
        """Dump the (t, alpha, sigma) table for plotting."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "alpha", "sigma"])
            for t in range(self.T + 1):
                writer.writerow([t, repr(float(self.alphas[t])), repr(float(self.sigmas[t]))])


@dataclass(frozen=True)
class NoisySample:
    """A forward-process draw: xt = alpha_t * x0 + sigma_t * epsilon."""

    x0: np.ndarray
    epsilon: np.ndarray
    t: int
    xt: np.ndarray


def make_schedule(kind: str, T: int) -> DiffusionSchedule:
    """Build a variance-preserving schedule of the requested family.

    Args:
        kind: "cosine" (squared-cosine signal decay with a small offset) or
            "linear_beta" (DDPM-style linear betas in [1e-4, 0.02]).
        T: Horizon, at least 2.

    Returns:
        A DiffusionSchedule with clamped endpoints.
    """
    if T < 2:
        raise ValueError("T must be >= 2")
    if kind == "cosine":
        t = np.arange(T + 1, dtype=float)
        f = np.cos(((t / T) + _COSINE_OFFSET) / (1 + _COSINE_OFFSET) * np.pi / 2) ** 2
        alpha_bar = f / f[0]
    elif kind == "linear_beta":
        betas = np.linspace(1e-4, 0.02, T)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    else:
        raise ValueError(f"unknown schedule family {kind!r}; expected one of {SCHEDULE_FAMILIES}")
    alpha_bar = np.clip(alpha_bar, 0.0, 1.0)
    alphas = np.sqrt(alpha_bar)
    sigmas = np.sqrt(1.0 - alpha_bar)
    alphas[0], sigmas[0] = 1.0, 0.0
    alphas[T], sigmas[T] = 0.0, 1.0
    return DiffusionSchedule(kind=kind, T=T, alphas=alphas, sigmas=sigmas)


def forward_noise(schedule: DiffusionSchedule, x0: np.ndarray, epsilon: np.ndarray, t: int) -> NoisySample:
    """Noise a clean point: xt = alpha_t * x0 + sigma_t * epsilon.

    Args:
        schedule: Forward-process coefficients.
        x0: Clean point, shape (..., d).
        epsilon: Standard-normal draw, broadcastable against x0.
        t: Integer timestep in [0, T].
    """
    x0 = np.asarray(x0, dtype=float)
    epsilon = np.asarray(epsilon, dtype=float)
    if x0.shape[-1] != epsilon.shape[-1]:
        raise ValueError("x0 and epsilon dimensions do not match")
    a = schedule.alpha(t)
    s = schedule.sigma(t)
    return NoisySample(x0=x0, epsilon=epsilon, t=int(t), xt=a * x0 + s * epsilon)
