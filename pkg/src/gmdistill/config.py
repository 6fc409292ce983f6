"""Experiment configuration: JSON schema, validation, and round-tripping.

One config file describes one reproducible experiment set: the mixture, the
schedule, estimator/optimizer defaults, a seed list, and a list of experiment
units (trajectory | trap_escape | sweep | density_map | modes | loss_probe).
Validation accumulates every violation with a field path rather than stopping
at the first problem.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .estimators import ESTIMATOR_KINDS, VARIANCE_REDUCTIONS, EstimatorSpec
from .gmm import GaussianComponent, GaussianMixture
from .schedule import SCHEDULE_FAMILIES, DiffusionSchedule, make_schedule
from .simulate import OPTIMIZER_KINDS, W_OF_T_KINDS, OptimizerConfig

__all__ = ["ConfigError", "ExperimentUnit", "ExperimentConfig", "parse_config",
           "load_config", "validate_config_dict", "validate_config_file"]

EXPERIMENT_KINDS = ("trajectory", "trap_escape", "sweep", "density_map", "modes", "loss_probe")

_ESTIMATOR_DEFAULTS = {"kind": "ssd", "omega": 100.0, "M": 200, "variance_reduction": "none"}
_OPTIMIZER_DEFAULTS = {
    "steps": 3000,
    "learning_rate": 0.01,
    "t_range_initial": [20, 980],
    "t_range_final": [20, 500],
    "anneal_after": 1000,
    "w_of_t": "constant",
    "init_theta": [0.0, 0.0],
    "optimizer": "sgd",
}


class ConfigError(ValueError):
    """Invalid experiment config; ``violations`` lists field-level messages."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class ExperimentUnit:
    kind: str
    label: str
    estimator: dict
    optimizer: dict
    params: dict = field(default_factory=dict)

    def estimator_spec(self) -> EstimatorSpec:
        return EstimatorSpec(**self.estimator)

    def optimizer_config(self, seed: int) -> OptimizerConfig:
        kwargs = dict(self.optimizer)
        kwargs["t_range_initial"] = tuple(kwargs["t_range_initial"])
        kwargs["t_range_final"] = tuple(kwargs["t_range_final"])
        kwargs["init_theta"] = tuple(kwargs["init_theta"])
        return OptimizerConfig(seed=seed, **kwargs)


@dataclass
class ExperimentConfig:
    name: str
    mixture: GaussianMixture
    schedule: DiffusionSchedule
    estimator_defaults: dict
    optimizer_defaults: dict
    experiments: list[ExperimentUnit]
    seeds: list[int]
    output_dir: str | None
    raw: dict

    def to_dict(self) -> dict:
        """Normalized dict form; parse(to_dict(...)) is the identity."""
        return json.loads(json.dumps(self.raw))


def _coerce_covariance(value, d):
    if np.isscalar(value):
        return float(value) * np.eye(d)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != d:
            raise ValueError("diagonal covariance length must equal the mean dimension")
        return np.diag(arr)
    return arr


def _check_mixture(raw, errors) -> GaussianMixture | None:
    comps_raw = raw.get("components")
    if not isinstance(comps_raw, list) or not comps_raw:
        errors.append("mixture.components: must be a non-empty list")
        return None
    components = []
    mask = []
    dim = None
    total = 0.0
    for i, spec in enumerate(comps_raw):
        path = f"mixture.components[{i}]"
        try:
            mean = np.asarray(spec["mean"], dtype=float)
            if dim is None:
                dim = mean.shape[0]
            elif mean.shape[0] != dim:
                errors.append(f"{path}.mean: dimension {mean.shape[0]} != {dim}")
                continue
            cov = _coerce_covariance(spec["covariance"], mean.shape[0])
            weight = float(spec["weight"])
            total += weight
            components.append(GaussianComponent(weight=weight, mean=mean, covariance=cov))
            mask.append(bool(spec.get("conditional", False)))
        except KeyError as exc:
            errors.append(f"{path}: missing field {exc}")
        except (ValueError, TypeError) as exc:
            errors.append(f"{path}: {exc}")
    if errors:
        return None
    if abs(total - 1.0) > 1e-12:
        errors.append(f"mixture.components: weights must sum to 1 (got {total!r})")
    if not any(mask):
        errors.append("mixture.components: at least one component must be conditional")
    if errors:
        return None
    try:
        return GaussianMixture(components, np.array(mask))
    except ValueError as exc:
        errors.append(f"mixture: {exc}")
        return None


def _check_estimator(raw, errors, T, path="estimator"):
    merged = {**_ESTIMATOR_DEFAULTS, **(raw or {})}
    if merged["kind"] not in ESTIMATOR_KINDS:
        errors.append(f"{path}.kind: unknown kind {merged['kind']!r}")
    if not float(merged["omega"]) >= 0:
        errors.append(f"{path}.omega: must be >= 0")
    if not 0 <= int(merged["M"]) <= T:
        errors.append(f"{path}.M: threshold exceeds horizon" if int(merged["M"]) > T
                      else f"{path}.M: must be >= 0")
    if merged["variance_reduction"] not in VARIANCE_REDUCTIONS:
        errors.append(f"{path}.variance_reduction: unknown value {merged['variance_reduction']!r}")
    merged["omega"] = float(merged["omega"])
    merged["M"] = int(merged["M"])
    return merged


def _check_optimizer(raw, errors, T, dim, path="optimizer"):
    merged = {**_OPTIMIZER_DEFAULTS, **(raw or {})}
    if not int(merged["steps"]) >= 1:
        errors.append(f"{path}.steps: must be >= 1")
    if not float(merged["learning_rate"]) > 0:
        errors.append(f"{path}.learning_rate: must be > 0")
    for name in ("t_range_initial", "t_range_final"):
        rng = merged[name]
        if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
            errors.append(f"{path}.{name}: must be [lo, hi]")
            continue
        lo, hi = int(rng[0]), int(rng[1])
        if not (1 <= lo <= hi <= T - 1):
            errors.append(f"{path}.{name}: must satisfy 1 <= lo <= hi <= T-1 = {T - 1}")
        merged[name] = [lo, hi]
    if not 0 <= int(merged["anneal_after"]) <= int(merged["steps"]):
        errors.append(f"{path}.anneal_after: must lie in [0, steps]")
    if merged["w_of_t"] not in W_OF_T_KINDS:
        errors.append(f"{path}.w_of_t: unknown value {merged['w_of_t']!r}")
    if merged["optimizer"] not in OPTIMIZER_KINDS:
        errors.append(f"{path}.optimizer: unknown value {merged['optimizer']!r}")
    init = merged["init_theta"]
    if dim is not None and len(init) != dim:
        errors.append(f"{path}.init_theta: dimension {len(init)} != mixture dimension {dim}")
    merged["steps"] = int(merged["steps"])
    merged["learning_rate"] = float(merged["learning_rate"])
    merged["anneal_after"] = int(merged["anneal_after"])
    merged["init_theta"] = [float(v) for v in init]
    return merged


def _check_region(value, errors, path):
    ok = (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(ax, (list, tuple)) and len(ax) == 2 for ax in value)
        and all(float(ax[0]) < float(ax[1]) for ax in value)
    )
    if not ok:
        errors.append(f"{path}: must be [[xlo, xhi], [ylo, yhi]] with lo < hi")
    return value


def _check_unit(raw, errors, T, dim, defaults_est, defaults_opt, index):
    path = f"experiments[{index}]"
    kind = raw.get("kind")
    label = raw.get("label") or kind
    if kind not in EXPERIMENT_KINDS:
        errors.append(f"{path}.kind: unknown experiment kind {kind!r}")
        return None
    est = _check_estimator({**defaults_est, **raw.get("estimator", {})}, errors, T,
                           path=f"{path}.estimator")
    opt = _check_optimizer({**defaults_opt, **raw.get("optimizer", {})}, errors, T, dim,
                           path=f"{path}.optimizer")
    params = {}
    if kind == "trap_escape":
        est = dict(est, kind="mode_disengaging")
    if kind == "sweep":
        ts = raw.get("timesteps")
        if not (isinstance(ts, list) and ts and all(1 <= int(t) <= T for t in ts)):
            errors.append(f"{path}.timesteps: must be a non-empty list within [1, T]")
        else:
            params["timesteps"] = [int(t) for t in ts]
        n = int(raw.get("n_samples", 8192))
        if n < 2:
            errors.append(f"{path}.n_samples: must be >= 2")
        params["n_samples"] = n
        probe = raw.get("probe_x0")
        if probe is None or (dim is not None and len(probe) != dim):
            errors.append(f"{path}.probe_x0: required, with mixture dimension")
        else:
            params["probe_x0"] = [float(v) for v in probe]
    elif kind in ("density_map", "modes"):
        t = raw.get("t")
        if t is None or not 0 <= int(t) <= T:
            errors.append(f"{path}.t: required, within [0, T]")
        else:
            params["t"] = int(t)
        params["region"] = _check_region(raw.get("region"), errors, f"{path}.region")
        res = raw.get("resolution")
        res_list = res if isinstance(res, (list, tuple)) else [res, res]
        if res is None or not all(isinstance(v, int) and v > 0 for v in res_list):
            errors.append(f"{path}.resolution: must be a positive int or pair")
        else:
            params["resolution"] = list(res_list)
        if dim is not None and dim != 2:
            errors.append(f"{path}: {kind} requires a 2-D mixture")
        if kind == "density_map":
            params["overlay"] = list(raw.get("overlay", []))
    elif kind == "loss_probe":
        t = raw.get("t")
        if t is None or not 1 <= int(t) <= T - 1:
            errors.append(f"{path}.t: required, within [1, T-1]")
        else:
            params["t"] = int(t)
        pts = raw.get("points")
        if not (isinstance(pts, list) and pts and
                all(dim is None or len(p) == dim for p in pts)):
            errors.append(f"{path}.points: must be a non-empty list of points")
        else:
            params["points"] = [[float(v) for v in p] for p in pts]
        n = int(raw.get("n_samples", 4096))
        if n < 2:
            errors.append(f"{path}.n_samples: must be >= 2")
        params["n_samples"] = n
    return ExperimentUnit(kind=kind, label=label, estimator=est, optimizer=opt, params=params)


def validate_config_dict(raw: dict) -> tuple[ExperimentConfig | None, list[str]]:
    """Validate a config dict; returns (config or None, all violations)."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        return None, ["config: top level must be an object"]
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        errors.append("name: required non-empty string")
        name = "unnamed"

    sched_raw = raw.get("schedule") or {}
    family = sched_raw.get("family", "cosine")
    T = sched_raw.get("T", 1000)
    schedule = None
    if family not in SCHEDULE_FAMILIES:
        errors.append(f"schedule.family: unknown family {family!r}")
    elif not (isinstance(T, int) and T >= 2):
        errors.append("schedule.T: must be an integer >= 2")
    else:
        schedule = make_schedule(family, T)
        T = schedule.T

    mixture = None
    if "mixture" not in raw:
        errors.append("mixture: required")
    else:
        mixture = _check_mixture(raw["mixture"], errors)
    dim = mixture.dim if mixture is not None else None

    T_for_checks = T if isinstance(T, int) else 1000
    defaults_est = _check_estimator(raw.get("estimator"), errors, T_for_checks)
    defaults_opt = _check_optimizer(raw.get("optimizer"), errors, T_for_checks, dim)

    seeds = raw.get("seeds")
    if not (isinstance(seeds, list) and seeds and all(isinstance(s, int) for s in seeds)):
        errors.append("seeds: required non-empty list of integers")
        seeds = []
    elif len(set(seeds)) != len(seeds):
        errors.append("seeds: must be distinct")

    units = []
    exps = raw.get("experiments")
    if not (isinstance(exps, list) and exps):
        errors.append("experiments: required non-empty list")
    else:
        for i, unit_raw in enumerate(exps):
            unit = _check_unit(unit_raw, errors, T_for_checks, dim,
                               defaults_est, defaults_opt, i)
            if unit is not None:
                units.append(unit)
        labels = [u.label for u in units]
        if len(set(labels)) != len(labels):
            errors.append("experiments: labels must be unique")
        known_traj = {u.label for u in units if u.kind in ("trajectory", "trap_escape")}
        for i, u in enumerate(units):
            if u.kind == "density_map":
                for ref in u.params.get("overlay", []):
                    if ref not in known_traj:
                        errors.append(
                            f"experiments[{i}].overlay: {ref!r} is not a trajectory label"
                        )

    output_dir = raw.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        errors.append("output_dir: must be a string or null")

    if errors or mixture is None or schedule is None:
        return None, errors

    normalized = {
        "name": name,
        "mixture": raw["mixture"],
        "schedule": {"family": family, "T": T},
        "estimator": defaults_est,
        "optimizer": defaults_opt,
        "seeds": seeds,
        "output_dir": output_dir,
        "experiments": raw["experiments"],
    }
    config = ExperimentConfig(
        name=name,
        mixture=mixture,
        schedule=schedule,
        estimator_defaults=defaults_est,
        optimizer_defaults=defaults_opt,
        experiments=units,
        seeds=list(seeds),
        output_dir=output_dir,
        raw=json.loads(json.dumps(normalized)),
    )
    return config, []


def parse_config(raw: dict) -> ExperimentConfig:
    config, errors = validate_config_dict(raw)
    if errors:
        raise ConfigError(errors)
    return config


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return parse_config(raw)


def validate_config_file(path) -> list[str]:
    """All violations found in the file; empty list means valid."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return [f"config: unreadable ({exc})"]
    _, errors = validate_config_dict(raw)
    return errors
