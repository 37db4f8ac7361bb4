"""Experiment configuration: parsing, validation and model construction.

Configs are JSON objects.  Example::

    {
      "model": {"name": "log_inventory", "q": 0.5,
                "distribution": {"kind": "fgm", "alpha": 1.0}},
      "theta": 1.0,
      "estimators": ["fd", "leibniz_integral", "leibniz_divergence"],
      "n_reps": 10000,
      "seed": 7
    }
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, fields
from typing import Optional

from . import distributions as dist
from . import models
from .estimators import ESTIMATORS, EstimatorConfig

SEED_ENV = "LEIBNIZ_SEED"
MODEL_NAMES = ("log_inventory", "max_threshold", "san", "american_option", "gg1")
INDICATOR_MODELS = ("log_inventory", "max_threshold", "san")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    model: dict
    theta: float
    estimators: list
    n_reps: int = 10_000
    surface_reps: Optional[int] = None
    fd_delta: float = 0.02
    seed: int = 0
    crn: bool = True
    output_path: Optional[str] = None
    format: str = "csv"
    oracle: bool = False
    timing: bool = False
    workers: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown key")
        for key in ("model", "theta", "estimators"):
            if key not in raw:
                raise ConfigError(key, "missing required key")
        cfg = cls(**copy.deepcopy(raw))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        if not isinstance(self.model, dict) or "name" not in self.model:
            raise ConfigError("model", "must be an object with a 'name'")
        name = self.model["name"]
        if name not in MODEL_NAMES:
            raise ConfigError("model.name", f"unknown model {name!r}")
        if not isinstance(self.theta, (int, float)) or isinstance(self.theta, bool):
            raise ConfigError("theta", "must be a number")
        if not isinstance(self.estimators, list) or not self.estimators:
            raise ConfigError("estimators", "must be a non-empty list")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ConfigError("estimators", f"unknown estimator {e!r}")
            if e == "ipa_lr" and name in INDICATOR_MODELS:
                raise ConfigError("estimators", f"ipa_lr needs a smooth performance; {name} is an indicator")
            if e == "conditional_leibniz" and name != "american_option":
                raise ConfigError("estimators", "conditional_leibniz applies to american_option only")
            if e == "dpa" and name != "gg1":
                raise ConfigError("estimators", "dpa applies to gg1 only")
            if e in ("leibniz_divergence", "leibniz_integral") and name not in INDICATOR_MODELS:
                raise ConfigError("estimators", f"{e} needs an indicator model")
        for key in ("n_reps", "workers"):
            val = getattr(self, key)
            if not isinstance(val, int) or isinstance(val, bool) or val < (2 if key == "n_reps" else 1):
                raise ConfigError(key, "must be a positive integer" + (" >= 2" if key == "n_reps" else ""))
        if self.surface_reps is not None and (not isinstance(self.surface_reps, int)
                                              or self.surface_reps < 2):
            raise ConfigError("surface_reps", "must be an integer >= 2 or null")
        if not isinstance(self.fd_delta, (int, float)) or not self.fd_delta > 0:
            raise ConfigError("fd_delta", "must be positive")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if self.format not in ("csv", "json"):
            raise ConfigError("format", "must be 'csv' or 'json'")
        for key in ("crn", "oracle", "timing"):
            if not isinstance(getattr(self, key), bool):
                raise ConfigError(key, "must be true or false")
        try:
            build_model(self.model, self.theta)
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError("model", str(exc)) from exc

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(fd_delta=float(self.fd_delta), n_reps=self.n_reps,
                               surface_reps=self.surface_reps, seed=self.seed, crn=self.crn,
                               workers=self.workers)


def load_config(path: str, overrides: Optional[dict] = None) -> RunConfig:
    """Read a JSON config; flag overrides apply first, then ``LEIBNIZ_SEED``."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    env = os.environ.get(SEED_ENV)
    if env is not None and (overrides or {}).get("seed") is None:
        try:
            raw["seed"] = int(env)
        except ValueError as exc:
            raise ConfigError(SEED_ENV, "must be an integer") from exc
    return RunConfig.from_dict(raw)


def build_model(settings: dict, theta: Optional[float] = None):
    """Construct a model from the ``model`` section of a config."""
    name = settings["name"]
    if name == "log_inventory":
        return models.model_log_inventory(_density(settings), float(settings.get("q", 0.5)))
    if name == "max_threshold":
        d = settings.get("distribution", {"kind": "uniform"})
        if d == "beta_product" or (isinstance(d, dict) and d.get("kind") == "beta_product"):
            density = models.beta_product()
        elif d == "uniform" or (isinstance(d, dict) and d.get("kind") == "uniform"):
            density = models.uniform_square()
        else:
            density = models.make_density(d)
        return models.model_max_threshold(density)
    if name == "san":
        edges = settings.get("edges", "bridge")
        if edges == "bridge":
            laws = [dist.Exponential(float(settings.get("rate", 1.0)))] * 5
            paths = settings.get("paths", models.BRIDGE_PATHS)
            active = settings.get("active", models.BRIDGE_ACTIVE)
        else:
            laws = [models.make_marginal(e) for e in edges]
            paths = settings["paths"]
            active = settings.get("active")
        transform = settings.get("transform", "scale")
        return models.model_san_density(laws, paths, transform=transform,
                                        active=active if transform == "paths" else None)
    if name == "american_option":
        keys = ("S0", "K", "r", "sigma", "dividends", "dates", "thresholds", "k")
        kw = {k: (tuple(settings[k]) if isinstance(settings[k], list) else settings[k])
              for k in keys if k in settings}
        return models.model_american_option(models.AmericanOptionModel(**kw))
    if name == "gg1":
        preset = settings.get("preset")
        if preset == "two_customer":
            return models.gg1_two_customer_benchmark()
        if preset == "five_customer":
            return models.gg1_five_customer_benchmark()
        if preset is not None:
            raise ConfigError("model.preset", f"unknown preset {preset!r}")
        gap = settings.get("interarrival", {"kind": "exponential", "rate": 1.0})
        if gap.get("kind") == "exponential":
            inter = models.exponential_interarrival(float(gap.get("rate", 1.0)))
        elif gap.get("kind") == "deterministic":
            inter = models.deterministic_interarrival(float(gap["value"]))
        else:
            raise ConfigError("model.interarrival", f"unknown kind {gap.get('kind')!r}")
        return models.model_gg1(models.GG1Model(
            int(settings.get("n_customers", 5)),
            models.constant_service(float(settings.get("service_plus", 1.0))),
            models.constant_service(float(settings.get("service_minus", 0.5))),
            inter, statistic=settings.get("statistic", "mean_wait")))
    raise ConfigError("model.name", f"unknown model {name!r}")


def _density(settings):
    d = settings.get("distribution", {"kind": "independent", "marginal": "exponential"})
    if not isinstance(d, dict):
        raise ConfigError("model.distribution", "must be an object")
    return models.make_density(d)


def distribution_id(settings: dict) -> str:
    d = settings.get("distribution")
    if d is None:
        return settings.get("preset", settings.get("edges", "default")) if settings["name"] in ("gg1", "san") \
            else ("gbm" if settings["name"] == "american_option" else "default")
    if isinstance(d, str):
        return d
    parts = [d.get("kind", "")]
    parts += [f"{k}={d[k]}" for k in sorted(d) if k != "kind"]
    return ";".join(str(p) for p in parts)


TABLE1_DISTRIBUTIONS = {name: settings for name, settings in models.TABLE1_CONFIGS}


def table1_config(name: str, seed: int = 0, n_reps: int = 10_000) -> RunConfig:
    return RunConfig(
        model={"name": "log_inventory", "q": 0.5, "distribution": dict(TABLE1_DISTRIBUTIONS[name])},
        theta=1.0, estimators=["fd", "leibniz_integral", "leibniz_divergence"],
        n_reps=n_reps, seed=seed)


def dumps(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


__all__ = ["ConfigError", "RunConfig", "load_config", "build_model", "table1_config",
           "distribution_id", "dumps", "SEED_ENV"]
