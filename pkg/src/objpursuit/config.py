"""Run configuration: flat dotted-key JSON with strict validation.

Missing keys take the documented defaults; unknown keys and type errors are
rejected with a message naming the key.  CLI flags override file values.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .errors import ConfigError
from .objectives import QualityConfig
from .pursuit import OptimConfig, StepBudgets

# key -> (default, type)
SCHEMA = {
    "seeds.library": (7, int),
    "seeds.data": (1234, int),
    "seeds.order": (0, int),
    "counts.pretrain_objects": (8, int),
    "counts.pursuit_objects": (16, int),
    "counts.unseen_objects": (6, int),
    "counts.near_duplicates": (3, int),
    "counts.samples_per_object": (200, int),
    "quality.tau": (0.6, float),
    "quality.alpha_express": (0.2, float),
    "quality.alpha_base": (0.1, float),
    "quality.beta": (0.04, float),
    "quality.bce_weight_cap": (20.0, float),
    "quality.margin": (0.06, float),
    "optim.lr": (1e-3, float),
    "optim.beta1": (0.9, float),
    "optim.beta2": (0.999, float),
    "optim.eps": (1e-8, float),
    "steps.express": (200, int),
    "steps.base": (1000, int),
    "steps.pretrain": (3000, int),
    "steps.fewshot": (200, int),
    "steps.batch": (16, int),
    "out.dir": ("runs/default", str),
}


@dataclasses.dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def quality(self) -> QualityConfig:
        return QualityConfig(tau=self["quality.tau"],
                             alpha_express=self["quality.alpha_express"],
                             alpha_base=self["quality.alpha_base"],
                             beta=self["quality.beta"],
                             bce_weight_cap=self["quality.bce_weight_cap"],
                             margin=self["quality.margin"])

    def budgets(self) -> StepBudgets:
        return StepBudgets(express=self["steps.express"], base=self["steps.base"],
                           pretrain=self["steps.pretrain"],
                           fewshot=self["steps.fewshot"], batch=self["steps.batch"])

    def optim(self) -> OptimConfig:
        return OptimConfig(lr=self["optim.lr"], beta1=self["optim.beta1"],
                           beta2=self["optim.beta2"], eps=self["optim.eps"])

    def to_json(self):
        return dict(self.values)


def _coerce(key, value):
    default, typ = SCHEMA[key]
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, typ) or isinstance(value, bool) and typ is not bool:
        raise ConfigError(f"config key {key!r}: expected {typ.__name__}, "
                          f"got {type(value).__name__}")
    return value


def _validate(values):
    tau = values["quality.tau"]
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"config key 'quality.tau': must lie in (0,1), got {tau}")
    for key in ("quality.alpha_express", "quality.alpha_base", "quality.beta"):
        if values[key] < 0:
            raise ConfigError(f"config key {key!r}: must be >= 0, got {values[key]}")
    if values["optim.lr"] <= 0:
        raise ConfigError(f"config key 'optim.lr': must be > 0, got {values['optim.lr']}")
    for key in ("counts.samples_per_object",):
        if values[key] < 5:
            raise ConfigError(f"config key {key!r}: must be >= 5, got {values[key]}")
    if values["counts.near_duplicates"] > values["counts.unseen_objects"]:
        raise ConfigError("config key 'counts.near_duplicates': exceeds unseen count")


def make_config(overrides=None) -> RunConfig:
    values = {k: d for k, (d, _) in SCHEMA.items()}
    for key, value in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, value)
    _validate(values)
    return RunConfig(values)


def parse_config(path) -> RunConfig:
    path = Path(path)
    text = path.read_text().strip()
    if not text:
        return make_config()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return make_config(raw)
