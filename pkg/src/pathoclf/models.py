"""Classifier family registry: configs, fit functions and default grids."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any, Callable

from . import ffn, gbt, svm
from .core import ConfigError


@dataclass(frozen=True)
class Family:
    name: str
    label: str
    config_cls: type
    fit: Callable
    default_grid: dict[str, list[Any]]

    def make_config(self, params: dict[str, Any]):
        fields = {f.name for f in dataclasses.fields(self.config_cls)}
        unknown = set(params) - fields
        if unknown:
            raise ConfigError(f"unknown {self.label} hyperparameters: {sorted(unknown)}")
        return self.config_cls(**params)


FAMILIES = {
    "svm": Family(
        "svm", "SVM", svm.RbfSvmConfig, svm.fit,
        {"gamma": [1e-5, 1e-4, 1e-3, 1e-2, 1e-1], "c": [5.0, 10.0, 20.0, 50.0]},
    ),
    "xgb": Family(
        "xgb", "XGB", gbt.GbtConfig, gbt.fit,
        {"max_depth": [2, 4, 8, 16], "eta": [0.1, 0.2, 0.3, 0.4, 0.5], "min_child_weight": [1.0, 2.0, 4.0, 8.0]},
    ),
    "ffn": Family(
        "ffn", "FFN", ffn.FfnConfig, ffn.fit,
        {
            "lr": [1e-1, 1e-2, 1e-3, 1e-4],
            "activation": ["tanh", "relu"],
            "hidden_layers": [2, 3],
            "hidden_units": [32, 64, 128, 256],
        },
    ),
}
ALIASES = {"gbt": "xgb", "SVM": "svm", "XGB": "xgb", "FFN": "ffn", "GBT": "xgb"}


def get_family(name: str) -> Family:
    name = ALIASES.get(name, name)
    try:
        return FAMILIES[name]
    except KeyError:
        raise ConfigError(f"unknown model family {name!r}; choose from {sorted(FAMILIES)}") from None


def family_of(model) -> Family:
    return get_family({"svm": "svm", "gbt": "xgb", "ffn": "ffn"}[model.family])
