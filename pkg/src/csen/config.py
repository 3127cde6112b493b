"""Experiment configuration and its flat key-value file format.

A config file is a flat YAML mapping whose keys are :class:`ExperimentConfig`
field names, e.g.::

    method: csen1
    atoms_per_class: 25
    csen_epochs: 15

Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Optional, Tuple

import yaml

from .errors import ConfigError, ParameterError

# Reference training settings for the network methods.
TRAINING_DEFAULTS = {
    "pca_cr": 0.5,
    "atoms_per_class": 625,
    "lam": 2e-12,
    "csen_lr": 1e-3,
    "csen_epochs": 15,
    "mlp_lr": 1e-4,
    "mlp_epochs": 50,
    "k_folds": 5,
}


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "csen1"
    pca_cr: float = 0.5
    atoms_per_class: int = 625
    lam: float = 2e-12
    proxy_mode: str = "ridge"
    plane_scaling: bool = False
    k_folds: int = 5
    seed: int = 0
    jitter_sigma: float = 0.05
    # network training
    csen_lr: float = 1e-3
    csen_epochs: int = 15
    mlp_lr: float = 1e-4
    mlp_epochs: int = 50
    mlp_hidden: Tuple[int, ...] = (512, 256, 128, 64)
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    # representation classifiers
    crc_normalized_residual: bool = True
    src_normalized_residual: bool = False
    src_lambda: Optional[float] = None
    src_lambda_factor: float = 0.3
    src_max_iter: int = 1000
    src_tol: float = 1e-8
    knn_k: int = 5
    knn_metric: str = "euclidean"
    tau: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "mlp_hidden", tuple(int(h) for h in self.mlp_hidden))
        if not 0 < self.pca_cr <= 1:
            raise ParameterError(f"pca_cr must be in (0, 1], got {self.pca_cr}")
        if self.atoms_per_class < 1:
            raise ParameterError("atoms_per_class must be >= 1")
        if not self.lam > 0:
            raise ParameterError(f"lam must be positive, got {self.lam}")
        if self.proxy_mode not in ("ridge", "correlation"):
            raise ParameterError(f"unknown proxy_mode {self.proxy_mode!r}")
        if self.k_folds < 2:
            raise ParameterError("k_folds must be >= 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_hidden"] = list(self.mlp_hidden)
        return d

    def method_settings(self) -> dict:
        keys = ("proxy_mode", "plane_scaling", "crc_normalized_residual",
                "src_normalized_residual", "src_lambda", "src_lambda_factor",
                "src_max_iter", "src_tol", "knn_k", "knn_metric", "tau")
        return {k: getattr(self, k) for k in keys}

    def train_config(self, method: str, seed: int):
        from .network import TrainConfig

        if method == "mlp":
            lr, epochs = self.mlp_lr, self.mlp_epochs
        else:
            lr, epochs = self.csen_lr, self.csen_epochs
        return TrainConfig(learning_rate=lr, beta1=self.beta1, beta2=self.beta2,
                           epsilon=self.adam_epsilon, epochs=epochs,
                           batch_size=self.batch_size, seed=seed)

    def updated(self, **changes) -> "ExperimentConfig":
        unknown = set(changes) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **changes)


def load_config(path, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a flat key-value mapping")
    for key, value in raw.items():
        if isinstance(value, dict):
            raise ConfigError(f"{path}: key {key!r} is nested; the format is flat")
    try:
        return (base or ExperimentConfig()).updated(**raw)
    except (TypeError, ParameterError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
