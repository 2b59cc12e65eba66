"""Difficulty models and the probability-to-budget interpolation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gbdt import GBDT, GBDTParams

MIN_TRAIN = 50


@dataclass
class AdaptiveParams:
    nprob_min: int = 1
    nprob_max: int = 1
    p0: float = 0.1
    p1: float = 0.2
    reorder_min: int = 10
    reorder_max: int = 10
    p0_reorder: float = 0.1
    p1_reorder: float = 0.2
    theta: float = 0.2

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 1 <= self.nprob_min <= self.nprob_max:
            raise ValueError(f"need 1 <= nprob_min <= nprob_max, got {self.nprob_min}, {self.nprob_max}")
        if not 1 <= self.reorder_min <= self.reorder_max:
            raise ValueError(f"need 1 <= reorder_min <= reorder_max, got {self.reorder_min}, {self.reorder_max}")
        for name in ("p0", "p1", "p0_reorder", "p1_reorder"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        check_theta(self.theta)


def check_theta(theta: float) -> float:
    # theta = 1 would prune every cluster, which can never return anything useful
    if not 0.0 <= theta < 1.0:
        raise ValueError(f"prune threshold must be in [0, 1), got {theta}")
    return float(theta)


def _interpolate(p: float, lo: int, hi: int, p0: float, p1: float) -> int:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    raw = lo + (hi - lo) * max(0.0, p - p0) * (p + p1)
    return int(min(hi, math.floor(raw + 0.5)))


def interpolate_nprob(p: float, params: AdaptiveParams) -> int:
    """``min(max, round(min + (max - min) * relu(p - p0) * (p + p1)))``, halves rounded up."""
    return _interpolate(p, params.nprob_min, params.nprob_max, params.p0, params.p1)


def interpolate_reorder(p: float, params: AdaptiveParams) -> int:
    return _interpolate(p, params.reorder_min, params.reorder_max, params.p0_reorder, params.p1_reorder)


@dataclass
class ProbModel:
    """Binary probability model over a named feature schema."""

    schema: str
    n_features: int
    gbdt: GBDT
    seed: int = 0

    @property
    def constant(self) -> bool:
        return self.gbdt.constant is not None

    def predict(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise ValueError(f"{self.schema} model expects {self.n_features} features, got {x.shape[1]}")
        return self.gbdt.predict_proba(x)


def train_prob_model(features, labels, hyper: GBDTParams | None = None, seed: int = 0, schema: str = "generic",
                     positive_weight: float | None = None) -> ProbModel:
    """Fit a GBDT.

    ``positive_weight`` reweights rows so that the positive class carries that
    multiple of the negative class's total weight (1.0 balances them).
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels).ravel()
    if x.ndim != 2 or x.shape[0] != y.size:
        raise ValueError("need one feature row per label")
    if y.size < MIN_TRAIN:
        raise ValueError(f"need at least {MIN_TRAIN} training rows, got {y.size}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    w = None
    n_pos = int(y.sum())
    if positive_weight is not None and 0 < n_pos < y.size:
        if positive_weight <= 0:
            raise ValueError("positive_weight must be positive")
        w = np.where(y == 1, positive_weight * (y.size - n_pos) / n_pos, 1.0)
    g = GBDT(hyper or GBDTParams(), seed=seed).fit(x, y, w)
    return ProbModel(schema, x.shape[1], g, seed)


def predict_keep(features, model: ProbModel, theta: float) -> np.ndarray:
    """Keep a cluster iff its predicted probability of holding a true neighbour exceeds ``theta``."""
    check_theta(theta)
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != model.n_features:
        raise ValueError(f"{model.schema} model expects {model.n_features} features, got {x.shape[1]}")
    if theta == 0.0:
        return np.ones(x.shape[0], dtype=bool)
    return model.predict(x) > theta


@dataclass
class AdaptiveModels:
    params: AdaptiveParams = field(default_factory=AdaptiveParams)
    t: int = 16
    nprob: ProbModel | None = None
    reorder: ProbModel | None = None
    prune: ProbModel | None = None
