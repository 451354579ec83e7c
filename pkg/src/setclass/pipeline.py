"""
Train a set classifier on combined features ``z* = [mean; z]`` and predict
new sets.

Training chooses the PC subspace dimension (unless given), embeds the
training subspaces with CMDS, and fits a base rule on the combined features.
Prediction places a new set's subspace in the same coordinates with the
closed-form out-of-sample map, using the stored training subspaces and the
frozen scale constant.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import classify
from .embedding import EIG_TOL, EmbeddingModel, cmds_extend, cmds_fit
from .exceptions import DimensionError
from .features import distances_to, extract_features, pairwise_distances, scale_constant
from .selection import default_R, permutation_test, select_dimension

FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    classifier: str = "lda"
    gamma: float = classify.GAMMA
    B: int = 1000
    alpha: float = 0.05
    statistic: str = "T"
    tau: float = 0.0
    relative_tau: bool = False
    r: int | None = None
    R: int | None = None
    seed: int = 0
    eig_tol: float = EIG_TOL
    scale_c: float | None = None

    def __post_init__(self):
        if self.classifier not in classify.RULES:
            raise ValueError(f"unknown classifier {self.classifier!r}; expected one of {classify.RULES}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.B < 1:
            raise ValueError(f"B must be at least 1, got {self.B}")
        if self.scale_c is not None and not self.scale_c > 0:
            raise ValueError(f"scale_c must be positive, got {self.scale_c}")


@dataclass
class SetFeatureMap:
    """Everything needed to turn a set into its combined feature vector."""

    p: int
    r_hat: int
    scale_c: float | None
    bases: np.ndarray | None
    embedding: EmbeddingModel | None
    p_value: float | None = None
    statistic_by_r: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return 0 if self.embedding is None else self.embedding.m

    @property
    def layout(self) -> tuple:
        return (self.p, self.m)

    def transform(self, obs, pad: bool = False) -> np.ndarray:
        """Combined feature vector ``[mean; z]`` of a (new) set.

        A set with fewer than ``r_hat + 1`` observations is rejected unless
        ``pad`` is set, in which case the directions it cannot estimate count
        as orthogonal to every training subspace.
        """
        X = obs.observations
        if X.shape[0] != self.p:
            raise DimensionError(f"set {obs.set_id!r} has dimension p={X.shape[0]}, model expects p={self.p}")
        mean = X.mean(axis=1)
        if self.r_hat == 0:
            return mean
        if X.shape[1] - 1 < self.r_hat and not pad:
            raise DimensionError(
                f"set {obs.set_id!r} has n={X.shape[1]} observations; r_hat={self.r_hat} needs at least {self.r_hat + 1}"
            )
        f = extract_features(obs, self.r_hat, pad=True)
        d2 = distances_to(self.bases, f, self.scale_c)
        z = cmds_extend(self.embedding, d2)
        return np.concatenate([mean, z])


def fit_feature_map(collection, config: TrainConfig | None = None):
    """Run feature extraction, dimension selection and embedding on training sets.

    Returns ``(feature_map, Zstar)`` where ``Zstar`` is ``(p + m) x N``.
    """
    config = config or TrainConfig()
    if not collection.labeled:
        raise DimensionError("training requires every set to be labeled")
    limit = default_R(collection)
    p_value, stats = None, {}
    if config.r is not None:
        if not 0 <= config.r <= max(limit, 0):
            raise DimensionError(f"r override {config.r} outside 0..{max(limit, 0)}")
        r_hat = int(config.r)
    else:
        if len(np.unique(collection.labels)) != 2:
            raise DimensionError("dimension selection needs two classes; pass an explicit r for K > 2")
        c_policy = "average" if config.scale_c is None else config.scale_c
        sel = select_dimension(collection, config.R, c_policy, config.statistic, config.tau,
                               config.relative_tau, config.eig_tol)
        sel = permutation_test(collection, sel, config.B, config.alpha, config.seed)
        r_hat, p_value, stats = sel.r_hat, sel.p_value, sel.statistic_by_r

    means = np.stack([s.observations.mean(axis=1) for s in collection.sets], axis=1)
    if r_hat == 0:
        fmap = SetFeatureMap(collection.p, 0, None, None, None, p_value, stats)
        return fmap, means
    feats = [extract_features(s, r_hat, pad=True) for s in collection.sets]
    c = config.scale_c if config.scale_c is not None else scale_constant(feats)
    model = cmds_fit(pairwise_distances(feats, c), config.eig_tol)
    bases = np.stack([f.basis for f in feats])
    fmap = SetFeatureMap(collection.p, r_hat, c, bases, model, p_value, stats)
    return fmap, np.vstack([means, model.coordinates])


@dataclass
class TrainedSetClassifier:
    features: SetFeatureMap
    base_rule: object
    config: TrainConfig

    @property
    def r_hat(self) -> int:
        return self.features.r_hat

    @property
    def p_value(self):
        return self.features.p_value

    @property
    def scale_c(self):
        return self.features.scale_c

    @property
    def embedding(self):
        return self.features.embedding

    @property
    def feature_layout(self) -> tuple:
        return self.features.layout

    def to_dict(self) -> dict:
        f = self.features
        return {
            "format_version": FORMAT_VERSION,
            "config": asdict(self.config),
            "p": f.p,
            "r_hat": f.r_hat,
            "p_value": f.p_value,
            "scale_c": f.scale_c,
            "statistic_by_r": {str(k): v for k, v in f.statistic_by_r.items()},
            "feature_layout": list(f.layout),
            "training_bases": None if f.bases is None else f.bases.tolist(),
            "embedding": None if f.embedding is None else f.embedding.to_dict(),
            "rule": self.base_rule.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedSetClassifier":
        emb = None if d["embedding"] is None else EmbeddingModel.from_dict(d["embedding"])
        bases = None if d["training_bases"] is None else np.array(d["training_bases"], dtype=float)
        fmap = SetFeatureMap(
            int(d["p"]), int(d["r_hat"]), d["scale_c"], bases, emb, d["p_value"],
            {int(k): v for k, v in d.get("statistic_by_r", {}).items()},
        )
        return cls(fmap, classify.rule_from_dict(d["rule"]), TrainConfig(**d["config"]))


def train(collection, config: TrainConfig | None = None) -> TrainedSetClassifier:
    """Fit features on labeled training sets and the base classifier on ``z*``."""
    config = config or TrainConfig()
    fmap, Zstar = fit_feature_map(collection, config)
    rule = classify.fit_rule(config.classifier, Zstar, collection.labels, config.gamma)
    return TrainedSetClassifier(fmap, rule, config)


def predict(model: TrainedSetClassifier, newset, pad: bool = False):
    """Class label of one new set (``pad`` as in ``SetFeatureMap.transform``)."""
    z = model.features.transform(newset, pad)
    label = model.base_rule.predict(z[:, None])[0]
    return label.item() if hasattr(label, "item") else label


def predict_collection(model: TrainedSetClassifier, collection, pad: bool = False) -> np.ndarray:
    return np.array([predict(model, s, pad) for s in collection.sets])


def save_model(model: TrainedSetClassifier, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path) -> TrainedSetClassifier:
    return TrainedSetClassifier.from_dict(json.loads(Path(path).read_text()))
