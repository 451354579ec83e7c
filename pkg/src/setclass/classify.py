"""
Discriminant rules used as the base classifier on set features and as
pooled-observation voting baselines.

All fitters take ``X`` as a ``d x n`` matrix (one column per sample). For two
classes the first class is the "positive" side of the decision: label +1
when the labels are {-1, +1}, otherwise the smallest label. A score of
exactly zero is assigned to the positive class.

Pooled covariances use the ``1/n`` denominator, ``S = n^-1 sum_k sum_{i in k}
(x_i - mu_k)(x_i - mu_k)'``, with ``n`` the total sample count.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateError, DimensionError

GAMMA = 0.01
RULES = ("lda", "qda", "mdeb", "ya")


def _classes(y) -> tuple:
    labels = np.unique(y)
    if set(labels.tolist()) == {-1, 1}:
        return (1, -1)
    return tuple(int(v) if float(v).is_integer() else v for v in labels)


def _prepare(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    y = np.asarray(y).ravel()
    if X.shape[1] != y.size:
        raise DimensionError(f"X has {X.shape[1]} samples but y has {y.size} labels")
    classes = _classes(y)
    if len(classes) < 2:
        raise DimensionError("at least two classes are required to fit a rule")
    return X, y, classes


def class_means(X, y, classes) -> np.ndarray:
    return np.stack([X[:, y == k].mean(axis=1) for k in classes])


def pooled_covariance(X, y, classes) -> np.ndarray:
    """Within-class scatter divided by the total sample count."""
    d, n = X.shape
    S = np.zeros((d, d))
    for k in classes:
        C = X[:, y == k]
        C = C - C.mean(axis=1, keepdims=True)
        S += C @ C.T
    return S / n


@dataclass(frozen=True)
class LinearRule:
    """Binary linear rule ``score(x) = weight'x + offset``; positive class when score >= 0."""

    weight: np.ndarray
    offset: float
    kind: str
    classes: tuple
    gamma: float = 0.0

    def score(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.weight @ X + self.offset

    def decide(self, X) -> np.ndarray:
        return np.where(self.score(X) >= 0, 1, -1)

    def predict(self, X) -> np.ndarray:
        s = np.atleast_1d(self.score(X))
        return np.where(s >= 0, self.classes[0], self.classes[1])

    def to_dict(self) -> dict:
        return {
            "type": "linear",
            "kind": self.kind,
            "weight": self.weight.tolist(),
            "offset": self.offset,
            "classes": list(self.classes),
            "gamma": self.gamma,
        }


@dataclass(frozen=True)
class QuadraticRule:
    """Gaussian discriminant with per-class regularized covariances and equal priors."""

    means: np.ndarray
    precisions: np.ndarray
    logdets: np.ndarray
    classes: tuple
    kind: str = "ridge-qda"
    gamma: float = 0.0

    def discriminants(self, X) -> np.ndarray:
        """``n x K`` matrix of ``-1/2 log|S_k| - 1/2 (x - mu_k)' S_k^-1 (x - mu_k)``."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        out = np.empty((X.shape[1], len(self.classes)))
        for k in range(len(self.classes)):
            C = X - self.means[k][:, None]
            out[:, k] = -0.5 * self.logdets[k] - 0.5 * np.einsum("in,ij,jn->n", C, self.precisions[k], C)
        return out

    def score(self, X) -> np.ndarray:
        if len(self.classes) != 2:
            raise DimensionError("a scalar score is only defined for two classes")
        g = self.discriminants(X)
        s = g[:, 0] - g[:, 1]
        return s if np.asarray(X).ndim > 1 else s[0]

    def predict(self, X) -> np.ndarray:
        g = self.discriminants(X)
        return np.asarray(self.classes)[np.argmax(g, axis=1)]

    def to_dict(self) -> dict:
        return {
            "type": "quadratic",
            "kind": self.kind,
            "means": self.means.tolist(),
            "precisions": self.precisions.tolist(),
            "logdets": self.logdets.tolist(),
            "classes": list(self.classes),
            "gamma": self.gamma,
        }


def rule_from_dict(d: dict):
    classes = tuple(d["classes"])
    if d["type"] == "linear":
        return LinearRule(np.array(d["weight"], dtype=float), float(d["offset"]), d["kind"], classes, float(d["gamma"]))
    if d["type"] == "quadratic":
        return QuadraticRule(
            np.array(d["means"], dtype=float),
            np.array(d["precisions"], dtype=float),
            np.array(d["logdets"], dtype=float),
            classes,
            d["kind"],
            float(d["gamma"]),
        )
    raise ValueError(f"unknown rule type {d['type']!r}")


def _linear_from_cov(S, means, classes, kind, gamma) -> LinearRule:
    diff = means[0] - means[1]
    try:
        w = np.linalg.solve(S, diff)
    except np.linalg.LinAlgError as exc:
        raise DegenerateError(f"{kind}: covariance estimate is singular") from exc
    mid = 0.5 * (means[0] + means[1])
    return LinearRule(w, float(-w @ mid), kind, classes, float(gamma))


def _check_gamma(S, gamma, kind):
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    if gamma == 0:
        ev = np.linalg.eigvalsh(S)
        if ev[0] <= 1e-12 * max(ev[-1], np.finfo(float).tiny):
            raise DegenerateError(f"{kind}: pooled covariance is singular and gamma = 0")


def fit_ridge_lda(X, y, gamma: float = GAMMA):
    """Fisher's rule with the pooled covariance replaced by ``S + gamma I``.

    Two classes give a LinearRule. More classes give a QuadraticRule whose
    classes share one precision matrix (max-discriminant LDA).
    """
    X, y, classes = _prepare(X, y)
    S = pooled_covariance(X, y, classes)
    _check_gamma(S, gamma, "ridge-lda")
    A = S + gamma * np.eye(X.shape[0])
    means = class_means(X, y, classes)
    if len(classes) == 2:
        return _linear_from_cov(A, means, classes, "ridge-lda", gamma)
    P = np.linalg.inv(A)
    _, logdet = np.linalg.slogdet(A)
    K = len(classes)
    return QuadraticRule(means, np.repeat(P[None], K, axis=0), np.full(K, logdet), classes, "ridge-lda", float(gamma))


def fit_ridge_qda(X, y, gamma: float = GAMMA) -> QuadraticRule:
    """Per-class covariance (``1/n_k`` denominator) plus ``gamma I``; equal priors."""
    X, y, classes = _prepare(X, y)
    d = X.shape[0]
    means = class_means(X, y, classes)
    precisions, logdets = [], []
    for k, mu in zip(classes, means):
        C = X[:, y == k] - mu[:, None]
        S = C @ C.T / C.shape[1]
        _check_gamma(S, gamma, "ridge-qda")
        A = S + gamma * np.eye(d)
        sign, logdet = np.linalg.slogdet(A)
        if sign <= 0:
            raise DegenerateError("ridge-qda: regularized class covariance is not positive definite")
        precisions.append(np.linalg.inv(A))
        logdets.append(logdet)
    return QuadraticRule(means, np.array(precisions), np.array(logdets), classes, "ridge-qda", float(gamma))


def mdeb_gamma(S: np.ndarray, n: int) -> float:
    return float(np.trace(S) / min(n, S.shape[0]))


def fit_mdeb(X, y) -> LinearRule:
    """Minimum distance empirical Bayes rule: ridge with ``gamma = tr(S) / min(n, d)``."""
    X, y, classes = _prepare(X, y)
    if len(classes) != 2:
        raise DimensionError("MDEB is defined for two classes")
    S = pooled_covariance(X, y, classes)
    gamma = mdeb_gamma(S, X.shape[1])
    if not gamma > 0:
        raise DegenerateError("MDEB: pooled covariance has zero trace")
    means = class_means(X, y, classes)
    return _linear_from_cov(S + gamma * np.eye(X.shape[0]), means, classes, "mdeb", gamma)


def ya_omega(trace: float, d: int, n: int) -> float:
    return min(trace / (d**0.5 * n**0.25), trace / min(n, d))


def ya_eigenvalues(lam, n: int, omega: float) -> np.ndarray:
    """Thresholded spectrum for the YA covariance estimate.

    ``lam`` is the descending spectrum of S. For j = 1..n-1 the j-th value is
    ``max(lam_j, omega * lam_j / (lam_j - sum_{i=j+1}^{n-1} lam_i / (n - j)))``;
    indices from n on (and any j whose correction is undefined because
    ``lam_j`` is zero) are set to ``omega``.
    """
    lam = np.asarray(lam, dtype=float)
    d = lam.size
    out = np.full(d, float(omega))
    top = min(n - 1, d)
    if top <= 0:
        return out
    head = lam[:top]
    # tail[j] = sum of head[j+1:]
    tail = np.concatenate([np.cumsum(head[::-1])[::-1][1:], [0.0]])
    j1 = np.arange(1, top + 1)
    denom = head - tail / (n - j1)
    ok = (head > 0) & (denom > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        corrected = np.where(ok, omega * head / np.where(ok, denom, 1.0), omega)
    out[:top] = np.where(ok, np.maximum(head, corrected), omega)
    return out


def ya_covariance(S: np.ndarray, n: int):
    """Eigenvectors, thresholded eigenvalues and omega for the YA estimate of ``S``."""
    trace = float(np.trace(S))
    if not trace > 0:
        raise DegenerateError("YA: pooled covariance has zero trace")
    lam, E = np.linalg.eigh(S)
    lam, E = lam[::-1], E[:, ::-1]
    omega = ya_omega(trace, S.shape[0], n)
    return E, ya_eigenvalues(np.maximum(lam, 0.0), n, omega), omega


def fit_ya(X, y) -> LinearRule:
    """Linear rule with the hard-thresholded covariance ``S_omega``."""
    X, y, classes = _prepare(X, y)
    if len(classes) != 2:
        raise DimensionError("the YA rule is defined for two classes")
    n = X.shape[1]
    if n < 2:
        raise DimensionError("the YA rule needs at least two samples")
    S = pooled_covariance(X, y, classes)
    E, lam_t, omega = ya_covariance(S, n)
    means = class_means(X, y, classes)
    diff = means[0] - means[1]
    w = E @ ((E.T @ diff) / lam_t)
    mid = 0.5 * (means[0] + means[1])
    return LinearRule(w, float(-w @ mid), "ya", classes, float(omega))


def fit_rule(kind: str, X, y, gamma: float = GAMMA):
    """Dispatch on ``kind`` in ``lda | qda | mdeb | ya``."""
    if kind == "lda":
        return fit_ridge_lda(X, y, gamma)
    if kind == "qda":
        return fit_ridge_qda(X, y, gamma)
    if kind == "mdeb":
        return fit_mdeb(X, y)
    if kind == "ya":
        return fit_ya(X, y)
    raise ValueError(f"unknown classifier {kind!r}; expected one of {RULES}")


def vote_classify(rule, obs, mode: str = "weighted"):
    """Classify a whole set from per-observation decisions.

    ``majority``: sign of the summed per-observation signs (plurality for
    more than two classes). ``weighted``: sign of the summed scores (largest
    summed discriminant for more than two classes).
    """
    X = getattr(obs, "observations", obs)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] == 0:
        raise DimensionError("cannot vote over an empty set")
    if mode not in ("majority", "weighted"):
        raise ValueError(f"mode must be 'majority' or 'weighted', got {mode!r}")
    classes = rule.classes
    if len(classes) == 2:
        s = np.atleast_1d(rule.score(X))
        total = np.where(s >= 0, 1.0, -1.0).sum() if mode == "majority" else s.sum()
        return classes[0] if total >= 0 else classes[1]
    if mode == "majority":
        preds = rule.predict(X)
        counts = [(preds == k).sum() for k in classes]
        return classes[int(np.argmax(counts))]
    return classes[int(np.argmax(rule.discriminants(X).sum(axis=0)))]
