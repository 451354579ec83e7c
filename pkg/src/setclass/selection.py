"""
Choosing the PC subspace dimension r.

For every candidate r the sets' subspaces are embedded by CMDS and the two
class groups are compared with a sum of squared marginal t-statistics
(``T``) or one of the alternatives ``T1``, ``T2``, ``T3``, ``R1``. The best r
is then checked with a label-permutation test and replaced by 0 when the
PC features are not significant.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .embedding import EIG_TOL, cmds_fit
from .exceptions import DegenerateError, DimensionError
from .features import extract_features, pairwise_distances, scale_constant

STATISTICS = ("T", "T1", "T2", "T3", "R1")
VAR_FLOOR = 1e-12
# relative tolerance under which a permuted statistic counts as a tie with the observed one
TIE_RTOL = 1e-9
_CHUNK = 256


def group_mask(labels) -> np.ndarray:
    """Boolean membership of the first group (smallest label) for a binary labeling."""
    labels = np.asarray(labels).ravel()
    classes = np.unique(labels)
    if classes.size != 2:
        raise DimensionError(f"a binary labeling is required, got {classes.size} distinct labels")
    return labels == classes[0]


def _stat_batch(kind, Z, rho, masks, tau=0.0, relative_tau=False):
    """Statistic of one coordinate matrix ``Z`` (m x N) under many group-1 masks (B x N)."""
    masks = np.atleast_2d(masks)
    if kind == "R1":
        M = masks.astype(float)
        W = 1.0 - M
        within = np.einsum("bi,ij,bj->b", M, rho, M) + np.einsum("bi,ij,bj->b", W, rho, W)
        between = np.einsum("bi,ij,bj->b", M, rho, W)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(between > 0, within / between, 0.0)

    n1 = masks.sum(axis=1)
    N = masks.shape[1]
    n2 = N - n1
    if (n1 == 0).any() or (n2 == 0).any():
        raise DimensionError("both groups must be nonempty")
    Mf = masks.astype(float)
    sum1 = Mf @ Z.T
    mean1 = sum1 / n1[:, None]
    mean2 = (Z.sum(axis=1)[None, :] - sum1) / n2[:, None]
    eta = mean1 - mean2
    centered = Z[None, :, :] - np.where(masks[:, None, :], mean1[:, :, None], mean2[:, :, None])

    if kind == "T2":
        S = np.einsum("bki,bli->bkl", centered, centered) / N
        m = Z.shape[0]
        trace = np.trace(S, axis1=1, axis2=2)
        t = tau * trace if relative_tau else np.full(len(S), tau)
        A = S + t[:, None, None] * np.eye(m)
        ev = np.linalg.eigvalsh(A)
        if (ev[:, 0] <= VAR_FLOOR * np.maximum(ev[:, -1], np.finfo(float).tiny)).any():
            raise DegenerateError("pooled covariance (+ tau I) is singular; use tau > 0")
        return np.einsum("bk,bk->b", eta, np.linalg.solve(A, eta[:, :, None])[:, :, 0])

    D = (centered**2).sum(axis=2) / N
    total = D.sum(axis=1)
    if kind == "T3":
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(total > 0, (eta**2).sum(axis=1) / total, 0.0)
    if kind == "T":
        t = np.zeros(len(D))
    elif kind == "T1":
        t = tau * total if relative_tau else np.full(len(D), float(tau))
    else:
        raise ValueError(f"unknown statistic {kind!r}; expected one of {STATISTICS}")
    denom = D + t[:, None]
    keep = denom > VAR_FLOOR * D.max(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(keep, eta**2 / np.where(keep, denom, 1.0), 0.0)
    return terms.sum(axis=1)


def _check_coords(coords, labels):
    Z = np.asarray(coords, dtype=float)
    if Z.ndim == 1:
        Z = Z[None, :]
    mask = group_mask(labels)
    if Z.shape[1] != mask.size:
        raise DimensionError(f"coords have {Z.shape[1]} columns but {mask.size} labels were given")
    if Z.shape[0] < 1:
        raise DimensionError("coords must have at least one row")
    return Z, mask


def hotelling_T(coords, labels) -> float:
    """Sum of squared marginal t-statistics ``eta' diag(S)^-1 eta``.

    ``coords`` is ``m x N``; ``S`` is the pooled within-group covariance with
    a ``1/N`` factor. Coordinates whose pooled variance is below ``1e-12``
    times the largest one are left out of the sum.
    """
    Z, mask = _check_coords(coords, labels)
    D = _pooled_diag(Z, mask)
    if not D.max() > 0:
        raise DegenerateError("all pooled coordinate variances are zero")
    return float(_stat_batch("T", Z, None, mask[None, :])[0])


def _pooled_diag(Z, mask):
    c1 = Z[:, mask] - Z[:, mask].mean(axis=1, keepdims=True)
    c2 = Z[:, ~mask] - Z[:, ~mask].mean(axis=1, keepdims=True)
    return ((c1**2).sum(axis=1) + (c2**2).sum(axis=1)) / Z.shape[1]


def alt_statistic(coords, labels, kind: str, tau: float = 0.0, distances=None) -> float:
    """Alternative separation statistics.

    ``T1``: ``eta' (D + tau I)^-1 eta``; ``T2``: ``eta' (S + tau I)^-1 eta``;
    ``T3``: ``eta' eta / tr(S)``; ``R1``: ratio of summed raw subspace
    distances over same-group pairs to that over cross-group pairs
    (requires ``distances``, an N x N matrix of unsquared distances).
    """
    if kind not in STATISTICS:
        raise ValueError(f"unknown statistic {kind!r}; expected one of {STATISTICS}")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if kind == "R1":
        if distances is None:
            raise ValueError("R1 needs the matrix of subspace distances")
        rho = np.asarray(distances, dtype=float)
        mask = group_mask(labels)
        return float(_stat_batch("R1", None, rho, mask[None, :])[0])
    if kind == "T":
        return hotelling_T(coords, labels)
    Z, mask = _check_coords(coords, labels)
    return float(_stat_batch(kind, Z, None, mask[None, :], tau)[0])


@dataclass
class SelectionResult:
    r_hat: int
    statistic_by_r: dict
    p_value: float | None = None
    permutations: int = 0
    statistic_kind: str = "T"
    tau: float = 0.0
    relative_tau: bool = False
    # per-r CMDS coordinates and raw distances, reused by the permutation test
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def R(self) -> int:
        return max(self.statistic_by_r) if self.statistic_by_r else 0


def default_R(collection) -> int:
    """Largest subspace dimension considered, ``min(p, min_i n_i)``.

    At ``r = n_i`` the smallest sets have one direction they cannot estimate;
    it is zero-padded (see ``extract_features(..., pad=True)``).
    """
    return int(min(collection.p, int(collection.sizes.min())))


def embed_at(collection, r: int, c=None, eig_tol: float = EIG_TOL, features=None):
    """Features, scale constant, distance matrix and CMDS fit at dimension ``r``.

    Returns ``(features, c, distance_matrix, model)`` where ``model`` is None
    when the distances are all zero.
    """
    if features is None:
        features = [extract_features(s, r, pad=True) for s in collection.sets]
    if c is None:
        c = scale_constant(features)
    dm = pairwise_distances(features, c)
    try:
        model = cmds_fit(dm, eig_tol)
    except DegenerateError:
        model = None
    return features, c, dm, model


def _resolve_c(c_policy):
    if c_policy in (None, "average"):
        return None
    c = float(c_policy)
    if not c > 0:
        raise ValueError(f"fixed scale constant must be positive, got {c_policy!r}")
    return c


def select_dimension(
    collection,
    R: int | None = None,
    c_policy="average",
    statistic_kind: str = "T",
    tau: float = 0.0,
    relative_tau: bool = False,
    eig_tol: float = EIG_TOL,
) -> SelectionResult:
    """Evaluate the statistic for r = 1..R and pick the maximizer (smallest r on ties).

    ``c_policy`` is ``"average"`` (mean total retained PC variance) or a fixed
    positive number. A dimension whose subspaces all coincide scores 0.
    """
    if statistic_kind not in STATISTICS:
        raise ValueError(f"unknown statistic {statistic_kind!r}; expected one of {STATISTICS}")
    mask = group_mask(collection.labels)
    limit = default_R(collection)
    if R is None:
        R = limit
    if not 1 <= R <= limit:
        raise DimensionError(f"R={R} outside 1..min(p, min n_i) = 1..{limit}")
    fixed_c = _resolve_c(c_policy)
    top = [extract_features(s, R, pad=True) for s in collection.sets]
    stats, cache = {}, {}
    for r in range(1, R + 1):
        feats = top if r == R else [f.truncated(r) for f in top]
        _, c, dm, model = embed_at(collection, r, fixed_c, eig_tol, feats)
        if model is None:
            stats[r] = 0.0
            cache[r] = None
            continue
        rho = np.sqrt(dm.squared)
        cache[r] = (model.coordinates, rho)
        stats[r] = float(_stat_batch(statistic_kind, model.coordinates, rho, mask[None, :], tau, relative_tau)[0])
    values = np.array([stats[r] for r in range(1, R + 1)])
    r_hat = int(np.argmax(values)) + 1
    return SelectionResult(r_hat, stats, None, 0, statistic_kind, tau, relative_tau, cache)


def permutation_masks(mask: np.ndarray, B: int, seed: int) -> np.ndarray:
    """Group-1 masks for B random relabelings; permutation b uses RNG stream (seed, b)."""
    N = mask.size
    out = np.empty((B, N), dtype=bool)
    for b in range(B):
        perm = np.random.default_rng([seed, b]).permutation(N)
        out[b] = mask[perm]
    return out


def exhaustive_masks(mask: np.ndarray) -> np.ndarray:
    """All N! relabelings (duplicates kept, so each permutation has equal weight)."""
    N = mask.size
    if N > 9:
        raise ValueError(f"exhaustive enumeration over {N}! permutations is too large")
    return np.array([mask[list(perm)] for perm in itertools.permutations(range(N))], dtype=bool)


def count_pvalue(observed: float, permuted: np.ndarray) -> float:
    """``B^-1 sum 1{observed <= T_b}``; values equal up to rounding count as ties."""
    permuted = np.asarray(permuted, dtype=float)
    slack = TIE_RTOL * max(abs(observed), np.finfo(float).tiny)
    return float(np.mean(permuted >= observed - slack))


def permuted_maxima(collection, selection: SelectionResult, masks: np.ndarray) -> np.ndarray:
    """``T_b = max_r T(r, b)`` for each relabeling mask."""
    cache = selection.cache
    if not cache:
        fresh = select_dimension(
            collection, selection.R, statistic_kind=selection.statistic_kind,
            tau=selection.tau, relative_tau=selection.relative_tau,
        )
        cache = fresh.cache
    best = np.zeros(len(masks))
    for r in sorted(selection.statistic_by_r):
        entry = cache.get(r)
        if entry is None:
            continue
        Z, rho = entry
        for start in range(0, len(masks), _CHUNK):
            chunk = masks[start:start + _CHUNK]
            vals = _stat_batch(selection.statistic_kind, Z, rho, chunk, selection.tau, selection.relative_tau)
            np.maximum(best[start:start + _CHUNK], vals, out=best[start:start + _CHUNK])
    return best


def permutation_test(
    collection,
    selection: SelectionResult,
    B: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
    exhaustive: bool = False,
) -> SelectionResult:
    """Label-permutation p-value for the selected dimension.

    Labels are permuted over sets (group sizes preserved). When the p-value
    is at least ``alpha`` the returned result has ``r_hat = 0``. With
    ``exhaustive=True`` all N! permutations are enumerated and ``B`` is
    ignored.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    mask = group_mask(collection.labels)
    if exhaustive:
        masks = exhaustive_masks(mask)
    else:
        if B < 1:
            raise ValueError(f"B must be at least 1, got {B}")
        masks = permutation_masks(mask, int(B), seed)
    observed = selection.statistic_by_r[selection.r_hat] if selection.r_hat >= 1 else max(
        selection.statistic_by_r.values(), default=0.0
    )
    if observed <= 0:
        p = 1.0
    else:
        p = count_pvalue(observed, permuted_maxima(collection, selection, masks))
    r_hat = selection.r_hat if p < alpha else 0
    return SelectionResult(
        r_hat, dict(selection.statistic_by_r), p, len(masks), selection.statistic_kind,
        selection.tau, selection.relative_tau, selection.cache,
    )

