"""
Per-set features (mean and principal-component subspace) and the sine
metric between subspaces.

The empirical covariance of a set uses the ``1/n_i`` denominator, *not*
``1/(n_i - 1)``; eigenpairs are obtained from a thin SVD of the centered data
scaled by ``n_i**-0.5``, which yields the same eigenvectors and eigenvalues
without forming the ``p x p`` matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateError, DimensionError, SetClassError
from .setdata import ObservationSet

ORTHONORMAL_TOL = 1e-8
ANGLE_SNAP = 1e-8


@dataclass(frozen=True)
class SetFeatures:
    """Mean, orthonormal PC basis (p x r) and PC variances of one set."""

    mean: np.ndarray
    basis: np.ndarray
    variances: np.ndarray
    degenerate: bool = False

    @property
    def r(self) -> int:
        return self.basis.shape[1]

    @property
    def p(self) -> int:
        return self.basis.shape[0]

    def truncated(self, r: int) -> "SetFeatures":
        if not 1 <= r <= self.r:
            raise DimensionError(f"cannot truncate a rank-{self.r} feature to r={r}")
        v = self.variances[:r]
        return SetFeatures(self.mean, self.basis[:, :r], v, _is_degenerate(v, self.variances))


def _is_degenerate(retained, allvar) -> bool:
    scale = max(float(allvar.sum()), np.finfo(float).tiny)
    return bool(retained.size == 0 or retained[-1] <= 1e-13 * scale)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive; PC directions are axial
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _spectrum(X: np.ndarray):
    n = X.shape[1]
    mean = X.mean(axis=1)
    try:
        U, s, _ = np.linalg.svd((X - mean[:, None]) / np.sqrt(n), full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SetClassError(f"eigendecomposition did not converge: {exc}") from exc
    return mean, U, s**2


def max_rank(obs: ObservationSet) -> int:
    return min(obs.p, obs.n - 1)


def extract_features(obs: ObservationSet, r: int, pad: bool = False) -> SetFeatures:
    """Sample mean and the span of the top-``r`` empirical PC directions.

    Parameters
    ----------
    obs : ObservationSet
        Set with ``n_i`` observations of dimension ``p``.
    r : int
        Subspace dimension, ``1 <= r <= min(p, n_i - 1)``.
    pad : bool
        Allow ``min(p, n_i - 1) < r <= p``. Directions the set cannot estimate
        are stored as zero basis columns with zero variance, so they count as
        orthogonal to every other subspace in the distance computations.

    Returns
    -------
    SetFeatures
        ``degenerate`` is set when a retained PC variance is (numerically)
        zero; the corresponding basis columns are then arbitrary unit vectors
        (or zero columns when padded).
    """
    if isinstance(r, bool) or int(r) != r:
        raise DimensionError(f"r must be an integer, got {r!r}")
    r = int(r)
    limit = obs.p if pad else max_rank(obs)
    if not 1 <= r <= limit:
        raise DimensionError(
            f"set {obs.set_id!r}: r={r} outside 1..min(p, n_i - 1) = 1..{limit} (p={obs.p}, n_i={obs.n})"
        )
    mean, U, lam = _spectrum(obs.observations)
    k = min(r, max_rank(obs))
    basis = np.zeros((obs.p, r))
    var = np.zeros(r)
    basis[:, :k] = _fix_signs(U[:, :k])
    var[:k] = np.maximum(lam[:k], 0.0)
    return SetFeatures(mean, basis, var, _is_degenerate(var, lam))


def check_orthonormal(L: np.ndarray, name: str = "basis") -> np.ndarray:
    L = np.asarray(L, dtype=float)
    if L.ndim == 1:
        L = L[:, None]
    err = np.abs(L.T @ L - np.eye(L.shape[1])).max() if L.size else 0.0
    if err > ORTHONORMAL_TOL:
        raise DimensionError(f"{name} is not orthonormal (max |L'L - I| = {err:.3g})")
    return L


def _cosines(L1: np.ndarray, L2: np.ndarray) -> np.ndarray:
    g = np.linalg.svd(L1.T @ L2, compute_uv=False)
    return np.clip(g, 0.0, 1.0)


def _sines(L1: np.ndarray, L2: np.ndarray) -> np.ndarray:
    # singular values of (I - L1 L1')L2 are the sines of the angles, without
    # the cancellation 1 - cos^2 suffers near zero; works batched over a leading axis
    resid = L2 - L1 @ (np.swapaxes(L1, -1, -2) @ L2)
    s = np.linalg.svd(resid, compute_uv=False)
    return np.clip(s, 0.0, 1.0)


def _sum_sin2(L1: np.ndarray, L2: np.ndarray) -> np.ndarray:
    """``sum_l sin^2 theta_l`` for (stacks of) p x r bases; zero columns of L2 count as right angles."""
    s = _sines(L1, L2)
    s[s < np.sin(ANGLE_SNAP)] = 0.0
    missing = L2.shape[-1] - np.count_nonzero(np.any(L2 != 0, axis=-2), axis=-1)
    return (s**2).sum(axis=-1) + missing


def _ordered(L1, L2):
    L1 = check_orthonormal(L1, "L1")
    L2 = check_orthonormal(L2, "L2")
    if L1.shape[0] != L2.shape[0]:
        raise DimensionError(f"ambient dimensions differ: {L1.shape[0]} vs {L2.shape[0]}")
    # the smaller subspace goes second so that its angles are the ones reported
    return (L1, L2) if L1.shape[1] >= L2.shape[1] else (L2, L1)


def canonical_angles(L1, L2) -> np.ndarray:
    """Canonical angles between span(L1) and span(L2), in [0, pi/2], nondecreasing.

    The number of angles equals the smaller of the two subspace dimensions.
    Small angles come from the sines and large ones from the cosines, which
    keeps both ends accurate.
    """
    L1, L2 = _ordered(L1, L2)
    cos_theta = np.arccos(_cosines(L1, L2))
    sin_theta = np.arcsin(np.sort(_sines(L1, L2)))
    theta = np.where(sin_theta < np.pi / 4, sin_theta, cos_theta)
    theta[theta < ANGLE_SNAP] = 0.0
    return theta


def subspace_distance(L1, L2, c: float = 1.0) -> float:
    """``c * sqrt(sum_l sin^2 theta_l)``, at most ``c * sqrt(r)``."""
    if not c > 0:
        raise ValueError(f"scale constant must be positive, got {c!r}")
    L1, L2 = _ordered(L1, L2)
    return float(c * np.sqrt(_sum_sin2(L1, L2)))


def scale_constant(features) -> float:
    """Average over sets of the total retained PC variance."""
    features = list(features)
    if not features:
        raise ValueError("scale_constant needs at least one set")
    rs = {f.r for f in features}
    if len(rs) != 1:
        raise DimensionError(f"features have differing subspace dimensions {sorted(rs)}")
    c = float(np.mean([f.variances.sum() for f in features]))
    if not c > 0:
        raise DegenerateError("all retained PC variances are zero; scale constant undefined")
    return c


@dataclass(frozen=True)
class DistanceMatrix:
    """Pairwise squared sine distances between the subspaces of N sets."""

    squared: np.ndarray
    scale_c: float
    r: int

    def __post_init__(self):
        D = np.array(self.squared, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise DimensionError(f"distance matrix must be square, got shape {D.shape}")
        scale = max(1.0, float(np.abs(D).max(initial=0.0)))
        if np.abs(D - D.T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("distance matrix is not symmetric")
        if (D < 0).any():
            raise ValueError("distance matrix has negative entries")
        np.fill_diagonal(D, 0.0)
        D.setflags(write=False)
        object.__setattr__(self, "squared", D)

    @property
    def N(self) -> int:
        return self.squared.shape[0]


def _stack_bases(features) -> np.ndarray:
    rs = {f.r for f in features}
    if len(rs) != 1:
        raise DimensionError(f"features have differing subspace dimensions {sorted(rs)}")
    return np.stack([f.basis for f in features])


def pairwise_distances(features, c: float) -> DistanceMatrix:
    """Squared distance matrix ``(rho_s(L_i, L_j)**2)_{ij}`` for a list of features."""
    features = list(features)
    if not c > 0:
        raise ValueError(f"scale constant must be positive, got {c!r}")
    Ls = _stack_bases(features)
    N, r = len(features), Ls.shape[2]
    iu, ju = np.triu_indices(N, k=1)
    D = np.zeros((N, N))
    if iu.size:
        d2 = c**2 * _sum_sin2(Ls[iu], Ls[ju])
        D[iu, ju] = d2
        D[ju, iu] = d2
    return DistanceMatrix(D, float(c), r)


def distances_to(bases, new: SetFeatures, c: float) -> np.ndarray:
    """Squared distances from one new subspace to each training subspace.

    ``bases`` is a list of SetFeatures or an ``N x p x r`` array of bases.
    """
    Ls = bases if isinstance(bases, np.ndarray) else _stack_bases(list(bases))
    if new.r != Ls.shape[2]:
        raise DimensionError(f"new subspace has r={new.r}, training subspaces have r={Ls.shape[2]}")
    if new.p != Ls.shape[1]:
        raise DimensionError(f"new set has p={new.p}, training sets have p={Ls.shape[1]}")
    return c**2 * _sum_sin2(Ls, np.broadcast_to(new.basis, Ls.shape))


def rho_distances(dm: DistanceMatrix) -> np.ndarray:
    """Unsquared distances ``rho_s`` recovered from a DistanceMatrix."""
    return np.sqrt(dm.squared)
