"""
Classical multidimensional scaling of a squared-distance matrix, and the
closed-form placement of a new object given its squared distances to the
training objects.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateError, DimensionError
from .features import DistanceMatrix, _fix_signs

EIG_TOL = 1e-10


@dataclass(frozen=True)
class EmbeddingModel:
    """Fitted CMDS configuration.

    ``coordinates`` is ``m x N`` (one column per training object) and equals
    ``diag(sqrt(eigenvalues)) @ eigenvectors.T``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    coordinates: np.ndarray
    delta: DistanceMatrix
    psd_defect: float = 0.0

    @property
    def m(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def N(self) -> int:
        return self.eigenvectors.shape[0]

    def to_dict(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvectors": self.eigenvectors.tolist(),
            "coordinates": self.coordinates.tolist(),
            "delta": self.delta.squared.tolist(),
            "scale_c": self.delta.scale_c,
            "r": self.delta.r,
            "psd_defect": self.psd_defect,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingModel":
        lam = np.array(d["eigenvalues"], dtype=float)
        Q = np.array(d["eigenvectors"], dtype=float).reshape(-1, lam.size)
        Z = np.array(d["coordinates"], dtype=float).reshape(lam.size, -1)
        delta = DistanceMatrix(np.array(d["delta"], dtype=float), float(d["scale_c"]), int(d["r"]))
        return cls(lam, Q, Z, delta, float(d.get("psd_defect", 0.0)))


def double_center(D: np.ndarray) -> np.ndarray:
    """``B = -1/2 C D C`` with the centering matrix ``C = I - 11'/N``."""
    N = D.shape[0]
    C = np.eye(N) - np.full((N, N), 1.0 / N)
    B = -0.5 * C @ D @ C
    return 0.5 * (B + B.T)


def cmds_fit(delta, eig_tol: float = EIG_TOL) -> EmbeddingModel:
    """Classical MDS of a squared-distance matrix.

    Eigenvalues of ``B`` at or below ``eig_tol * max_eigenvalue`` are
    discarded; the magnitude of the most negative eigenvalue is recorded in
    ``psd_defect`` (nonzero when the distances are not Euclidean).

    Raises
    ------
    DegenerateError
        When ``B`` has no positive eigenvalue.
    """
    if not isinstance(delta, DistanceMatrix):
        delta = DistanceMatrix(np.asarray(delta, dtype=float), 1.0, 0)
    D = delta.squared
    N = D.shape[0]
    if N < 2:
        raise DimensionError(f"CMDS needs at least 2 objects, got N={N}")
    B = double_center(D)
    lam, Q = np.linalg.eigh(B)
    lam, Q = lam[::-1], Q[:, ::-1]
    top = lam[0]
    if not top > 0:
        raise DegenerateError("doubly centered matrix has no positive eigenvalue (all distances zero?)")
    keep = lam > eig_tol * top
    lam_k = lam[keep].copy()
    Q_k = _fix_signs(Q[:, keep].copy())
    Z = np.sqrt(lam_k)[:, None] * Q_k.T
    defect = float(max(0.0, -lam[-1]))
    for a in (lam_k, Q_k, Z):
        a.setflags(write=False)
    return EmbeddingModel(lam_k, Q_k, Z, delta, defect)


def extension_matrix(D: np.ndarray, delta_new: np.ndarray) -> np.ndarray:
    """``B_dagger = -1/2 P Delta_dagger P'`` where P centers on the first N objects."""
    N = D.shape[0]
    Dd = np.zeros((N + 1, N + 1))
    Dd[:N, :N] = D
    Dd[:N, N] = delta_new
    Dd[N, :N] = delta_new
    w = np.zeros(N + 1)
    w[:N] = 1.0
    P = np.eye(N + 1) - np.outer(np.ones(N + 1), w) / N
    return -0.5 * P @ Dd @ P.T


def cmds_extend(model: EmbeddingModel, delta_new, return_residual: bool = False):
    """Coordinates of a new object from its squared distances to the training objects.

    Returns the first ``m`` coordinates ``Lambda^-1/2 Q' b12``. With
    ``return_residual`` also returns ``b2 - z'z``; a negative residual means
    the closed form is not a local minimum of the extended loss (the
    augmented Gram matrix is indefinite) and the point is returned anyway.
    """
    delta_new = np.asarray(delta_new, dtype=float).ravel()
    N = model.N
    if delta_new.shape[0] != N:
        raise DimensionError(f"expected {N} squared distances, got {delta_new.shape[0]}")
    if not np.isfinite(delta_new).all():
        raise ValueError("squared distances must be finite")
    if (delta_new < 0).any():
        raise ValueError("squared distances must be nonnegative")
    Bd = extension_matrix(model.delta.squared, delta_new)
    b12 = Bd[:N, N]
    b2 = Bd[N, N]
    z = (model.eigenvectors.T @ b12) / np.sqrt(model.eigenvalues)
    if return_residual:
        return z, float(b2 - z @ z)
    return z


def embedded_sq_distances(Z: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between the columns of Z."""
    G = Z.T @ Z
    g = np.diag(G)
    D = g[:, None] + g[None, :] - 2 * G
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)
