"""Dense complex Hermitian matrix primitives.

Every covariance, multiplier and LMI block in the package goes through these
helpers, so they are strict about Hermitian input and deterministic in their
output (sorted spectra, fixed eigenvector phase).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_ATOL = 1e-12
DEFAULT_RANK_TOL = 1e-6


class NotHermitianError(ValueError):
    """Raised when a matrix that must be Hermitian is not."""


def _as_square(x) -> np.ndarray:
    a = np.asarray(x)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise NotHermitianError(f"expected a non-empty square matrix, got shape {a.shape}")
    return a.astype(complex, copy=False)


def symmetrize(x) -> np.ndarray:
    """Return (X + X^H)/2; absorbs solver round-off before eigen-analysis."""
    a = _as_square(x)
    return 0.5 * (a + a.conj().T)


def check_hermitian(x, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    a = _as_square(x)
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.conj().T)) > atol * scale:
        raise NotHermitianError("matrix is not Hermitian within tolerance")
    return 0.5 * (a + a.conj().T)


def _spectral_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    # first entry with non-negligible magnitude made real-positive
    out = vecs.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        idx = int(np.argmax(np.abs(col) > 1e-12 * max(np.max(np.abs(col)), 1e-300)))
        if abs(col[idx]) > 0:
            out[:, j] = col * (abs(col[idx]) / col[idx])
    return out


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, orthonormal

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


def eigh_desc(x) -> EigenResult:
    """Eigendecomposition with descending eigenvalues and a fixed phase convention."""
    a = check_hermitian(x)
    w, u = np.linalg.eigh(a)
    order = np.argsort(-w, kind="stable")
    return EigenResult(w[order], _fix_phase(u[:, order]))


def eigvals_desc(x) -> np.ndarray:
    return np.sort(np.linalg.eigvalsh(check_hermitian(x)))[::-1]


def lambda_max(x) -> float:
    return float(eigvals_desc(x)[0])


def lambda_min(x) -> float:
    return float(eigvals_desc(x)[-1])


def is_psd(x, tol: float = 1e-9) -> bool:
    a = check_hermitian(x)
    return lambda_min(a) >= -tol * max(1.0, _spectral_norm(a))


def numeric_rank(x, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Count eigenvalues above rel_tol * lambda_max; zero matrix has rank 0."""
    w = eigvals_desc(x)
    top = w[0]
    if top <= 0.0:
        return 0
    return int(np.count_nonzero(w > rel_tol * top))


def null_basis(x, threshold: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal columns spanning the eigenspaces with eigenvalue <= threshold * lambda_max.

    Returns an (n, 0) array when X is numerically full rank.
    """
    res = eigh_desc(x)
    top = res.eigenvalues[0]
    if top <= 0.0:
        return res.eigenvectors
    mask = res.eigenvalues <= threshold * top
    return res.eigenvectors[:, mask]


def dominant_eigenpair(x) -> tuple[float, np.ndarray]:
    res = eigh_desc(x)
    return float(res.eigenvalues[0]), res.eigenvectors[:, 0]


def psd_sqrt_factor(x) -> np.ndarray:
    """Factor F with X = F F^H (negative eigenvalues clipped)."""
    res = eigh_desc(x)
    return res.eigenvectors * np.sqrt(np.clip(res.eigenvalues, 0.0, None))


def project_psd(x) -> np.ndarray:
    f = psd_sqrt_factor(x)
    return f @ f.conj().T


def outer(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def real_embedding(x) -> np.ndarray:
    """Map a complex Hermitian n x n matrix to the real symmetric 2n x 2n [[Re, -Im], [Im, Re]]."""
    a = np.asarray(x, dtype=complex)
    re, im = a.real, a.imag
    return np.block([[re, -im], [im, re]])


def lift_embedded_dual(z) -> np.ndarray:
    """Inverse bookkeeping for duals: Tr(D B) == <Z, embed(B)> for every Hermitian B."""
    z = np.asarray(z, dtype=float)
    n = z.shape[0] // 2
    z11, z12, z21, z22 = z[:n, :n], z[:n, n:], z[n:, :n], z[n:, n:]
    d = (z11 + z22) + 1j * (z21 - z12)
    return 0.5 * (d + d.conj().T)


def trace_bounds(a, b) -> tuple[float, float]:
    """Eigenvalue bounds on Tr(AB) for Hermitian A, B.

    Pairing the spectra in opposite order gives the lower bound, same order the upper.
    """
    la, lb = eigvals_desc(a), eigvals_desc(b)
    if la.shape != lb.shape:
        raise ValueError("A and B must have the same dimension")
    return float(la @ lb[::-1]), float(la @ lb)


def trace_product(a, b) -> float:
    return float(np.real(np.trace(check_hermitian(a) @ check_hermitian(b))))
