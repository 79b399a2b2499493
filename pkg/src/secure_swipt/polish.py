"""Newton refinement of an interior-point solution on the optimality conditions.

Interior-point methods stop on a duality gap around 1e-8 relative; for a
rank-deficient block the primal/dual range mismatch then only decays like the
square root of the gap. Starting from such a point, Newton's method on

    q - sum_i A_i^*(D_i) = 0,        S_i(x) D_i + D_i S_i(x) = 0  for every block i

(the symmetrised complementarity form) converges quadratically whenever the
solution is strictly complementary and nondegenerate. The refined point is only
accepted by the caller after an independent residual and PSD check.
"""
from __future__ import annotations

import numpy as np

from .formulation import SdpProblem


def _params(mats: np.ndarray) -> np.ndarray:
    """Real parameters of (..., d, d) Hermitian matrices, same ordering as hermitian_basis."""
    d = mats.shape[-1]
    iu, ju = np.triu_indices(d, 1)
    diag = np.real(np.diagonal(mats, axis1=-2, axis2=-1))
    up = mats[..., iu, ju]
    pairs = np.stack([up.real, up.imag], axis=-1).reshape(mats.shape[:-2] + (-1,))
    return np.concatenate([diag, pairs], axis=-1)


def _basis(d: int) -> np.ndarray:
    from .formulation import hermitian_basis
    return hermitian_basis(d)


def _from_params(p: np.ndarray, d: int) -> np.ndarray:
    return np.tensordot(p, _basis(d), axes=1)


class _System:
    def __init__(self, problem: SdpProblem):
        self.problem = problem
        self.m = problem.layout.size
        self.q = problem.objective.coef if problem.objective.m else np.zeros(self.m)
        self.blocks = []
        offset = self.m
        for con in problem.constraints:
            if con.kind == "psd":
                d = con.expr.dim
                coef = con.expr.coef if con.expr.m else np.zeros((self.m, d, d), complex)
                self.blocks.append(("psd", con, d, coef, offset, d * d))
                offset += d * d
            else:
                coef = con.expr.coef if con.expr.m else np.zeros(self.m)
                self.blocks.append(("nonneg", con, 1, coef, offset, 1))
                offset += 1
        self.size = offset

    def pack(self, x, duals) -> np.ndarray:
        z = np.zeros(self.size)
        z[: self.m] = x
        for kind, con, d, _, off, n in self.blocks:
            val = duals[con.label]
            z[off:off + n] = _params(np.asarray(val, dtype=complex)) if kind == "psd" else float(val)
        return z

    def unpack(self, z):
        x = z[: self.m].copy()
        duals = {}
        for kind, con, d, _, off, n in self.blocks:
            duals[con.label] = _from_params(z[off:off + n], d) if kind == "psd" else float(z[off])
        return x, duals

    def residual_and_jacobian(self, z):
        x, duals = self.unpack(z)
        m = self.m
        f = np.zeros(self.size)
        jac = np.zeros((self.size, self.size))
        stat = self.q.astype(float).copy()
        for kind, con, d, coef, off, n in self.blocks:
            dual = duals[con.label]
            if kind == "psd":
                s = con.expr.value(x)
                stat -= np.real(np.einsum("ab,mba->m", dual, coef))
                basis = _basis(d)
                jac[:m, off:off + n] = -np.real(np.einsum("bij,kji->kb", basis, coef))
                f[off:off + n] = _params(s @ dual + dual @ s)
                jac[off:off + n, :m] = _params(coef @ dual + dual @ coef).T
                jac[off:off + n, off:off + n] = _params(s @ basis + basis @ s).T
            else:
                s = con.expr.value(x)
                stat -= dual * coef
                jac[:m, off] = -coef
                f[off] = 2.0 * s * dual
                jac[off, :m] = 2.0 * dual * coef
                jac[off, off] = 2.0 * s
        f[:m] = stat
        return f, jac


def newton_iterates(problem: SdpProblem, x, duals, steps: int = 4, merit=None, max_halvings: int = 12):
    """Yield (x, duals) after each scaled Newton step; the caller keeps whichever checks out best.

    With ``merit`` (a callable on (x, duals), smaller is better) each step is halved
    until the merit improves; full steps from a point far from strict complementarity
    otherwise leave the primal cone. Iteration stops when no step length helps.
    """
    sysm = _System(problem)
    z = sysm.pack(x, duals)
    current = merit(*sysm.unpack(z)) if merit is not None else None
    for _ in range(steps):
        f, jac = sysm.residual_and_jacobian(z)
        # unknowns and equations live on wildly different scales; equilibrate before every solve
        col = np.maximum(np.abs(z), 1e-300)
        js = jac * col[None, :]
        row = np.linalg.norm(js, axis=1)
        row = np.where(row > 0, row, 1.0)
        try:
            step = np.linalg.lstsq(js / row[:, None], -f / row, rcond=1e-14)[0]
        except np.linalg.LinAlgError:
            return
        if merit is None:
            z = z + col * step
            if not np.all(np.isfinite(z)):
                return
            yield sysm.unpack(z)
            continue
        alpha = 1.0
        for _ in range(max_halvings + 1):
            cand = z + alpha * col * step
            if np.all(np.isfinite(cand)):
                value = merit(*sysm.unpack(cand))
                if value < current:
                    break
            alpha /= 2.0
        else:
            return
        z, current = cand, value
        yield sysm.unpack(z)
