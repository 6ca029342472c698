"""Normal-equation solves for time-ordered block-banded problems.

The trajectory columns are kept in natural time order, so ``H_tt`` is banded
and factorised with LAPACK's banded Cholesky.  A handful of dense "border"
columns (the constant IMU biases) are eliminated with a Schur complement.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ..errors import RankDeficient


def bandwidth(H: sp.spmatrix) -> int:
    coo = H.tocoo()
    if coo.nnz == 0:
        return 0
    return int(np.max(np.abs(coo.row - coo.col)))


def to_upper_banded(H: sp.spmatrix, u: int) -> np.ndarray:
    """LAPACK upper banded storage ``ab[u + i - j, j] = H[i, j]`` for ``j >= i``."""
    coo = H.tocoo()
    n = H.shape[0]
    ab = np.zeros((u + 1, n))
    keep = coo.col >= coo.row
    ab[u + coo.row[keep] - coo.col[keep], coo.col[keep]] = coo.data[keep]
    return ab


class BandedSolver:
    """Solve ``(H + lam * D) x = b`` with ``D = max(diag(H), min_diag)``.

    ``n_border`` trailing columns are treated as a dense border.
    """

    def __init__(self, H: sp.spmatrix, n_border: int = 0, min_diag: float = 1e-6):
        H = sp.csc_matrix(H)
        n = H.shape[0]
        self.n = n
        self.nt = n - n_border
        self.nb = n_border
        Htt = H[: self.nt, : self.nt]
        self.u = bandwidth(Htt)
        self.ab = to_upper_banded(Htt, self.u)
        self.Htb = H[: self.nt, self.nt:].toarray()
        self.Hbb = H[self.nt:, self.nt:].toarray()
        diag = H.diagonal()
        self.diag = diag
        self.damp_diag = np.maximum(diag, min_diag)

    def _factor(self, lam: float):
        ab = self.ab.copy()
        ab[self.u] += lam * self.damp_diag[: self.nt]
        try:
            cb = scipy.linalg.cholesky_banded(ab, lower=False, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise RankDeficient("normal equations are not positive definite") from exc
        return cb

    def solve(self, b: np.ndarray, lam: float = 0.0) -> np.ndarray:
        cb = self._factor(lam)
        bt = b[: self.nt]
        if self.nb == 0:
            return scipy.linalg.cho_solve_banded((cb, False), bt, check_finite=False)
        X = scipy.linalg.cho_solve_banded((cb, False), np.column_stack([bt, self.Htb]), check_finite=False)
        y, Y = X[:, 0], X[:, 1:]
        S = self.Hbb + lam * np.diag(self.damp_diag[self.nt:]) - self.Htb.T @ Y
        try:
            Lb = scipy.linalg.cho_factor(S, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise RankDeficient("bias Schur complement is not positive definite") from exc
        xb = scipy.linalg.cho_solve(Lb, b[self.nt:] - self.Htb.T @ y, check_finite=False)
        return np.concatenate([y - Y @ xb, xb])

    def check_rank(self, rtol: float = 1e-12) -> None:
        """Raise :class:`RankDeficient` when a pivot collapses relative to its diagonal.

        The undamped factorisation is inspected directly: ``pivot^2 / H_ii``
        measures how much of a direction survives elimination of the earlier
        ones, so a tiny ratio flags an unobservable combination.
        """
        if self.n == 0:
            raise RankDeficient("empty problem")
        if np.any(self.diag <= 0):
            raise RankDeficient("some parameters are not touched by any factor")
        # Jacobi-scale so the pivot test is invariant to parameter units
        s = 1.0 / np.sqrt(self.diag)
        st = s[: self.nt]
        ab = self.ab.copy()
        for r in range(self.u + 1):
            off = self.u - r
            ab[r, off:] *= st[: self.nt - off] * st[off:]
        try:
            cb = scipy.linalg.cholesky_banded(ab, lower=False, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise RankDeficient("normal equations are singular") from exc
        piv = cb[self.u] ** 2
        if np.any(piv < rtol):
            raise RankDeficient(f"pivot ratio {piv.min():.3e} below {rtol:.1e}")
        if self.nb:
            Htb = self.Htb * st[:, None] * s[self.nt:][None, :]
            Y = scipy.linalg.cho_solve_banded((cb, False), Htb, check_finite=False)
            S = self.Hbb * np.outer(s[self.nt:], s[self.nt:]) - Htb.T @ Y
            ev = np.linalg.eigvalsh(0.5 * (S + S.T))
            if ev.min() < rtol:
                raise RankDeficient("bias directions are unobservable")
