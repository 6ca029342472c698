"""Uniform B-spline trajectories on vector spaces and Lie groups.

Knots are ``t_m = knot_start + (m - 1) * knot_period`` for ``m = 1..N+k``
and a spline of order ``k`` with ``N`` control points is evaluated on
``[t_k, t_{N+1}]``.  Segment ``i`` (zero based) is blended from control points
``i .. i+k-1`` with the cumulative basis ``b(u) = C_tilde @ mu(u)``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .errors import OutOfDomain, UnsupportedOrder
from .manifold import Euclidean, KinematicState, LieGroup
from .trajectory import TrajSample

MAX_ORDER = 12
_TIME_EPS = 1e-12
_KNOT_SNAP = 64 * np.finfo(float).eps


# ---------------------------------------------------------------------------
# blending matrices
# ---------------------------------------------------------------------------

def _padd(a, b):
    n = max(len(a), len(b))
    return [(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)]


def _pmul_linear(p, c0, c1):
    """``(c0 + c1 x) * p(x)`` with coefficient lists in ascending powers."""
    out = [Fraction(0)] * (len(p) + 1)
    for i, c in enumerate(p):
        out[i] += c0 * c
        out[i + 1] += c1 * c
    return out


def _basis_on_last_interval(k: int) -> list[list[Fraction]]:
    """Polynomials (in ``x``) of ``N_{j,k}``, ``j = 0..k-1``, on ``[k-1, k]``.

    Uses the Cox--de Boor recurrence on integer knots, tracking every
    function piecewise as ``{interval_start: coefficients}``.
    """
    # order-1 pieces: N_{i,1} = 1 on [i, i+1)
    pieces = {i: {i: [Fraction(1)]} for i in range(2 * k)}
    for p in range(2, k + 1):
        nxt = {}
        for i in range(2 * k - p + 1):
            f = {}
            den = Fraction(1, p - 1)
            # (x - i)/(p-1) N_{i,p-1}
            for a, poly in pieces[i].items():
                f[a] = _padd(f.get(a, []), _pmul_linear(poly, -i * den, den))
            # (i + p - x)/(p-1) N_{i+1,p-1}
            for a, poly in pieces[i + 1].items():
                f[a] = _padd(f.get(a, []), _pmul_linear(poly, (i + p) * den, -den))
            nxt[i] = f
        pieces = nxt
    return [pieces[j].get(k - 1, [Fraction(0)]) for j in range(k)]


def _shift(poly: list[Fraction], c: int) -> list[Fraction]:
    """Coefficients of ``poly(u + c)`` in powers of ``u``."""
    out = [Fraction(0)] * len(poly)
    for n, a in enumerate(poly):
        # (u + c)^n
        binom = 1
        for r in range(n + 1):
            out[r] += a * binom * Fraction(c) ** (n - r)
            binom = binom * (n - r) // (r + 1)
    return out


@functools.lru_cache(maxsize=None)
def basis_matrix_exact(k: int) -> tuple[tuple[Fraction, ...], ...]:
    """``M[j, n]``: coefficient of ``u^n`` in the weight of control point ``i+j``."""
    if not 2 <= k <= MAX_ORDER:
        raise UnsupportedOrder(f"spline order must be in [2, {MAX_ORDER}], got {k}")
    polys = _basis_on_last_interval(k)
    rows = []
    for j in range(k):
        # on integer knots the segment [k-1, k] is covered by N_0..N_{k-1},
        # and N_j carries control point j of the window
        shifted = _shift(polys[j], k - 1)
        shifted += [Fraction(0)] * (k - len(shifted))
        rows.append(tuple(shifted[:k]))
    return tuple(rows)


@functools.lru_cache(maxsize=None)
def _blending_cached(k: int) -> np.ndarray:
    M = basis_matrix_exact(k)
    C = []
    for j in range(k):
        C.append([sum((M[l][n] for l in range(j, k)), Fraction(0)) for n in range(k)])
    out = np.array([[float(c) for c in row] for row in C])
    out.setflags(write=False)
    return out


def blending_matrix(k: int) -> np.ndarray:
    """Cumulative blending matrix ``C_tilde`` (``k x k``), cached per order."""
    if not 2 <= int(k) <= MAX_ORDER:
        raise UnsupportedOrder(f"spline order must be in [2, {MAX_ORDER}], got {k}")
    return _blending_cached(int(k))


def basis_matrix(k: int) -> np.ndarray:
    return np.array([[float(c) for c in row] for row in basis_matrix_exact(int(k))])


def _mu(u: np.ndarray, k: int, deriv: int) -> np.ndarray:
    """Rows ``d^deriv/du^deriv [1, u, ..., u^(k-1)]``, shape ``(n, k)``."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape + (k,))
    for p in range(deriv, k):
        coef = 1.0
        for r in range(deriv):
            coef *= p - r
        out[..., p] = coef * u ** (p - deriv)
    return out


def cumulative_basis(u, k: int, deriv: int = 0) -> np.ndarray:
    """``b(u)`` (or its ``u`` derivative), shape ``(n, k)``.

    At ``u = 1`` the first ``k - 2`` derivatives are taken from the start of the
    next segment, ``b_j(1) = b_{j-1}(0)``, which is exact in floating point; the
    control point leaving the window then gets an exactly zero weight.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    C = blending_matrix(k)
    b = _mu(u, k, deriv) @ C.T
    if deriv <= k - 2:
        at_end = u == 1.0
        if np.any(at_end):
            b[at_end, 0] = 1.0 if deriv == 0 else 0.0
            b[at_end, 1:] = math.factorial(deriv) * C[:-1, deriv]
    return b


# ---------------------------------------------------------------------------
# trajectory
# ---------------------------------------------------------------------------

def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


@dataclass(frozen=True)
class SplineTrajectory:
    group: LieGroup
    k: int
    knot_start: float
    knot_period: float
    ctrl: np.ndarray

    def __post_init__(self):
        if not 2 <= int(self.k) <= MAX_ORDER:
            raise UnsupportedOrder(f"spline order must be in [2, {MAX_ORDER}], got {self.k}")
        if not self.knot_period > 0:
            raise ValueError("knot period must be positive")
        ctrl = np.asarray(self.ctrl, dtype=float)
        if ctrl.shape[1:] != self.group.element_shape or ctrl.shape[0] < self.k:
            raise ValueError("need at least k control points of the group's element shape")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "knot_start", float(self.knot_start))
        object.__setattr__(self, "knot_period", float(self.knot_period))
        object.__setattr__(self, "ctrl", ctrl)

    # -- construction ------------------------------------------------------
    @classmethod
    def covering(cls, group: LieGroup, k: int, t0: float, t1: float, knot_period: float,
                 ctrl=None) -> "SplineTrajectory":
        """Smallest spline whose domain covers ``[t0, t1]`` with the domain starting at ``t0``."""
        segments = max(1, int(np.ceil((t1 - t0) / knot_period - 1e-9)))
        N = segments + k - 1
        knot_start = t0 - (k - 1) * knot_period
        if ctrl is None:
            ctrl = group.identity((N,))
        return cls(group, k, knot_start, knot_period, ctrl)

    def knot(self, m) -> np.ndarray:
        """1-based knot times ``t_m``."""
        return self.knot_start + (np.asarray(m, dtype=float) - 1.0) * self.knot_period

    def greville(self) -> np.ndarray:
        """Greville abscissae: mean of the interior knots of each basis function."""
        N, k = self.num_blocks, self.k
        i = np.arange(1, N + 1)
        return self.knot_start + self.knot_period * (i - 1 + 0.5 * k)

    # -- contract ----------------------------------------------------------
    @property
    def num_blocks(self) -> int:
        return self.ctrl.shape[0]

    @property
    def num_segments(self) -> int:
        return self.num_blocks - self.k + 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knot(self.k)), float(self.knot(self.num_blocks + 1))

    @property
    def block_dim(self) -> int:
        return self.group.dim

    @property
    def num_floats(self) -> int:
        return self.num_blocks * self.block_dim

    def retract(self, delta: np.ndarray) -> "SplineTrajectory":
        delta = np.asarray(delta, dtype=float).reshape(self.num_blocks, self.block_dim)
        return replace(self, ctrl=self.group.retract(self.ctrl, delta))

    def locate(self, t):
        """Segment index ``i`` and ``u in (0, 1]`` (``u = 0`` only at the left edge)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = self.domain
        if np.any(t < lo - _TIME_EPS) or np.any(t > hi + _TIME_EPS):
            raise OutOfDomain(f"query outside spline domain [{lo}, {hi}]")
        s = (t - lo) / self.knot_period
        # queries within roundoff of a knot land exactly on it
        nearest = np.round(s)
        s = np.where(np.abs(s - nearest) <= _KNOT_SNAP * np.maximum(1.0, np.abs(s)), nearest, s)
        i = np.clip(np.ceil(s) - 1, 0, self.num_segments - 1).astype(int)
        u = np.clip(s - i, 0.0, 1.0)
        return i, u

    # -- vector evaluation -------------------------------------------------
    def weights(self, u, deriv: int = 0) -> np.ndarray:
        """Per-control-point weights ``b_j - b_{j+1}``, shape ``(n, k)``."""
        b = cumulative_basis(u, self.k, deriv)
        w = b.copy()
        w[:, :-1] -= b[:, 1:]
        return w / self.knot_period ** deriv

    def eval_vector(self, t, deriv: int = 0) -> np.ndarray:
        if not isinstance(self.group, Euclidean):
            raise TypeError("eval_vector needs a Euclidean spline")
        if deriv not in (0, 1, 2):
            raise ValueError("deriv must be 0, 1 or 2")
        i, u = self.locate(t)
        w = self.weights(u, deriv)
        win = self.ctrl[i[:, None] + np.arange(self.k)]  # (n, k, d)
        return np.einsum("nj,njd->nd", w, win)

    # -- Lie evaluation ----------------------------------------------------
    def sample(self, times, jacobians: bool = False, force_lie: bool = False) -> TrajSample:
        G, k, d = self.group, self.k, self.group.dim
        i, u = self.locate(times)
        n = i.size
        idx = i[:, None] + np.arange(k)
        if isinstance(G, Euclidean) and not force_lie:
            win = self.ctrl[idx]
            vals = [np.einsum("nj,njd->nd", self.weights(u, r), win) for r in range(3)]
            out = TrajSample(vals[0], vals[1], vals[2], idx)
            if jacobians:
                jac = np.zeros((n, 3, d, k, d))
                for r in range(3):
                    jac[:, r] = self.weights(u, r)[:, None, :, None] * np.eye(d)[None, :, None, :]
                out.jac = jac.reshape(n, 3 * d, k, d)
            return out

        b = cumulative_basis(u, k, 0)
        bd = cumulative_basis(u, k, 1) / self.knot_period
        bdd = cumulative_basis(u, k, 2) / self.knot_period ** 2
        win = self.ctrl[idx]  # (n, k, ...)
        inv_prev = G.inverse(win[:, :-1])
        Om = G.log(G.compose(inv_prev, win[:, 1:]))  # (n, k-1, d)

        g = win[:, 0].copy()
        vel = np.zeros((n, d))
        acc = np.zeros((n, d))
        if jacobians:
            I = np.eye(d)
            Jg = np.zeros((n, k, d, d))
            Jg[:, 0] = I
            Jv = np.zeros((n, k, d, d))
            Ja = np.zeros((n, k, d, d))
            Ad_inv_prev = G.adjoint(inv_prev)  # (n, k-1, d, d)
            Jl_inv_Om = G.left_jacobian_inv(Om)
        for j in range(1, k):
            Oj = Om[:, j - 1]
            bj = b[:, j][:, None]
            Ad = G.adjoint(g)
            step_v = _mv(Ad, bd[:, j][:, None] * Oj)
            step_a = _mv(Ad, bdd[:, j][:, None] * Oj)
            vel_new = vel + step_v
            acc_new = acc - _mv(G.ad(vel_new), vel) + step_a
            if jacobians:
                # dOmega_j / d ctrl[j-1] and / d ctrl[j]
                dOm_prev = -Jl_inv_Om[:, j - 1] @ Ad_inv_prev[:, j - 1]
                dOm_next = Jl_inv_Om[:, j - 1] @ Ad_inv_prev[:, j - 1]
                dA = bj[:, :, None] * G.left_jacobian(bj * Oj)  # dA_j/dOmega
                ad_sv = G.ad(step_v)
                ad_sa = G.ad(step_a)
                ad_vn = G.ad(vel_new)
                ad_vo = G.ad(vel)
                Jg_new = Jg.copy()
                Jv_new = Jv - ad_sv[:, None] @ Jg
                for slot, dOm in ((j - 1, dOm_prev), (j, dOm_next)):
                    Jg_new[:, slot] += Ad @ dA @ dOm
                    Jv_new[:, slot] += bd[:, j][:, None, None] * (Ad @ dOm)
                Ja_new = Ja - ad_vn[:, None] @ Jv + ad_vo[:, None] @ Jv_new - ad_sa[:, None] @ Jg
                for slot, dOm in ((j - 1, dOm_prev), (j, dOm_next)):
                    Ja_new[:, slot] += bdd[:, j][:, None, None] * (Ad @ dOm)
                Jg, Jv, Ja = Jg_new, Jv_new, Ja_new
            g = G.compose(g, G.exp(bj * Oj))
            vel, acc = vel_new, acc_new
        out = TrajSample(g, vel, acc, idx)
        if jacobians:
            jac = np.stack([Jg, Jv, Ja], axis=1)  # (n, 3, k, d, d)
            out.jac = np.transpose(jac, (0, 1, 3, 2, 4)).reshape(n, 3 * d, k, d)
        return out

    def eval_lie(self, t) -> KinematicState:
        s = self.sample([t], force_lie=True)
        return KinematicState(self.group, s.g[0], s.vel[0], s.acc[0])


def eval_vector(t, traj: SplineTrajectory, deriv: int = 0) -> np.ndarray:
    out = traj.eval_vector(np.atleast_1d(t), deriv)
    return out[0] if np.ndim(t) == 0 else out


def eval_lie(t: float, traj: SplineTrajectory) -> KinematicState:
    return traj.eval_lie(t)


def lie_jacobians(t: float, traj: SplineTrajectory) -> dict:
    """Jacobians of ``{g, g_dot, g_ddot}`` at ``t`` keyed by control-point index.

    Control points outside the active window map to zero matrices.
    """
    s = traj.sample([t], jacobians=True, force_lie=True)
    d = traj.group.dim
    out = {}
    for l in range(traj.num_blocks):
        blk = np.zeros((3 * d, d))
        hits = np.nonzero(s.idx[0] == l)[0]
        for h in hits:
            blk += s.jac[0, :, h, :]
        out[l] = {"g": blk[:d], "vel": blk[d:2 * d], "acc": blk[2 * d:]}
    return out
