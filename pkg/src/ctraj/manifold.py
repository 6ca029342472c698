"""Matrix Lie group algebra for SO(3), SE(3), SO(3)xR^3 and R^d.

Every group method is vectorised over leading batch dimensions, so
``SE3.exp(xi)`` accepts ``xi`` of shape ``(..., 6)`` and returns ``(..., 4, 4)``.

Conventions
-----------
* Perturbations live in the *left* tangent space: ``g' = Exp(delta) @ g``.
* SE(3) tangent ordering is ``[translation; rotation]`` (``[rho; phi]``).
* ``ad(xi)`` is the small adjoint (``xi^`` curly-wedge), ``Ad(g)`` the adjoint.
* ``J_l(xi)`` satisfies ``Exp(xi + d) ~= Exp(J_l(xi) d) Exp(xi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AngleAtBoundary

# closed form -> Taylor switch for the well-conditioned coefficients
SMALL_ANGLE = 1e-6
# coefficients like (t - sin t)/t^3 cancel catastrophically well above 1e-6
SERIES_ANGLE = 0.5
PI_GUARD = 1e-9


# ---------------------------------------------------------------------------
# scalar coefficient helpers (vectorised over theta)
# ---------------------------------------------------------------------------

def _series(theta2, coeffs):
    out = np.zeros_like(theta2)
    for c in reversed(coeffs):
        out = out * theta2 + c
    return out


def _fact(n):
    return float(math.factorial(n))


_C1 = [(-1) ** n / _fact(2 * n + 3) for n in range(7)]          # (t - sin t)/t^3
_C2 = [(-1) ** n / _fact(2 * n + 4) for n in range(7)]          # (t^2 + 2cos t - 2)/(2t^4)
_C3 = [(-1) ** n * (n + 1) / _fact(2 * n + 5) for n in range(7)]  # (2t - 3sin t + t cos t)/(2t^5)
_E = [1 / 12, 1 / 720, 1 / 30240, 1 / 1209600, 1 / 47900160,
      691 / 1307674368000, 1 / 74724249600]                      # (1 - (t/2)cot(t/2))/t^2


def _coeff_a(theta):
    """sin(t)/t"""
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    return np.where(small, 1.0 - theta ** 2 / 6.0 + theta ** 4 / 120.0, np.sin(t) / t)


def _coeff_b(theta):
    """(1 - cos t)/t^2, written as 2 sin^2(t/2)/t^2 to avoid cancellation."""
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    s = np.sin(0.5 * t) / t
    return np.where(small, 0.5 - theta ** 2 / 24.0 + theta ** 4 / 720.0, 2.0 * s * s)


def _coeff_c(theta):
    """(t - sin t)/t^3"""
    small = theta < SERIES_ANGLE
    t = np.where(small, 1.0, theta)
    return np.where(small, _series(theta ** 2, _C1), (t - np.sin(t)) / t ** 3)


def _coeff_e(theta):
    """(1 - (t/2) cot(t/2))/t^2, the J_l^{-1} quadratic coefficient."""
    small = theta < SERIES_ANGLE
    t = np.where(small, 1.0, theta)
    closed = (1.0 - 0.5 * t * np.cos(0.5 * t) / np.sin(0.5 * t)) / t ** 2
    return np.where(small, _series(theta ** 2, _E), closed)


def _coeff_q2(theta):
    small = theta < SERIES_ANGLE
    t = np.where(small, 1.0, theta)
    return np.where(small, _series(theta ** 2, _C2), (t * t + 2.0 * np.cos(t) - 2.0) / (2.0 * t ** 4))


def _coeff_q3(theta):
    small = theta < SERIES_ANGLE
    t = np.where(small, 1.0, theta)
    closed = (2.0 * t - 3.0 * np.sin(t) + t * np.cos(t)) / (2.0 * t ** 5)
    return np.where(small, _series(theta ** 2, _C3), closed)


# ---------------------------------------------------------------------------
# so(3) primitives
# ---------------------------------------------------------------------------

def skew(v: np.ndarray) -> np.ndarray:
    """Hat operator R^3 -> so(3), batched over leading dims."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(m: np.ndarray) -> np.ndarray:
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def _eye(n, batch):
    return np.broadcast_to(np.eye(n), batch + (n, n)).copy()


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def so3_exp(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = _norm(phi)
    W = skew(phi)
    a = _coeff_a(theta)[..., None, None]
    b = _coeff_b(theta)[..., None, None]
    return _eye(3, phi.shape[:-1]) + a * W + b * (W @ W)


def so3_log(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    w = vee(R - np.swapaxes(R, -1, -2))  # 2 sin(t) axis
    s = 0.5 * _norm(w)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    if np.any(theta > math.pi - PI_GUARD):
        raise AngleAtBoundary("rotation angle within 1e-9 of pi; logarithm is ambiguous")
    small = theta < SMALL_ANGLE
    t = np.where(small, 1.0, theta)
    scale = np.where(small, 0.5 + theta ** 2 / 12.0, 0.5 * t / np.where(small, 1.0, np.sin(t)))
    phi = scale[..., None] * w
    # near pi the antisymmetric part is tiny; recover the axis from the symmetric part
    far = c < -0.9
    if np.any(far):
        Rf = R[far]
        tf = theta[far]
        cf = c[far]
        Bm = 0.5 * (Rf + np.swapaxes(Rf, -1, -2)) - cf[:, None, None] * np.eye(3)
        Bm = Bm / (1.0 - cf)[:, None, None]  # = a a^T
        col = np.argmax(np.diagonal(Bm, axis1=-2, axis2=-1), axis=-1)
        axis = Bm[np.arange(len(col)), :, col]
        axis = axis / _norm(axis)[:, None]
        sign = np.sign(np.sum(axis * w[far], axis=-1))
        sign = np.where(sign == 0, 1.0, sign)
        phi[far] = (sign * tf)[:, None] * axis
    return phi


def so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = _norm(phi)
    W = skew(phi)
    b = _coeff_b(theta)[..., None, None]
    c = _coeff_c(theta)[..., None, None]
    return _eye(3, phi.shape[:-1]) + b * W + c * (W @ W)


def so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = _norm(phi)
    W = skew(phi)
    e = _coeff_e(theta)[..., None, None]
    return _eye(3, phi.shape[:-1]) - 0.5 * W + e * (W @ W)


def _se3_q(rho, phi):
    """Off-diagonal block of the SE(3) left Jacobian."""
    theta = _norm(phi)
    P = skew(phi)
    Rh = skew(rho)
    PR = P @ Rh
    RP = Rh @ P
    PRP = PR @ P
    c1 = _coeff_c(theta)[..., None, None]
    c2 = _coeff_q2(theta)[..., None, None]
    c3 = _coeff_q3(theta)[..., None, None]
    return (0.5 * Rh + c1 * (PR + RP + PRP)
            + c2 * (P @ PR + RP @ P - 3.0 * PRP)
            + c3 * (PRP @ P + P @ PRP))


# ---------------------------------------------------------------------------
# group classes
# ---------------------------------------------------------------------------

class LieGroup:
    """Interface shared by the concrete groups; all methods are batched."""

    tag: str = ""
    dim: int = 0
    #: trailing shape of one group element
    element_shape: tuple = ()

    def identity(self, batch=()) -> np.ndarray:
        raise NotImplementedError

    def exp(self, xi): raise NotImplementedError
    def log(self, g): raise NotImplementedError
    def compose(self, a, b): raise NotImplementedError
    def inverse(self, g): raise NotImplementedError
    def adjoint(self, g): raise NotImplementedError
    def ad(self, xi): raise NotImplementedError
    def left_jacobian(self, xi): raise NotImplementedError
    def left_jacobian_inv(self, xi): raise NotImplementedError

    def right_jacobian(self, xi):
        return self.left_jacobian(-np.asarray(xi, dtype=float))

    def right_jacobian_inv(self, xi):
        return self.left_jacobian_inv(-np.asarray(xi, dtype=float))

    def between(self, a, b):
        """``Log(a @ b^-1)``, the left-difference used throughout."""
        return self.log(self.compose(a, self.inverse(b)))

    def retract(self, g, delta):
        return self.compose(self.exp(delta), g)

    def normalize(self, g):
        return np.asarray(g, dtype=float)

    def random(self, rng: np.random.Generator, batch=(), scale: float = 1.0):
        return self.exp(scale * rng.standard_normal(tuple(batch) + (self.dim,)))

    @property
    def is_abelian(self) -> bool:
        return False

    def __repr__(self) -> str:
        return self.tag

    def __eq__(self, other) -> bool:
        return isinstance(other, LieGroup) and self.tag == other.tag

    def __hash__(self) -> int:
        return hash(self.tag)


def _orthonormalize(R):
    U, _, Vt = np.linalg.svd(R)
    d = np.sign(np.linalg.det(U @ Vt))
    U = U.copy()
    U[..., :, -1] *= d[..., None]
    return U @ Vt


class _SO3(LieGroup):
    tag = "SO3"
    dim = 3
    element_shape = (3, 3)

    def identity(self, batch=()):
        return _eye(3, tuple(batch))

    def exp(self, xi):
        return so3_exp(xi)

    def log(self, g):
        return so3_log(g)

    def compose(self, a, b):
        return np.asarray(a) @ np.asarray(b)

    def inverse(self, g):
        return np.swapaxes(np.asarray(g), -1, -2)

    def adjoint(self, g):
        return np.array(g, dtype=float)

    def ad(self, xi):
        return skew(xi)

    def left_jacobian(self, xi):
        return so3_left_jacobian(xi)

    def left_jacobian_inv(self, xi):
        return so3_left_jacobian_inv(xi)

    def normalize(self, g):
        return _orthonormalize(np.asarray(g, dtype=float))


class _SE3(LieGroup):
    tag = "SE3"
    dim = 6
    element_shape = (4, 4)

    def identity(self, batch=()):
        return _eye(4, tuple(batch))

    def exp(self, xi):
        xi = np.asarray(xi, dtype=float)
        rho, phi = xi[..., :3], xi[..., 3:]
        out = np.zeros(xi.shape[:-1] + (4, 4))
        out[..., :3, :3] = so3_exp(phi)
        out[..., :3, 3] = np.einsum("...ij,...j->...i", so3_left_jacobian(phi), rho)
        out[..., 3, 3] = 1.0
        return out

    def log(self, g):
        g = np.asarray(g, dtype=float)
        phi = so3_log(g[..., :3, :3])
        rho = np.einsum("...ij,...j->...i", so3_left_jacobian_inv(phi), g[..., :3, 3])
        return np.concatenate([rho, phi], axis=-1)

    def compose(self, a, b):
        return np.asarray(a) @ np.asarray(b)

    def inverse(self, g):
        g = np.asarray(g, dtype=float)
        out = np.zeros_like(g)
        Rt = np.swapaxes(g[..., :3, :3], -1, -2)
        out[..., :3, :3] = Rt
        out[..., :3, 3] = -np.einsum("...ij,...j->...i", Rt, g[..., :3, 3])
        out[..., 3, 3] = 1.0
        return out

    def adjoint(self, g):
        g = np.asarray(g, dtype=float)
        R = g[..., :3, :3]
        out = np.zeros(g.shape[:-2] + (6, 6))
        out[..., :3, :3] = R
        out[..., 3:, 3:] = R
        out[..., :3, 3:] = skew(g[..., :3, 3]) @ R
        return out

    def ad(self, xi):
        xi = np.asarray(xi, dtype=float)
        P = skew(xi[..., 3:])
        out = np.zeros(xi.shape[:-1] + (6, 6))
        out[..., :3, :3] = P
        out[..., 3:, 3:] = P
        out[..., :3, 3:] = skew(xi[..., :3])
        return out

    def left_jacobian(self, xi):
        xi = np.asarray(xi, dtype=float)
        J = so3_left_jacobian(xi[..., 3:])
        out = np.zeros(xi.shape[:-1] + (6, 6))
        out[..., :3, :3] = J
        out[..., 3:, 3:] = J
        out[..., :3, 3:] = _se3_q(xi[..., :3], xi[..., 3:])
        return out

    def left_jacobian_inv(self, xi):
        xi = np.asarray(xi, dtype=float)
        Ji = so3_left_jacobian_inv(xi[..., 3:])
        Q = _se3_q(xi[..., :3], xi[..., 3:])
        out = np.zeros(xi.shape[:-1] + (6, 6))
        out[..., :3, :3] = Ji
        out[..., 3:, 3:] = Ji
        out[..., :3, 3:] = -Ji @ Q @ Ji
        return out

    def normalize(self, g):
        g = np.array(g, dtype=float)
        g[..., :3, :3] = _orthonormalize(g[..., :3, :3])
        g[..., 3, :3] = 0.0
        g[..., 3, 3] = 1.0
        return g


class _SO3xR3(LieGroup):
    """Direct product of SO(3) and R^3, stored as ``[[R, p], [0, 1]]``.

    The storage reuses the homogeneous layout but composition is the product
    rule ``(R1 R2, p1 + p2)``; tangent ordering is ``[p; phi]``.
    """

    tag = "SO3xR3"
    dim = 6
    element_shape = (4, 4)

    def identity(self, batch=()):
        return _eye(4, tuple(batch))

    def exp(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1] + (4, 4))
        out[..., :3, :3] = so3_exp(xi[..., 3:])
        out[..., :3, 3] = xi[..., :3]
        out[..., 3, 3] = 1.0
        return out

    def log(self, g):
        g = np.asarray(g, dtype=float)
        return np.concatenate([g[..., :3, 3], so3_log(g[..., :3, :3])], axis=-1)

    def compose(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        out[..., :3, :3] = a[..., :3, :3] @ b[..., :3, :3]
        out[..., :3, 3] = a[..., :3, 3] + b[..., :3, 3]
        out[..., 3, 3] = 1.0
        return out

    def inverse(self, g):
        g = np.asarray(g, dtype=float)
        out = np.zeros_like(g)
        out[..., :3, :3] = np.swapaxes(g[..., :3, :3], -1, -2)
        out[..., :3, 3] = -g[..., :3, 3]
        out[..., 3, 3] = 1.0
        return out

    def adjoint(self, g):
        g = np.asarray(g, dtype=float)
        out = np.zeros(g.shape[:-2] + (6, 6))
        out[..., :3, :3] = np.eye(3)
        out[..., 3:, 3:] = g[..., :3, :3]
        return out

    def ad(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1] + (6, 6))
        out[..., 3:, 3:] = skew(xi[..., 3:])
        return out

    def left_jacobian(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1] + (6, 6))
        out[..., :3, :3] = np.eye(3)
        out[..., 3:, 3:] = so3_left_jacobian(xi[..., 3:])
        return out

    def left_jacobian_inv(self, xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1] + (6, 6))
        out[..., :3, :3] = np.eye(3)
        out[..., 3:, 3:] = so3_left_jacobian_inv(xi[..., 3:])
        return out

    def normalize(self, g):
        g = np.array(g, dtype=float)
        g[..., :3, :3] = _orthonormalize(g[..., :3, :3])
        g[..., 3, :3] = 0.0
        g[..., 3, 3] = 1.0
        return g


class Euclidean(LieGroup):
    """R^d under addition; every map reduces to identity or addition."""

    element_shape: tuple

    def __init__(self, d: int):
        if int(d) < 1:
            raise ValueError("Euclidean dimension must be >= 1")
        self.dim = int(d)
        self.tag = f"R{self.dim}"
        self.element_shape = (self.dim,)

    def identity(self, batch=()):
        return np.zeros(tuple(batch) + (self.dim,))

    def exp(self, xi):
        return np.array(xi, dtype=float)

    def log(self, g):
        return np.array(g, dtype=float)

    def compose(self, a, b):
        return np.asarray(a, dtype=float) + np.asarray(b, dtype=float)

    def inverse(self, g):
        return -np.asarray(g, dtype=float)

    def between(self, a, b):
        return np.asarray(a, dtype=float) - np.asarray(b, dtype=float)

    def retract(self, g, delta):
        return np.asarray(g, dtype=float) + np.asarray(delta, dtype=float)

    def adjoint(self, g):
        g = np.asarray(g)
        return _eye(self.dim, g.shape[:-1])

    def ad(self, xi):
        xi = np.asarray(xi)
        return np.zeros(xi.shape[:-1] + (self.dim, self.dim))

    def left_jacobian(self, xi):
        return _eye(self.dim, np.asarray(xi).shape[:-1])

    left_jacobian_inv = left_jacobian
    right_jacobian = left_jacobian
    right_jacobian_inv = left_jacobian

    @property
    def is_abelian(self) -> bool:
        return True


SO3 = _SO3()
SE3 = _SE3()
SO3xR3 = _SO3xR3()


def group_from_tag(tag: str) -> LieGroup:
    """Look up a group by its tag (``SO3``, ``SE3``, ``SO3xR3``, ``R<d>``)."""
    if tag == "SO3":
        return SO3
    if tag == "SE3":
        return SE3
    if tag == "SO3xR3":
        return SO3xR3
    if tag.startswith("R") and tag[1:].isdigit():
        return Euclidean(int(tag[1:]))
    raise ValueError(f"unknown group tag {tag!r}")


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifoldElement:
    """A single group element; rotation blocks are re-orthonormalised."""

    group: LieGroup
    value: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = self.group.normalize(np.asarray(self.value, dtype=float))
        if v.shape != self.group.element_shape:
            raise ValueError(f"{self.group} element must have shape {self.group.element_shape}")
        v.setflags(write=False)
        object.__setattr__(self, "value", v)

    def __matmul__(self, other: "ManifoldElement") -> "ManifoldElement":
        return ManifoldElement(self.group, self.group.compose(self.value, other.value))

    def inverse(self) -> "ManifoldElement":
        return ManifoldElement(self.group, self.group.inverse(self.value))

    def log(self) -> np.ndarray:
        return self.group.log(self.value)

    def adjoint(self) -> np.ndarray:
        return self.group.adjoint(self.value)

    @classmethod
    def exp(cls, group: LieGroup, xi) -> "ManifoldElement":
        return cls(group, group.exp(np.asarray(xi, dtype=float)))

    @classmethod
    def identity(cls, group: LieGroup) -> "ManifoldElement":
        return cls(group, group.identity())


@dataclass
class KinematicState:
    """``{g, g_dot, g_ddot}`` with derivatives in left-tangent coordinates.

    ``acc`` is ``None`` for white-noise-on-acceleration states.
    """

    group: LieGroup
    g: np.ndarray
    vel: np.ndarray
    acc: Optional[np.ndarray] = None

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        self.vel = np.asarray(self.vel, dtype=float)
        if self.acc is not None:
            self.acc = np.asarray(self.acc, dtype=float)

    def as_vector(self) -> np.ndarray:
        """Stacked ``[g; vel; acc]``; only meaningful on Euclidean groups."""
        parts = [np.atleast_1d(self.group.log(self.g)), self.vel]
        if self.acc is not None:
            parts.append(self.acc)
        return np.concatenate(parts)


# functional aliases mirroring the algebra vocabulary

def exp(group: LieGroup, xi) -> np.ndarray:
    return group.exp(xi)


def log(group: LieGroup, g) -> np.ndarray:
    return group.log(g)


def adjoint(group: LieGroup, g) -> np.ndarray:
    return group.adjoint(g)


def small_adjoint(group: LieGroup, xi) -> np.ndarray:
    return group.ad(xi)


def left_jacobian(group: LieGroup, xi) -> np.ndarray:
    return group.left_jacobian(xi)


def left_jacobian_inv(group: LieGroup, xi) -> np.ndarray:
    return group.left_jacobian_inv(xi)


def right_jacobian(group: LieGroup, xi) -> np.ndarray:
    return group.right_jacobian(xi)


def right_jacobian_inv(group: LieGroup, xi) -> np.ndarray:
    return group.right_jacobian_inv(xi)
