"""Domain types and relative kinematics for planar double-integrator agents.

Vectors are plain ``numpy`` arrays of shape ``(2,)``. The relative state of an
agent with respect to a (cubic) reference trajectory carries the moving basis
``p_hat = r / |r|`` and ``q_hat = rdot / |rdot|``; either unit vector is
``None`` when its defining vector vanishes.

Sign convention: on an active Case-I arc ``r . rdot = -a b kappa``, so the
cosine of the angle between ``r`` and ``rdot`` is ``-kappa``. ``kappa`` itself is
always stored as the positive parameter in ``(0, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

Vec2 = np.ndarray


class DomainError(ValueError):
    """Raised when an operation is evaluated outside its domain."""


def vec(x, y=None) -> Vec2:
    """Build a finite 2-vector from two scalars or a length-2 sequence."""
    out = np.array([x, y] if y is not None else x, dtype=float).reshape(2)
    if not np.all(np.isfinite(out)):
        raise DomainError(f"non-finite vector {out!r}")
    return out


def cross(a: Vec2, b: Vec2) -> float:
    """Scalar (z-component) cross product of two planar vectors."""
    return float(a[0] * b[1] - a[1] * b[0])


def norm(a: Vec2) -> float:
    return math.hypot(float(a[0]), float(a[1]))


@dataclass(frozen=True)
class AgentState:
    p: Vec2
    v: Vec2

    def __post_init__(self):
        object.__setattr__(self, "p", vec(self.p))
        object.__setattr__(self, "v", vec(self.v))


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Per-axis cubic ``p_r(t) = c0 + c1 s + c2 s^2 + c3 s^3`` with ``s = t - epoch``.

    ``coeffs`` has shape ``(4, 2)``: row ``k`` holds the ``s^k`` coefficient for
    the x and y axes. The fourth derivative is identically zero.
    """

    coeffs: np.ndarray
    epoch: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (4, 2) or not np.all(np.isfinite(c)):
            raise DomainError(f"reference coefficients must be a finite (4, 2) array, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "epoch", float(self.epoch))

    @classmethod
    def static(cls, point=(0.0, 0.0)) -> "ReferenceTrajectory":
        c = np.zeros((4, 2))
        c[0] = vec(point)
        return cls(c)

    @classmethod
    def from_axes(cls, x, y, epoch: float = 0.0) -> "ReferenceTrajectory":
        """From per-axis coefficient lists ``[c0, c1, c2, c3]``."""
        return cls(np.column_stack([np.asarray(x, float), np.asarray(y, float)]), epoch)

    def position(self, t: float) -> Vec2:
        s = t - self.epoch
        c = self.coeffs
        return c[0] + s * (c[1] + s * (c[2] + s * c[3]))

    def velocity(self, t: float) -> Vec2:
        s = t - self.epoch
        c = self.coeffs
        return c[1] + s * (2.0 * c[2] + 3.0 * s * c[3])

    def acceleration(self, t: float) -> Vec2:
        s = t - self.epoch
        c = self.coeffs
        return 2.0 * c[2] + 6.0 * s * c[3]

    def jerk(self, t: float) -> Vec2:
        return 6.0 * self.coeffs[3]

    def shifted(self, epoch: float) -> "ReferenceTrajectory":
        """Same curve, re-expanded about a new epoch."""
        s = epoch - self.epoch
        c = self.coeffs
        new = np.array([
            self.position(epoch),
            self.velocity(epoch),
            c[2] + 3.0 * s * c[3],
            c[3],
        ])
        return ReferenceTrajectory(new, epoch)


@dataclass(frozen=True)
class RelativeState:
    r: Vec2
    rdot: Vec2
    b: float
    a: float
    p_hat: Optional[Vec2] = field(default=None)
    q_hat: Optional[Vec2] = field(default=None)

    @property
    def basis_defined(self) -> bool:
        return self.p_hat is not None and self.q_hat is not None


@dataclass(frozen=True)
class BarycentricSpec:
    D: float
    kappa: float

    def __post_init__(self):
        if not (self.D > 0.0 and math.isfinite(self.D)):
            raise DomainError(f"aggregation distance must be positive, got D={self.D}")
        if not (0.0 < self.kappa < 1.0):
            raise DomainError(f"kappa must lie in (0, 1), got {self.kappa}")


@dataclass(frozen=True)
class Costates:
    lambda_p: Vec2
    lambda_v: Vec2
    mu: float = 0.0

    def __post_init__(self):
        if self.mu < 0.0:
            raise DomainError("constraint multiplier must be nonnegative")


def make_relative(r: Vec2, rdot: Vec2) -> RelativeState:
    """Relative state from ``r`` and ``rdot`` with the basis filled in where defined."""
    r = np.asarray(r, dtype=float)
    rdot = np.asarray(rdot, dtype=float)
    b = norm(r)
    a = norm(rdot)
    p_hat = r / b if b > 0.0 else None
    q_hat = rdot / a if a > 0.0 else None
    return RelativeState(r, rdot, b, a, p_hat, q_hat)


def relative_state(agent: AgentState, ref: ReferenceTrajectory, t: float) -> RelativeState:
    """Position and velocity of ``agent`` relative to ``ref`` at time ``t``."""
    return make_relative(agent.p - ref.position(t), agent.v - ref.velocity(t))


def beta(rel: RelativeState, spec: BarycentricSpec) -> float:
    """Approach-rate term ``a * b * kappa`` of the barycentric constraint."""
    return rel.a * rel.b * spec.kappa


def junction_gap(u_minus: Vec2, u_plus: Vec2) -> float:
    """Half the squared jump in control across a junction.

    Equals ``0.5|u+|^2 + 0.5|u-|^2 - u+ . u-`` and vanishes iff the control is
    continuous. Evaluated as ``0.5|u+ - u-|^2`` to avoid cancellation.
    """
    d = np.asarray(u_plus, dtype=float) - np.asarray(u_minus, dtype=float)
    return 0.5 * float(d @ d)
