"""Motion primitives: minimum-energy cubic arcs and the two constrained arcs.

Every arc exposes ``position``, ``velocity`` and ``control`` as functions of
absolute time on ``[t_start, t_end]`` and can integrate its own energy.

* :class:`UnconstrainedArc` -- per-axis cubic, affine control.
* :class:`SpiralArc` -- constant relative speed ``a`` and constant radial rate
  ``-a kappa`` about a cubic reference (logarithmic spiral in relative polar
  coordinates).
* :class:`DiskArc` -- uniform circular relative motion at radius ``D``.
* :class:`BrakeArc` -- quartic relative manoeuvre to relative rest, used by the
  in-disk policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .core import DomainError, ReferenceTrajectory, RelativeState, Vec2, make_relative

# Slack on interval membership, relative to the arc duration.
_T_SLACK = 1e-12
QUAD_TOL = 1e-12


class Arc:
    t_start: float
    t_end: float
    mode: str = "arc"

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def _check(self, t: float) -> None:
        slack = _T_SLACK * max(1.0, abs(self.t_end), abs(self.t_start))
        if t < self.t_start - slack or t > self.t_end + slack:
            raise DomainError(f"t={t!r} outside arc interval [{self.t_start!r}, {self.t_end!r}]")

    def position(self, t: float) -> Vec2:
        raise NotImplementedError

    def velocity(self, t: float) -> Vec2:
        raise NotImplementedError

    def control(self, t: float) -> Vec2:
        raise NotImplementedError

    def energy(self, t_lo: float, t_hi: float) -> float:
        self._check(t_lo)
        self._check(t_hi)
        if t_hi < t_lo:
            raise DomainError("energy interval reversed")
        if t_hi == t_lo:
            return 0.0

        def integrand(t):
            u = self.control(min(max(t, self.t_start), self.t_end))
            return 0.5 * float(u @ u)

        val, _ = quad(integrand, t_lo, t_hi, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
        return val


@dataclass(frozen=True)
class UnconstrainedArc(Arc):
    """Cubic position with affine control; ``path`` is expanded about ``t_start``."""

    path: ReferenceTrajectory
    t_start: float
    t_end: float
    mode: str = "unconstrained"

    def position(self, t):
        self._check(t)
        return self.path.position(t)

    def velocity(self, t):
        self._check(t)
        return self.path.velocity(t)

    def control(self, t):
        self._check(t)
        return self.path.acceleration(t)

    def control_rate(self, t) -> Vec2:
        return self.path.jerk(t)

    def energy(self, t_lo, t_hi):
        self._check(t_lo)
        self._check(t_hi)
        if t_hi < t_lo:
            raise DomainError("energy interval reversed")
        # u(s) = u0 + j s with s measured from the path epoch
        u0 = 2.0 * self.path.coeffs[2]
        j = 6.0 * self.path.coeffs[3]

        def prim(s):
            return s * float(u0 @ u0) + s * s * float(u0 @ j) + s**3 * float(j @ j) / 3.0

        e = self.path.epoch
        return 0.5 * (prim(t_hi - e) - prim(t_lo - e))


def solve_unconstrained_bvp(x0, t0: float, x1, t1: float, mode: str = "unconstrained") -> UnconstrainedArc:
    """Minimum-energy cubic joining two double-integrator states.

    Parameters
    ----------
    x0, x1 : AgentState
        Boundary states at ``t0`` and ``t1``.
    t0, t1 : float
        Boundary times, ``t1 > t0``.

    Returns
    -------
    UnconstrainedArc
        The Hermite cubic, which minimizes ``0.5 * int |u|^2`` among all
        connections with the given endpoint positions and velocities.
    """
    T = t1 - t0
    if not T > 0.0:
        raise DomainError(f"BVP needs t1 > t0, got [{t0}, {t1}]")
    p0, v0, p1, v1 = x0.p, x0.v, x1.p, x1.v
    dp = p1 - p0
    c2 = (3.0 * dp - (2.0 * v0 + v1) * T) / T**2
    c3 = (-2.0 * dp + (v0 + v1) * T) / T**3
    path = ReferenceTrajectory(np.array([p0, v0, c2, c3]), epoch=t0)
    return UnconstrainedArc(path, float(t0), float(t1), mode)


def coast_arc(p: Vec2, v: Vec2, ref: ReferenceTrajectory, t_start: float, t_end: float) -> UnconstrainedArc:
    """Relative coast: ``rdot`` held constant, so ``u = p_r''``. Still a cubic."""
    r0 = p - ref.position(t_start)
    rd0 = v - ref.velocity(t_start)
    base = ref.shifted(t_start).coeffs.copy()
    base[0] += r0
    base[1] += rd0
    return UnconstrainedArc(ReferenceTrajectory(base, t_start), float(t_start), float(t_end), "coast")


def _polar(phi: float) -> tuple[Vec2, Vec2]:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([c, s]), np.array([-s, c])


@dataclass(frozen=True)
class SpiralArc(Arc):
    """Case-I constrained arc.

    ``b(t) = b0 - a kappa (t - t_start)`` and the polar angle follows the
    logarithmic-spiral law ``phi = phi0 + s sqrt(1-k^2)/k ln(b0 / b)``. The arc
    may not extend past ``b = D``.
    """

    b0: float
    phi0: float
    a: float
    kappa: float
    chirality: int
    reference: ReferenceTrajectory
    t_start: float
    t_end: float
    D: float
    mode: str = "spiral"

    def __post_init__(self):
        if self.chirality not in (1, -1):
            raise DomainError("chirality must be +1 or -1")
        if not self.a > 0.0:
            raise DomainError(f"spiral speed must be positive, got a={self.a}")
        if not 0.0 < self.kappa < 1.0:
            raise DomainError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not self.b0 > self.D:
            raise DomainError(f"spiral entry radius {self.b0} must exceed D={self.D}")
        if self.t_end < self.t_start:
            raise DomainError("spiral interval reversed")
        b_end = self.b0 - self.a * self.kappa * (self.t_end - self.t_start)
        if b_end < self.D * (1.0 - 1e-12):
            raise DomainError(f"spiral extended past the disk boundary (b={b_end} < D={self.D})")

    @property
    def exit_time(self) -> float:
        """Time at which ``b`` reaches ``D``."""
        return self.t_start + (self.b0 - self.D) / (self.a * self.kappa)

    def radius(self, t: float) -> float:
        return self.b0 - self.a * self.kappa * (t - self.t_start)

    def angle(self, t: float) -> float:
        b = self.radius(t)
        if not b > 0.0:
            raise DomainError("spiral evaluated past collapse")
        k = self.kappa
        return self.phi0 + self.chirality * math.sqrt(1.0 - k * k) / k * math.log(self.b0 / b)

    def relative(self, t: float) -> RelativeState:
        self._check(t)
        b = self.radius(t)
        if not b > 0.0:
            raise DomainError("spiral evaluated past collapse")
        ph, eph = _polar(self.angle(t))
        k, a = self.kappa, self.a
        rdot = -a * k * ph + self.chirality * a * math.sqrt(1.0 - k * k) * eph
        return RelativeState(b * ph, rdot, b, a, ph, rdot / a)

    def relative_accel(self, t: float) -> Vec2:
        self._check(t)
        b = self.radius(t)
        ph, eph = _polar(self.angle(t))
        k, a = self.kappa, self.a
        sq = math.sqrt(1.0 - k * k)
        return (-(a * a) * (1.0 - k * k) / b) * ph - (self.chirality * a * a * k * sq / b) * eph

    def control_rate(self, t: float) -> Vec2:
        """Analytic time derivative of the control."""
        b = self.radius(t)
        ph, eph = _polar(self.angle(t))
        k, a, s = self.kappa, self.a, self.chirality
        sq = math.sqrt(1.0 - k * k)
        A = -(a * a) * (1.0 - k * k) / b
        B = -s * a * a * k * sq / b
        dA = -(a**3) * k * (1.0 - k * k) / b**2
        dB = -s * a**3 * k * k * sq / b**2
        w = s * a * sq / b
        return self.reference.jerk(t) + (dA - B * w) * ph + (dB + A * w) * eph

    def position(self, t):
        return self.reference.position(t) + self.relative(t).r

    def velocity(self, t):
        return self.reference.velocity(t) + self.relative(t).rdot

    def control(self, t):
        return self.reference.acceleration(t) + self.relative_accel(t)


def spiral_propagate(arc: SpiralArc, t: float) -> RelativeState:
    return arc.relative(t)


def spiral_control(arc: SpiralArc, t: float) -> Vec2:
    return arc.control(t)


@dataclass(frozen=True)
class DiskArc(Arc):
    """Uniform circular relative motion at radius ``D`` with angular rate ``s a / D``."""

    D: float
    a: float
    phi0: float
    chirality: int
    reference: ReferenceTrajectory
    t_start: float
    t_end: float
    mode: str = "disk"

    def __post_init__(self):
        if self.chirality not in (1, -1):
            raise DomainError("chirality must be +1 or -1")
        if self.a < 0.0 or not self.D > 0.0:
            raise DomainError("disk arc needs a >= 0 and D > 0")
        if self.t_end < self.t_start:
            raise DomainError("disk interval reversed")

    @property
    def mu(self) -> float:
        """Constant constraint multiplier ``(a / D)^2`` along the arc."""
        return (self.a / self.D) ** 2

    def angle(self, t: float) -> float:
        return self.phi0 + self.chirality * (self.a / self.D) * (t - self.t_start)

    def relative(self, t: float) -> RelativeState:
        self._check(t)
        ph, eph = _polar(self.angle(t))
        rdot = self.chirality * self.a * eph
        q_hat = rdot / self.a if self.a > 0.0 else None
        return RelativeState(self.D * ph, rdot, self.D, self.a, ph, q_hat)

    def relative_accel(self, t: float) -> Vec2:
        self._check(t)
        ph, _ = _polar(self.angle(t))
        return -(self.a**2 / self.D) * ph

    def control_rate(self, t: float) -> Vec2:
        _, eph = _polar(self.angle(t))
        return self.reference.jerk(t) - self.chirality * self.a**3 / self.D**2 * eph

    def position(self, t):
        return self.reference.position(t) + self.relative(t).r

    def velocity(self, t):
        return self.reference.velocity(t) + self.relative(t).rdot

    def control(self, t):
        return self.reference.acceleration(t) + self.relative_accel(t)


def disk_propagate(arc: DiskArc, t: float) -> RelativeState:
    return arc.relative(t)


def disk_control(arc: DiskArc, t: float) -> Vec2:
    return arc.control(t)


@dataclass(frozen=True)
class BrakeArc(Arc):
    """Quartic relative motion ending at relative rest with zero relative acceleration.

    ``rel_coeffs`` has shape ``(5, 2)``, expanded about ``t_start``.
    """

    rel_coeffs: np.ndarray
    reference: ReferenceTrajectory
    t_start: float
    t_end: float
    mode: str = "brake"

    def _rel(self, t, order):
        self._check(t)
        s = t - self.t_start
        c = self.rel_coeffs
        if order == 0:
            return c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * c[4])))
        if order == 1:
            return c[1] + s * (2 * c[2] + s * (3 * c[3] + s * 4 * c[4]))
        return 2 * c[2] + s * (6 * c[3] + s * 12 * c[4])

    def relative(self, t: float) -> RelativeState:
        return make_relative(self._rel(t, 0), self._rel(t, 1))

    def position(self, t):
        return self.reference.position(t) + self._rel(t, 0)

    def velocity(self, t):
        return self.reference.velocity(t) + self._rel(t, 1)

    def control(self, t):
        return self.reference.acceleration(t) + self._rel(t, 2)


def brake_arc(r0: Vec2, rdot0: Vec2, ref: ReferenceTrajectory, t_start: float, T: float,
              rddot0: Vec2 | None = None) -> BrakeArc:
    """Bring relative velocity and acceleration to zero over ``T``.

    With ``rddot0`` given the start matches that relative acceleration (control
    continuity with the preceding arc); otherwise the cubic special case
    ``rddot0 = -2 rdot0 / T`` is used.
    """
    if not T > 0.0:
        raise DomainError("brake duration must be positive")
    r0 = np.asarray(r0, float)
    rd0 = np.asarray(rdot0, float)
    rdd0 = -2.0 * rd0 / T if rddot0 is None else np.asarray(rddot0, float)
    c4 = (rd0 + 0.5 * rdd0 * T) / (2.0 * T**3)
    c3 = -(2.0 / 3.0) * rdd0 / T - rd0 / T**2
    coeffs = np.array([r0, rd0, 0.5 * rdd0, c3, c4])
    return BrakeArc(coeffs, ref, float(t_start), float(t_start + T))


def arc_energy(arc: Arc, t_lo: float, t_hi: float) -> float:
    """``0.5 * int_{t_lo}^{t_hi} |u|^2 dt`` over a sub-interval of ``arc``."""
    return arc.energy(t_lo, t_hi)
