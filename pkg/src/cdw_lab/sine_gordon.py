"""Sine-Gordon kinks and the coupled-pendulum chain they describe.

The chain is a row of pendulums (angle phi_i) joined by torsion springs:

    phi_i'' = omega0^2 (phi_{i+1} - 2 phi_i + phi_{i-1}) - omega1^2 sin(phi_i)

With spacing d and v = omega0 d, the continuum limit in z = omega1 x / v,
tau = omega1 t is phi_tautau - phi_zz + sin(phi) = 0, whose single-kink
solutions are 4 arctan(exp(+-(z + beta tau) / sqrt(1 - beta^2))).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import TWO_PI
from .errors import DivergenceError, GridTooSmallError, InvalidParameterError

PHASE_GUARD = 1e6


@dataclass(frozen=True)
class SolitonSpec:
    beta: float = -0.5
    sign: int = 1

    def __post_init__(self):
        if not abs(self.beta) < 1:
            raise InvalidParameterError(f"|beta| must be < 1, got {self.beta}")
        if self.sign not in (1, -1):
            raise InvalidParameterError(f"sign must be +1 or -1, got {self.sign}")

    @property
    def gamma(self) -> float:
        return float(np.sqrt(1.0 - self.beta**2))


def _argument(z, tau, spec):
    return spec.sign * (np.asarray(z, dtype=float) + spec.beta * np.asarray(tau, dtype=float)) / spec.gamma


def soliton_profile(z, tau, spec: SolitonSpec):
    """4 arctan(exp(u)) with u = sign (z + beta tau) / sqrt(1 - beta^2)."""
    u = _argument(z, tau, spec)
    # 4 arctan(e^u) = 2 pi - 4 arctan(e^-u); use the form that cannot overflow
    return np.where(u > 0, TWO_PI - 4.0 * np.arctan(np.exp(-np.abs(u))), 4.0 * np.arctan(np.exp(-np.abs(u))))


def soliton_rate(z, tau, spec: SolitonSpec):
    """d phi / d tau of the kink: 2 sech(u) * sign beta / gamma."""
    u = _argument(z, tau, spec)
    return 2.0 * spec.sign * spec.beta / (spec.gamma * np.cosh(u))


def to_dimensionless(x, t, omega1, v):
    if not omega1 > 0 or not v > 0:
        raise InvalidParameterError(f"omega1 and v must be positive (omega1={omega1}, v={v})")
    return omega1 * np.asarray(x, dtype=float) / v, omega1 * np.asarray(t, dtype=float)


def from_dimensionless(z, tau, omega1, v):
    if not omega1 > 0 or not v > 0:
        raise InvalidParameterError(f"omega1 and v must be positive (omega1={omega1}, v={v})")
    return v * np.asarray(z, dtype=float) / omega1, np.asarray(tau, dtype=float) / omega1


def sg_residual(phi, hz: float, htau: float):
    """Central-difference residual of phi_tautau - phi_zz + sin(phi) on interior points.

    ``phi`` is sampled as ``phi[k, j] = phi(z_j, tau_k)``. Returns
    ``(max_abs, l2)`` where ``l2`` is the grid-weighted norm
    sqrt(sum r^2 hz htau).
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or min(phi.shape) < 5:
        raise GridTooSmallError(f"need at least 5 points per axis, got shape {phi.shape}")
    if not hz > 0 or not htau > 0:
        raise InvalidParameterError("grid spacings must be positive")
    c = phi[1:-1, 1:-1]
    p_tt = (phi[2:, 1:-1] - 2.0 * c + phi[:-2, 1:-1]) / htau**2
    p_zz = (phi[1:-1, 2:] - 2.0 * c + phi[1:-1, :-2]) / hz**2
    r = p_tt - p_zz + np.sin(c)
    return float(np.abs(r).max()), float(np.sqrt(np.sum(r * r) * hz * htau))


def sample_soliton(spec: SolitonSpec, h: float, z_half: float = 10.0, tau_half: float = 2.0):
    """Kink sampled on a square grid of spacing ``h`` over [-z_half, z_half] x [-tau_half, tau_half]."""
    nz = int(round(2 * z_half / h)) + 1
    nt = int(round(2 * tau_half / h)) + 1
    z = -z_half + h * np.arange(nz)
    tau = -tau_half + h * np.arange(nt)
    return soliton_profile(z[None, :], tau[:, None], spec)


@dataclass(frozen=True)
class PendulumChainParams:
    """Chain constants per unit m l^2.

    ``delta_p``, ``m_e`` and ``l`` are optional physical inputs kept for the
    derived torsion modulus and line density.
    """

    omega0_sq: float
    omega1_sq: float
    d: float = 1.0
    n: int = 200
    delta_p: float | None = None
    m_e: float | None = None
    l: float | None = None

    def __post_init__(self):
        if not self.omega0_sq > 0:
            raise InvalidParameterError(f"omega0_sq must be positive, got {self.omega0_sq}")
        if self.omega1_sq < 0:
            raise InvalidParameterError(f"omega1_sq must be >= 0, got {self.omega1_sq}")
        if not self.d > 0 or self.n < 1:
            raise InvalidParameterError("need d > 0 and at least one pendulum")

    @classmethod
    def from_physical(cls, delta_p, e1, m_e, l, d, n):
        """omega0^2 = Delta'/(m l^2), omega1^2 = E1/(m l^2)."""
        scale = m_e * l * l
        return cls(delta_p / scale, e1 / scale, d, n, delta_p, m_e, l)

    @classmethod
    def from_torsion(cls, eta, rho, l, d, omega1_sq, n):
        """Build from torsion modulus ``eta`` and line density ``rho``."""
        return cls(eta / (rho * l * l * d * d), omega1_sq, d, n, eta / d, rho * d, l)

    @property
    def v_sq(self) -> float:
        return self.omega0_sq * self.d**2

    @property
    def v(self) -> float:
        return float(np.sqrt(self.v_sq))

    @property
    def eta(self) -> float:
        if self.delta_p is None:
            raise InvalidParameterError("torsion modulus needs delta_p")
        return self.delta_p * self.d

    @property
    def rho(self) -> float:
        if self.m_e is None:
            raise InvalidParameterError("line density needs m_e")
        return self.m_e / self.d


def default_dt(params: PendulumChainParams, cfl: float = 0.1) -> float:
    """``cfl`` over the fastest linear mode, sqrt(4 omega0^2 + omega1^2)."""
    return cfl / float(np.sqrt(4.0 * params.omega0_sq + params.omega1_sq))


def _ends(params, clamped, ends):
    if ends is None:
        ends = (0.0, TWO_PI)
    return bool(clamped), float(ends[0]), float(ends[1])


def chain_energy(phases, velocities, params: PendulumChainParams, clamped=True, ends=None) -> float:
    """Kinetic plus gravity plus torsion energy, per unit m l^2."""
    cl, left, right = _ends(params, clamped, ends)
    return float(kernels.backend.chain_energy(np.asarray(phases, float), np.asarray(velocities, float),
                                              params.omega0_sq, params.omega1_sq, cl, left, right))


def pendulum_chain_step(phases, velocities, params: PendulumChainParams, dt: float,
                        clamped=True, ends=None):
    """One velocity-Verlet step; ``ends`` are the clamp angles (default 0 and 2 pi)."""
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    phases = np.asarray(phases, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    if phases.shape != velocities.shape:
        raise InvalidParameterError("phases and velocities must be aligned")
    cl, left, right = _ends(params, clamped, ends)
    phi, vel, _, _, _, fail = kernels.backend.pendulum_run(
        phases, velocities, params.omega0_sq, params.omega1_sq, cl, left, right, dt, 1, 1, PHASE_GUARD
    )
    if fail >= 0:
        raise DivergenceError("pendulum phases left the guarded range", step=0, state=(phases, velocities))
    return phi, vel


@dataclass
class ChainRun:
    t: np.ndarray
    phases: np.ndarray
    energy: np.ndarray
    final_phases: np.ndarray
    final_velocities: np.ndarray
    params: PendulumChainParams

    def centers(self) -> np.ndarray:
        return np.array([kink_center(p, self.params.d) for p in self.phases])

    @property
    def energy_drift(self) -> float:
        return float(np.abs(self.energy / self.energy[0] - 1.0).max())


def run_pendulum_chain(phases, velocities, params: PendulumChainParams, dt: float, n_steps: int,
                       stride: int = 1, clamped=True, ends=None, backend=None) -> ChainRun:
    if not dt > 0 or n_steps < 1 or stride < 1:
        raise InvalidParameterError("need dt > 0, n_steps >= 1 and stride >= 1")
    k = backend or kernels.backend
    cl, left, right = _ends(params, clamped, ends)
    phi, vel, t, rec, e, fail = k.pendulum_run(
        np.asarray(phases, float), np.asarray(velocities, float), params.omega0_sq, params.omega1_sq,
        cl, left, right, dt, int(n_steps), int(stride), PHASE_GUARD,
    )
    if fail >= 0:
        raise DivergenceError(f"pendulum phases left the guarded range at step {fail}", step=fail,
                              state=(phi, vel))
    return ChainRun(t, rec, e, phi, vel, params)


def kink_chain(params: PendulumChainParams, spec: SolitonSpec, center_index: float | None = None):
    """Phases and velocities of the analytic kink sampled on the chain sites i*d."""
    if center_index is None:
        center_index = 0.5 * (params.n - 1)
    x = (np.arange(params.n) - center_index) * params.d
    omega1 = np.sqrt(params.omega1_sq)
    z, _ = to_dimensionless(x, 0.0, omega1, params.v)
    return soliton_profile(z, 0.0, spec), omega1 * soliton_rate(z, 0.0, spec)


def kink_center(phases, d: float = 1.0) -> float:
    """Position (in units of x = i d) where the phases first cross pi, by linear interpolation."""
    p = np.asarray(phases, dtype=float) - np.pi
    idx = np.flatnonzero(np.sign(p[:-1]) != np.sign(p[1:]))
    if idx.size == 0:
        raise InvalidParameterError("phases never cross pi")
    i = idx[0]
    if p[i + 1] == p[i]:
        return float(i * d)
    return float((i + p[i] / (p[i] - p[i + 1])) * d)


def kink_speed(run: ChainRun) -> float:
    """Least-squares slope of the tracked kink centre against time."""
    c = run.centers()
    return float(np.polyfit(run.t, c, 1)[0])
