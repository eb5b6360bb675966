"""Overdamped random-pinning phase dynamics and dielectric response.

The phase on each impurity site obeys

    dphi_i/dt = lap_i(phi) + E(t) (X_{i+1} - X_i) / 2 + V sin(theta_i + phi_i)

on a periodic lattice. The conductivity is extracted by accumulating sine and
cosine sums of the lattice-mean phase velocity inside the integrator loop,
one update per accepted step, using the rate at the step's start state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import DriveField, ImpurityLattice, WashboardParams, field_at
from .errors import (
    DegenerateGapError,
    DivergenceError,
    InvalidParameterError,
    UnknownFrequencyError,
    UnresolvedThresholdError,
)

PHASE_GUARD = 1e9
RK2_METHODS = {"midpoint": 0, "heun": 1}


@dataclass(frozen=True, eq=False)
class PhaseState:
    phases: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        a = np.array(self.phases, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "phases", a)
        if not np.all(np.isfinite(a)):
            raise DivergenceError("phase state contains non-finite values", state=None)

    @classmethod
    def zeros(cls, lattice: ImpurityLattice, t=0.0):
        return cls(np.zeros(lattice.n_sites), t)


def _check_aligned(state, lattice):
    if state.phases.shape != lattice.sites.shape:
        raise InvalidParameterError(
            f"state has {state.phases.size} phases but lattice has {lattice.n_sites} sites"
        )


def _checked_gaps(lattice):
    gaps = lattice.forward_gaps()
    if np.any(gaps == 0.0):
        raise DegenerateGapError("two impurity sites coincide")
    return gaps


def discrete_laplacian(state: PhaseState, lattice: ImpurityLattice, i: int) -> float:
    """Non-uniform second difference at site ``i`` with periodic wrap.

    The left neighbour of the first site is (phi_N, X_N - L) and the right
    neighbour of the last site is (phi_1, X_1 + L).
    """
    _check_aligned(state, lattice)
    n = lattice.n_sites
    phi, x, length = state.phases, lattice.sites, lattice.grid_length
    i = int(i) % n
    ir, il = (i + 1) % n, (i - 1) % n
    x_right = x[ir] + (length if i == n - 1 else 0.0)
    x_left = x[il] - (length if i == 0 else 0.0)
    dr, dl = x_right - x[i], x[i] - x_left
    if dr == 0.0 or dl == 0.0:
        raise DegenerateGapError(f"zero gap next to site {i}")
    return (phi[ir] - phi[i]) / dr - (phi[i] - phi[il]) / dl


def phase_rhs(state: PhaseState, lattice: ImpurityLattice, drive: DriveField,
              v_strength: float = 1.0, t: float | None = None) -> np.ndarray:
    """Time derivative of every phase at time ``t`` (defaults to ``state.t``)."""
    _check_aligned(state, lattice)
    gaps = _checked_gaps(lattice)
    t = state.t if t is None else t
    phi = state.phases
    lap = (np.roll(phi, -1) - phi) / gaps - (phi - np.roll(phi, 1)) / np.roll(gaps, 1)
    return lap + 0.5 * float(field_at(drive, t)) * gaps + v_strength * np.sin(lattice.pinning_phases + phi)


def stable_dt(lattice: ImpurityLattice, safety=0.5) -> float:
    """Largest RK2 step that keeps the stiffest Laplacian mode stable, times ``safety``.

    Uses the Gershgorin bound on the Laplacian spectrum; RK2 is stable for
    real negative eigenvalues down to -2/dt.
    """
    gaps = _checked_gaps(lattice)
    radius = 2.0 * np.max(1.0 / gaps + 1.0 / np.roll(gaps, 1))
    return safety * 2.0 / radius


def step_rk2(state: PhaseState, lattice: ImpurityLattice, drive: DriveField,
             v_strength: float = 1.0, dt: float = 0.01, method="midpoint") -> PhaseState:
    """One second-order Runge-Kutta step (midpoint by default, or Heun)."""
    result = run_transport(lattice, drive, v_strength, dt, 1, (), state=state, method=method)
    return result.final_state


@dataclass
class ResponseAccumulator:
    """Running cosine/sine sums of the mean phase velocity per probe frequency."""

    probe_frequencies: np.ndarray
    g1: float = 1.0
    cos_sum: np.ndarray = None
    sin_sum: np.ndarray = None
    n_updates: int = 0
    duration: float = 0.0

    def __post_init__(self):
        self.probe_frequencies = np.atleast_1d(np.asarray(self.probe_frequencies, dtype=float))
        if self.cos_sum is None:
            self.cos_sum = np.zeros(self.probe_frequencies.size)
        if self.sin_sum is None:
            self.sin_sum = np.zeros(self.probe_frequencies.size)

    def add(self, rate: float, t: float, dt: float) -> None:
        """Fold in one accepted step with mean phase velocity ``rate`` at ``t``."""
        w = self.probe_frequencies
        self.cos_sum += rate * np.cos(w * t) * dt
        self.sin_sum += rate * np.sin(w * t) * dt
        self.n_updates += 1
        self.duration += dt

    def add_trace(self, rates, times, dt: float) -> None:
        for r, t in zip(np.asarray(rates, dtype=float), np.asarray(times, dtype=float)):
            self.add(float(r), float(t), dt)

    def index_of(self, omega: float) -> int:
        hits = np.flatnonzero(np.isclose(self.probe_frequencies, omega, rtol=1e-12, atol=0.0))
        if hits.size == 0:
            raise UnknownFrequencyError(f"omega={omega} is not a probe frequency")
        return int(hits[0])


def conductivity(acc: ResponseAccumulator, omega: float) -> complex:
    k = acc.index_of(omega)
    return complex(acc.g1 * acc.cos_sum[k], acc.g1 * acc.sin_sum[k])


def dielectric(sigma: complex, omega: float) -> complex:
    """Re eps = 4 pi Im sigma / omega, Im eps = 4 pi Re sigma / omega."""
    if omega == 0:
        raise InvalidParameterError("dielectric response is undefined at zero frequency")
    sigma = complex(sigma)
    return complex(4.0 * np.pi * sigma.imag / omega, 4.0 * np.pi * sigma.real / omega)


@dataclass
class TransportResult:
    t: np.ndarray
    mean_phase: np.ndarray
    mean_phase_dot: np.ndarray
    accumulator: ResponseAccumulator
    final_state: PhaseState
    dt: float
    stride: int = 1
    meta: dict = field(default_factory=dict)

    def late_rate(self, window=0.25) -> float:
        """Mean of <phi_dot> over the trailing ``window`` fraction of the run."""
        n = self.mean_phase_dot.size
        start = min(n - 1, int(np.floor(n * (1.0 - window))))
        return float(np.mean(self.mean_phase_dot[start:]))

    def late_slope(self, window=0.25) -> float:
        """Slope of <phi>(t) across the trailing window, end state included."""
        n = self.mean_phase.size
        start = min(n - 1, int(np.floor(n * (1.0 - window))))
        t_end = self.final_state.t
        span = t_end - self.t[start]
        return float((self.final_state.phases.mean() - self.mean_phase[start]) / span)


def run_transport(lattice: ImpurityLattice, drive: DriveField, v_strength: float = 1.0,
                  dt: float = 0.01, n_steps: int = 1000, probe_frequencies=(),
                  state: PhaseState | None = None, g1: float = 1.0, stride: int = 1,
                  method="midpoint", backend=None) -> TransportResult:
    """Integrate the pinning equation and gather the in-loop DFT sums.

    Raises DivergenceError (with ``step`` and the last finite ``state``) if
    any phase leaves [-1e9, 1e9] or goes non-finite.
    """
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    if n_steps < 1:
        raise InvalidParameterError(f"n_steps must be >= 1, got {n_steps}")
    if method not in RK2_METHODS:
        raise InvalidParameterError(f"unknown RK2 variant {method!r}")
    state = PhaseState.zeros(lattice) if state is None else state
    _check_aligned(state, lattice)
    _checked_gaps(lattice)
    k = backend or kernels.backend
    acc = ResponseAccumulator(probe_frequencies, g1)
    phi, t_rec, mphi, mdot, cs, ss, fail = k.transport_run(
        state.phases, lattice.sites, lattice.pinning_phases, lattice.grid_length,
        drive.e_dc, drive.e_ac, drive.omega, v_strength, state.t, dt, int(n_steps),
        acc.probe_frequencies, int(stride), PHASE_GUARD, RK2_METHODS[method],
    )
    done = int(n_steps) if fail < 0 else fail
    acc.cos_sum, acc.sin_sum = cs, ss
    acc.n_updates, acc.duration = done + (fail >= 0), dt * (done + (fail >= 0))
    final = PhaseState(phi, state.t + done * dt)
    if fail >= 0:
        raise DivergenceError(
            f"phase diverged at step {fail} (t={state.t + fail * dt:.6g}); "
            f"last finite mean phase {np.mean(phi):.6g}",
            step=fail, state=final,
        )
    return TransportResult(t_rec, mphi, mdot, acc, final, dt, stride,
                           {"method": method, "backend": k.BACKEND})


# ------------------------------------------------------------- threshold

PINNED, SLIDING = "pinned", "sliding"


@dataclass
class ThresholdScan:
    fields: np.ndarray
    classes: list
    rates: np.ndarray
    e_th: float
    bracket: tuple
    refinements: list = field(default_factory=list)
    slopes: np.ndarray = None


def classify(result: TransportResult, window=0.25, tol=1e-6) -> str:
    return PINNED if abs(result.late_rate(window)) < tol else SLIDING


def threshold_scan(lattice: ImpurityLattice, e_dc_values, dt: float, n_steps: int,
                   v_strength: float = 1.0, window=0.25, tol=1e-6, n_bisect=8,
                   method="midpoint", backend=None) -> ThresholdScan:
    """Classify each DC field as pinned or sliding, then bisect the threshold.

    Every run starts from phi = 0. The threshold is bisected ``n_bisect``
    times inside the bracket (largest pinned field, smallest sliding field
    above it); with ``n_bisect=0`` the bracket midpoint is returned.
    """
    fields = np.asarray(e_dc_values, dtype=float)
    if fields.size == 0 or np.any(np.diff(fields) <= 0):
        raise InvalidParameterError("field grid must be non-empty and strictly increasing")

    def run(e):
        res = run_transport(lattice, DriveField(e_dc=e), v_strength, dt, n_steps,
                            method=method, backend=backend)
        return res.late_rate(window), classify(res, window, tol), res.late_slope(window)

    rates, classes, slopes = [], [], []
    for e in fields:
        r, c, s = run(e)
        rates.append(r)
        classes.append(c)
        slopes.append(s)
    if all(c == classes[0] for c in classes):
        raise UnresolvedThresholdError(f"every field classified as {classes[0]}")
    sliding = [i for i, c in enumerate(classes) if c == SLIDING]
    hi_i = sliding[0]
    pinned_below = [i for i in range(hi_i) if classes[i] == PINNED]
    if not pinned_below:
        raise UnresolvedThresholdError("lowest field already slides; extend the grid downward")
    lo, hi = fields[pinned_below[-1]], fields[hi_i]
    refinements = []
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        r, c, _ = run(mid)
        refinements.append((mid, c, r))
        if c == PINNED:
            lo = mid
        else:
            hi = mid
    return ThresholdScan(fields, classes, np.array(rates), 0.5 * (lo + hi), (lo, hi), refinements,
                         np.array(slopes))


# ------------------------------------------------------------- washboard

def _washboard_accel(phi, phi_dot, params: WashboardParams, e):
    return params.coupling * e - phi_dot / params.tau - params.omega0_sq * np.sin(phi)


def step_washboard(phi: float, phi_dot: float, params: WashboardParams, drive: DriveField,
                   dt: float, t: float = 0.0):
    """One midpoint RK2 step of the damped, driven rigid-phase pendulum."""
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    e0 = float(field_at(drive, t))
    em = float(field_at(drive, t + 0.5 * dt))
    a0 = _washboard_accel(phi, phi_dot, params, e0)
    ph_m = phi + 0.5 * dt * phi_dot
    pd_m = phi_dot + 0.5 * dt * a0
    new_phi = phi + dt * pd_m
    new_dot = phi_dot + dt * _washboard_accel(ph_m, pd_m, params, em)
    if not (abs(new_phi) <= PHASE_GUARD and abs(new_dot) <= PHASE_GUARD):
        raise DivergenceError("washboard phase diverged")
    return new_phi, new_dot


def run_washboard(phi, phi_dot, params: WashboardParams, drive: DriveField, dt: float,
                  n_steps: int, t0: float = 0.0):
    """Trajectory arrays (t, phi, phi_dot) of length ``n_steps + 1``."""
    t = t0 + dt * np.arange(n_steps + 1)
    out_phi = np.empty(n_steps + 1)
    out_dot = np.empty(n_steps + 1)
    out_phi[0], out_dot[0] = phi, phi_dot
    for n in range(n_steps):
        phi, phi_dot = step_washboard(phi, phi_dot, params, drive, dt, t[n])
        out_phi[n + 1], out_dot[n + 1] = phi, phi_dot
    return t, out_phi, out_dot


# ------------------------------------------------------ dielectric sweeps

def relaxation_rates(state: PhaseState, lattice: ImpurityLattice, v_strength: float = 1.0) -> np.ndarray:
    """Decay rates of small perturbations about ``state``, ascending.

    These are minus the eigenvalues of the (symmetric) Jacobian of the phase
    equation. The smallest one goes to zero at the depinning threshold.
    """
    _check_aligned(state, lattice)
    gaps = _checked_gaps(lattice)
    n = lattice.n_sites
    inv_r, inv_l = 1.0 / gaps, 1.0 / np.roll(gaps, 1)
    jac = np.diag(-(inv_r + inv_l) + v_strength * np.cos(lattice.pinning_phases + state.phases))
    idx = np.arange(n)
    np.add.at(jac, (idx, (idx + 1) % n), inv_r)
    np.add.at(jac, (idx, (idx - 1) % n), inv_l)
    return np.sort(-np.linalg.eigvalsh(jac))


def critical_frequency(lattice: ImpurityLattice, v_strength: float = 1.0, dt=None,
                       relax_time=2000.0, e_dc=0.0) -> float:
    """Crossover frequency omega_c of the pinned conductivity.

    Taken as the slowest relaxation rate of the relaxed pinned state at
    ``e_dc``: below it the response is reactive, above it dissipative.
    """
    dt = stable_dt(lattice) if dt is None else dt
    r = run_transport(lattice, DriveField(e_dc), v_strength, dt, int(np.ceil(relax_time / dt)))
    return float(relaxation_rates(r.final_state, lattice, v_strength)[0])


@dataclass
class DielectricSweep:
    fields: np.ndarray
    omega: float
    sigma: np.ndarray
    eps: np.ndarray

    @property
    def rescaled(self) -> np.ndarray:
        """|eps / eps_initial| with the first field as reference."""
        return np.abs(self.eps / self.eps[0])


def dielectric_vs_field(lattice: ImpurityLattice, fields, omega: float, e_ac: float, dt: float,
                        periods: int = 2, relax_time: float = 10000.0, v_strength: float = 1.0,
                        g1: float = 1.0, backend=None) -> DielectricSweep:
    """Small-signal conductivity and dielectric response along a DC field sweep.

    Fields are visited in the given order; each one is first relaxed under
    pure DC (continuing from the previous field's state), then probed with
    ``e_ac sin(omega t)`` for a whole number of periods. The step is shrunk
    slightly so the probe window is exactly ``periods`` cycles long.
    """
    fields = np.asarray(fields, dtype=float)
    n_probe = int(np.ceil(2.0 * np.pi * periods / omega / dt))
    dt_probe = 2.0 * np.pi * periods / omega / n_probe
    n_relax = int(np.ceil(relax_time / dt))
    state = PhaseState.zeros(lattice)
    sig = np.empty(fields.size, dtype=complex)
    eps = np.empty(fields.size, dtype=complex)
    for k, e in enumerate(fields):
        relaxed = run_transport(lattice, DriveField(e), v_strength, dt, n_relax, state=state,
                                stride=n_relax, backend=backend)
        state = PhaseState(relaxed.final_state.phases, 0.0)
        probe = run_transport(lattice, DriveField(e, e_ac, omega), v_strength, dt_probe, n_probe,
                              [omega], state=state, g1=g1, stride=n_probe, backend=backend)
        sig[k] = conductivity(probe.accumulator, omega)
        eps[k] = dielectric(sig[k], omega)
    return DielectricSweep(fields, omega, sig, eps)
