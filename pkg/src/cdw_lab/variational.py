"""Variational ground states of coupled chains under a phase drive.

Each chain n carries a phase phi_n and the Hamiltonian

    H = sum_n [ Pi_n^2 / 2 D1 + E1 (1 - cos phi_n) + E2 (phi_n - theta)^2 ]
        + delta_p sum_{n>=2} (1 - cos(phi_n - phi_{n-1}))

with Pi_n = -i hbar d/dphi_n. Trial states are products over chains of
Gaussian packets sitting on the pinning minima,

    f_n(phi) = sum_m b_{n,m} exp(-alpha (phi - 2 pi m)^2),   m = -M..M,

with real coefficients normalised per chain. For a product state every term
factorises into one- and two-chain moments, so the separable evaluation is
exact; the dense tensor-product quadrature is kept as an independent check
for one and two chains.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .core import TWO_PI, make_rng
from .errors import InvalidParameterError, InvalidStateError, QuadratureUnderresolvedError

NORM_TOL = 1e-12
RICHARDSON_TOL = 1e-4
RULES = ("trapezoid", "simpson")


class RegimeWarning(UserWarning):
    """Parameters fall outside delta_p >> E1 >> E2."""


@dataclass(frozen=True)
class ChainHamiltonianParams:
    d1: float
    e1: float = 0.0
    e2: float = 0.0
    delta_p: float = 0.0
    theta: float = 0.0
    n_chains: int = 2
    hbar: float = 1.0

    def __post_init__(self):
        if not self.d1 > 0:
            raise InvalidParameterError(f"d1 must be positive, got {self.d1}")
        if min(self.e1, self.e2, self.delta_p) < 0:
            raise InvalidParameterError("energies must be non-negative")
        if self.n_chains < 1:
            raise InvalidParameterError("need at least one chain")
        if not self.hbar > 0:
            raise InvalidParameterError("hbar must be positive")
        if min(self.e1, self.e2, self.delta_p) > 0 and not (self.delta_p > self.e1 > self.e2):
            warnings.warn("expected delta_p > E1 > E2 for the strong-coupling regime", RegimeWarning,
                          stacklevel=3)

    def at(self, theta: float) -> "ChainHamiltonianParams":
        return replace(self, theta=float(theta))


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Composite rule on [-eta pi, eta pi] with ``points_per_axis`` nodes.

    The trapezoid rule is spectrally accurate for Gaussians that have decayed
    at the window edge, so it is the default; Simpson is available.
    """

    eta: float = 20.0
    points_per_axis: int = 256
    rule: str = "trapezoid"

    def __post_init__(self):
        if self.points_per_axis < 32:
            raise InvalidParameterError("need at least 32 quadrature points per axis")
        if self.eta < 1:
            raise InvalidParameterError("eta must be >= 1")
        if self.rule not in RULES:
            raise InvalidParameterError(f"rule must be one of {RULES}, got {self.rule!r}")
        if self.rule == "simpson" and self.points_per_axis % 2 == 0:
            raise InvalidParameterError("Simpson's rule needs an odd number of points")

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.eta * np.pi, self.eta * np.pi, self.points_per_axis)

    @cached_property
    def cos_nodes(self) -> np.ndarray:
        return np.cos(self.nodes)

    @cached_property
    def sin_nodes(self) -> np.ndarray:
        return np.sin(self.nodes)

    @property
    def spacing(self) -> float:
        return 2.0 * self.eta * np.pi / (self.points_per_axis - 1)

    @cached_property
    def weights(self) -> np.ndarray:
        n, h = self.points_per_axis, self.spacing
        w = np.full(n, h)
        if self.rule == "trapezoid":
            w[[0, -1]] = 0.5 * h
        else:
            w[1:-1:2] = 4.0 * h / 3.0
            w[2:-1:2] = 2.0 * h / 3.0
            w[[0, -1]] = h / 3.0
        return w

    def refined(self) -> "QuadratureGrid":
        """Same window with half the spacing."""
        return replace(self, points_per_axis=2 * self.points_per_axis - 1)


@dataclass(frozen=True, eq=False)
class VariationalState:
    """Per-chain packet weights ``coefficients[n, m + M]`` and shared width ``alpha``."""

    coefficients: np.ndarray
    alpha: float

    def __post_init__(self):
        b = np.array(self.coefficients, dtype=float)
        if b.ndim == 1:
            b = b[None, :]
        if b.ndim != 2 or b.shape[1] % 2 != 1:
            raise InvalidStateError("coefficients need shape (n_chains, 2M+1)")
        if not np.all(np.isfinite(b)):
            raise InvalidStateError("coefficients must be finite")
        norms = np.sum(b * b, axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            raise InvalidStateError(f"per-chain coefficient norms must be 1, got {norms}")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidStateError(f"alpha must be positive, got {self.alpha}")
        b.setflags(write=False)
        object.__setattr__(self, "coefficients", b)
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def single(cls, n_chains, m_max, m=0, alpha=0.5):
        b = np.zeros((n_chains, 2 * m_max + 1))
        b[:, m + m_max] = 1.0
        return cls(b, alpha)

    @classmethod
    def normalised(cls, coefficients, alpha):
        b = np.atleast_2d(np.asarray(coefficients, dtype=float))
        return cls(b / np.linalg.norm(b, axis=1, keepdims=True), alpha)

    @property
    def n_chains(self) -> int:
        return self.coefficients.shape[0]

    @property
    def m_max(self) -> int:
        return self.coefficients.shape[1] // 2

    @property
    def m_values(self) -> np.ndarray:
        return np.arange(-self.m_max, self.m_max + 1)

    @property
    def centers(self) -> np.ndarray:
        return TWO_PI * self.m_values

    def mirrored(self) -> "VariationalState":
        """b_m -> b_{-m} on every chain."""
        return VariationalState(self.coefficients[:, ::-1], self.alpha)

    def dominant_m(self) -> int:
        return int(self.m_values[np.argmax(np.sum(self.coefficients**2, axis=0))])


# ---------------------------------------------------------------- moments

@dataclass(frozen=True)
class _ChainMoments:
    norm: np.ndarray
    kinetic: np.ndarray
    cos: np.ndarray
    sin: np.ndarray
    x1: np.ndarray
    x2: np.ndarray


def _moments(state: VariationalState, grid: QuadratureGrid) -> _ChainMoments:
    return _raw_moments(state.coefficients, state.alpha, state.centers.astype(float), grid)


def _raw_moments(b, alpha, centers, grid):
    s, k, c, sn, x1, x2 = kernels.backend.gaussian_moments(
        alpha, centers, grid.nodes, grid.weights, grid.cos_nodes, grid.sin_nodes
    )

    def quad(mat):
        return np.einsum("nm,mk,nk->n", b, mat, b)

    return _ChainMoments(quad(s), quad(k), quad(c), quad(sn), quad(x1), quad(x2))


def normalization(state: VariationalState, grid: QuadratureGrid) -> float:
    """Constant N making the grid integral of |Psi|^2 equal to 1."""
    return float(1.0 / np.sqrt(np.prod(_moments(state, grid).norm)))


def chain_profile(phi, state: VariationalState, chain: int = 0):
    """Unnormalised packet sum f_n(phi) and its derivative."""
    phi = np.asarray(phi, dtype=float)
    d = phi[..., None] - state.centers
    g = np.exp(-state.alpha * d * d)
    b = state.coefficients[chain]
    return g @ b, (-2.0 * state.alpha * d * g) @ b


def trial_amplitude(phis, state: VariationalState, grid: QuadratureGrid) -> float:
    """N * prod_n f_n(phi_n) for one phase vector ``phis``."""
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    if phis.size != state.n_chains:
        raise InvalidParameterError(f"expected {state.n_chains} phases, got {phis.size}")
    amp = normalization(state, grid)
    for n, p in enumerate(phis):
        amp *= float(chain_profile(p, state, n)[0])
    return amp


def _separable_energy(params, state, grid):
    return _energy_from_moments(params, _moments(state, grid))


def _energy_from_moments(params, mo):
    th = params.theta
    kin = params.hbar**2 / (2.0 * params.d1) * mo.kinetic / mo.norm
    cos = mo.cos / mo.norm
    sin = mo.sin / mo.norm
    quad = (mo.x2 - 2.0 * th * mo.x1 + th * th * mo.norm) / mo.norm
    e = np.sum(kin + params.e1 * (1.0 - cos) + params.e2 * quad)
    if params.delta_p and cos.size > 1:
        e += params.delta_p * np.sum(1.0 - (cos[1:] * cos[:-1] + sin[1:] * sin[:-1]))
    return float(e)


def _dense_energy(params, state, grid):
    x, w = grid.nodes, grid.weights
    th = params.theta
    kin_pref = params.hbar**2 / (2.0 * params.d1)
    f0, d0 = chain_profile(x, state, 0)

    def site(x_):
        return params.e1 * (1.0 - np.cos(x_)) + params.e2 * (x_ - th) ** 2

    if state.n_chains == 1:
        dens = f0 * f0 * w
        return float((kin_pref * np.sum(d0 * d0 * w) + np.sum(site(x) * dens)) / dens.sum())
    f1, d1 = chain_profile(x, state, 1)
    ww = np.outer(w, w)
    dens = np.outer(f0 * f0, f1 * f1) * ww
    z = dens.sum()
    kin = kin_pref * (np.sum(np.outer(d0 * d0, f1 * f1) * ww) + np.sum(np.outer(f0 * f0, d1 * d1) * ww))
    pot = site(x)[:, None] + site(x)[None, :]
    pot = pot + params.delta_p * (1.0 - np.cos(x[None, :] - x[:, None]))
    return float((kin + np.sum(pot * dens)) / z)


def _check_match(value, ref, what):
    scale = max(abs(ref), np.finfo(float).tiny)
    if abs(value - ref) > RICHARDSON_TOL * scale:
        raise QuadratureUnderresolvedError(
            f"{what} changes from {value!r} to {ref!r} when the grid spacing halves"
        )


def energy_expectation(params: ChainHamiltonianParams, state: VariationalState,
                       grid: QuadratureGrid | None = None, method="separable", check=True) -> float:
    """<Psi|H|Psi> / <Psi|Psi> by quadrature.

    ``method="dense"`` integrates on the full tensor grid (one or two chains).
    With ``check`` the value is recomputed at half the grid spacing and a
    QuadratureUnderresolvedError is raised if they differ by more than 1e-4
    relative.
    """
    grid = grid or QuadratureGrid()
    if state.n_chains != params.n_chains:
        raise InvalidParameterError(f"state has {state.n_chains} chains, Hamiltonian {params.n_chains}")
    if method == "separable":
        fn = _separable_energy
    elif method == "dense":
        if state.n_chains > 2:
            raise InvalidParameterError("dense quadrature supports at most two chains")
        fn = _dense_energy
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    e = fn(params, state, grid)
    if check:
        _check_match(e, fn(params, state, grid.refined()), "energy")
    return e


def mean_phase(state: VariationalState, grid: QuadratureGrid | None = None, method="separable",
               check=True) -> float:
    """<(phi_1 + ... + phi_N) / N> under |Psi|^2."""
    grid = grid or QuadratureGrid()

    def sep(g):
        mo = _moments(state, g)
        return float(np.mean(mo.x1 / mo.norm))

    def dense(g):
        if state.n_chains > 2:
            raise InvalidParameterError("dense quadrature supports at most two chains")
        x, w = g.nodes, g.weights
        p = [chain_profile(x, state, n)[0] ** 2 * w for n in range(state.n_chains)]
        if state.n_chains == 1:
            return float(np.sum(x * p[0]) / p[0].sum())
        dens = np.outer(p[0], p[1])
        return float(np.sum(0.5 * (x[:, None] + x[None, :]) * dens) / dens.sum())

    fn = {"separable": sep, "dense": dense}.get(method)
    if fn is None:
        raise InvalidParameterError(f"unknown method {method!r}")
    v = fn(grid)
    if check:
        ref = fn(grid.refined())
        # the mean phase can sit at 0 by symmetry; judge it against the packet spacing
        if abs(v - ref) > RICHARDSON_TOL * max(abs(ref), TWO_PI):
            raise QuadratureUnderresolvedError(f"mean phase changes from {v!r} to {ref!r} on refinement")
    return v


# ------------------------------------------------------------- optimiser

def sphere_to_vector(angles) -> np.ndarray:
    """Unit vector from hyperspherical angles (length k gives a vector of length k+1)."""
    angles = np.asarray(angles, dtype=float)
    sines = np.concatenate([[1.0], np.cumprod(np.sin(angles))])
    return sines * np.concatenate([np.cos(angles), [1.0]])


def vector_to_sphere(vec) -> np.ndarray:
    """Inverse of :func:`sphere_to_vector` for a unit vector."""
    v = np.asarray(vec, dtype=float)
    k = v.size - 1
    angles = np.empty(k)
    for i in range(k - 1):
        angles[i] = np.arctan2(np.linalg.norm(v[i + 1:]), v[i])
    angles[k - 1] = np.arctan2(v[-1], v[-2])
    return angles


def _pack(state):
    return np.concatenate([vector_to_sphere(b) for b in state.coefficients] + [[np.log(state.alpha)]])


def _unpack(p, n_chains, width):
    k = width - 1
    rows = [sphere_to_vector(p[i * k:(i + 1) * k]) for i in range(n_chains)]
    b = np.array(rows)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    return VariationalState(b, float(np.exp(p[-1])))


@dataclass
class MinimizeResult:
    e_min: float
    state: VariationalState
    converged: bool
    evaluations: int
    restarts: list = field(default_factory=list)

    @property
    def tracked(self):
        """(energy, state) of the run started from the supplied initial state."""
        return self.restarts[0]


def restart_states(init: VariationalState, n_restarts=8, seed=0):
    """Initial guesses: ``init``, each packet basis vector, the uniform mix, then seeded random fill."""
    width = init.coefficients.shape[1]
    nc = init.n_chains
    starts = [init]
    for j in range(width):
        b = np.zeros((nc, width))
        b[:, j] = 1.0
        starts.append(VariationalState(b, init.alpha))
    starts.append(VariationalState(np.full((nc, width), 1.0 / np.sqrt(width)), init.alpha))
    rng = make_rng(seed)
    while len(starts) < n_restarts:
        starts.append(VariationalState.normalised(rng.normal(size=(nc, width)), init.alpha))
    return starts[:n_restarts]


def minimize_energy(params: ChainHamiltonianParams, grid: QuadratureGrid | None = None,
                    init: VariationalState | None = None, n_restarts=8, max_evals=20_000,
                    seed=0, m_max=2, check=True) -> MinimizeResult:
    """Nelder-Mead over hyperspherical coefficient angles and log(alpha), with restarts.

    The restart from ``init`` comes first and is kept as ``tracked``. When
    any restart exhausts ``max_evals`` the best state so far is returned with
    ``converged=False``. The winner is rechecked on the refined grid.
    """
    grid = grid or QuadratureGrid()
    if init is None:
        init = VariationalState.single(params.n_chains, m_max, 0, 0.5)
    if init.n_chains != params.n_chains:
        raise InvalidParameterError("initial state and Hamiltonian disagree on the chain count")
    width = init.coefficients.shape[1]
    scale = max(params.hbar**2 / params.d1, params.e1, params.e2, params.delta_p, 1e-300)

    centers = init.centers.astype(float)
    nc, k = params.n_chains, width - 1

    def objective(p):
        if not np.all(np.isfinite(p)) or abs(p[-1]) > 30:
            return np.inf
        b = np.array([sphere_to_vector(p[i * k:(i + 1) * k]) for i in range(nc)])
        return _energy_from_moments(params, _raw_moments(b, float(np.exp(p[-1])), centers, grid))

    runs = []
    evals = 0
    converged = True
    for start in restart_states(init, n_restarts, seed):
        res = minimize(objective, _pack(start), method="Nelder-Mead",
                       options={"maxfev": max_evals, "maxiter": max_evals, "xatol": 1e-9,
                                "fatol": 1e-14 * scale, "adaptive": True})
        evals += int(res.nfev)
        converged &= bool(res.success)
        runs.append((float(res.fun), _unpack(res.x, params.n_chains, width)))
    best = min(range(len(runs)), key=lambda i: runs[i][0])
    e_min, state = runs[best]
    if check:
        energy_expectation(params, state, grid, check=True)
    return MinimizeResult(e_min, state, converged, evals, runs)


# ------------------------------------------------------------------ sweeps

@dataclass
class BandPoint:
    theta: float
    e_min: float
    state: VariationalState | None
    dominant_m: int
    alpha: float
    converged: bool
    tracked_e: float
    tracked_state: VariationalState | None
    error: str = ""


def band_structure(params: ChainHamiltonianParams, theta_grid, grid: QuadratureGrid | None = None,
                   m_max=2, n_restarts=8, max_evals=20_000, seed=0, init=None) -> list:
    """Global minimum per theta, warm-started from the previous point's tracked state.

    Points are solved in order because each warm start depends on the one
    before. A failing point is recorded with its error and the sweep goes on.
    """
    theta_grid = np.asarray(theta_grid, dtype=float)
    if theta_grid.size > 1 and not (np.all(np.diff(theta_grid) > 0) or np.all(np.diff(theta_grid) < 0)):
        raise InvalidParameterError("theta grid must be strictly monotone")
    grid = grid or QuadratureGrid()
    warm = init or VariationalState.single(params.n_chains, m_max, 0, 0.5)
    out = []
    for th in theta_grid:
        try:
            r = minimize_energy(params.at(th), grid, warm, n_restarts, max_evals, seed, m_max)
        except Exception as exc:  # keep sweeping; the failure is reported per point
            out.append(BandPoint(float(th), np.nan, None, 0, np.nan, False, np.nan, None,
                                 f"{type(exc).__name__}: {exc}"))
            continue
        te, ts = r.tracked
        warm = ts
        out.append(BandPoint(float(th), r.e_min, r.state, r.state.dominant_m(), r.state.alpha,
                             r.converged, te, ts))
    return out


def phase_staircase(params: ChainHamiltonianParams, theta_grid, grid: QuadratureGrid | None = None,
                    m_max=2, n_restarts=8, max_evals=20_000, seed=0, band=None):
    """Rows ``(theta, <Phi> global, <Phi> tracked, dominant_m)`` along the sweep."""
    grid = grid or QuadratureGrid()
    if band is None:
        band = band_structure(params, theta_grid, grid, m_max, n_restarts, max_evals, seed)
    rows = []
    for p in band:
        if p.state is None:
            rows.append((p.theta, np.nan, np.nan, p.dominant_m))
            continue
        rows.append((p.theta, mean_phase(p.state, grid, check=False),
                     mean_phase(p.tracked_state, grid, check=False), p.dominant_m))
    return rows


def count_jumps(values, threshold=np.pi) -> int:
    """Adjacent-point changes larger than ``threshold``."""
    return int(np.count_nonzero(np.abs(np.diff(np.asarray(values, dtype=float))) > threshold))


def arc_segments(band) -> list:
    """Runs of constant dominant m along the sweep, as (m, first index, last index)."""
    segs = []
    for i, p in enumerate(band):
        if segs and segs[-1][0] == p.dominant_m:
            segs[-1][2] = i
        else:
            segs.append([p.dominant_m, i, i])
    return [tuple(s) for s in segs]


def staircase_jumps(theta, mean_phi, contrast=1.2) -> list:
    """Locations of the risers of a smoothed staircase.

    A riser is a run of adjacent Theta cells whose slope d<Phi>/dTheta is a
    local maximum and exceeds ``contrast`` times the median slope.  Each run
    is reported once, at the slope-weighted centre of its cells.  A uniform
    ramp (no coupling between chains) has no risers.
    """
    theta = np.asarray(theta, dtype=float)
    slope = np.diff(np.asarray(mean_phi, dtype=float)) / np.diff(theta)
    if slope.size < 3:
        return []
    mid = 0.5 * (theta[1:] + theta[:-1])
    floor = contrast * np.median(slope)
    padded = np.concatenate([[-np.inf], slope, [-np.inf]])
    peak = (slope >= padded[:-2]) & (slope >= padded[2:]) & (slope > floor)
    jumps, run = [], []
    for k in range(slope.size + 1):
        if k < slope.size and peak[k]:
            run.append(k)
        elif run:
            w = slope[run]
            jumps.append(float(np.dot(w, mid[run]) / w.sum()))
            run = []
    return jumps


def transition_points(theta, band) -> list:
    """Theta midpoints between consecutive sweep points whose dominant m differs."""
    theta = np.asarray(theta, dtype=float)
    return [0.5 * (theta[last] + theta[last + 1]) for _, _, last in arc_segments(band)[:-1]]
