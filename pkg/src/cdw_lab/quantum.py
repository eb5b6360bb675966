"""Single-chain wavefunction evolution in a driven washboard potential.

Solves i hbar dpsi/dt = -(hbar^2 / 2D) d2psi/dx2 + V(x, t) psi on a uniform
grid, where x is the chain phase coordinate and

    V(x, t) = mu_E^2 (x - omega_D t)^2 / 2 + D omega_p^2 (1 - cos x) / 2.

Two time steppers are provided: the two-level Crank-Nicolson solve and the
three-level Dufort-Frankel scheme. Boundaries are homogeneous Dirichlet
(the stored amplitudes are the interior unknowns) or periodic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import BlowUpError, InvalidParameterError, SolverSingularError

BLOWUP_FACTOR = 10.0
SCHEMES = {"cn": "crank_nicolson", "crank_nicolson": "crank_nicolson",
           "df": "dufort_frankel", "dufort_frankel": "dufort_frankel"}


@dataclass(frozen=True)
class SchwingerParams:
    d_coeff: float = 1.0
    mu_e_sq: float = 0.0
    omega_p_sq: float = 0.0
    omega_d: float = 0.0
    hbar: float = 1.0

    def __post_init__(self):
        if not self.d_coeff > 0:
            raise InvalidParameterError(f"d_coeff must be positive, got {self.d_coeff}")
        if min(self.mu_e_sq, self.omega_p_sq, self.omega_d) < 0:
            raise InvalidParameterError("mu_e_sq, omega_p_sq and omega_d must be non-negative")
        if not self.hbar > 0:
            raise InvalidParameterError(f"hbar must be positive, got {self.hbar}")

    @classmethod
    def from_chain_energies(cls, d1, e1, e2, omega_d=0.0, hbar=1.0):
        """Map the multi-chain energies onto one chain: E2 = mu_E^2/2, E1 = D omega_p^2/2."""
        return cls(d_coeff=d1, mu_e_sq=2.0 * e2, omega_p_sq=2.0 * e1 / d1, omega_d=omega_d, hbar=hbar)

    @property
    def dwp_sq(self) -> float:
        return self.d_coeff * self.omega_p_sq


def washboard_potential(x, t, params: SchwingerParams):
    return kernels.backend.washboard(np.asarray(x, dtype=float), t, params.mu_e_sq,
                                     params.dwp_sq, params.omega_d)


@dataclass(frozen=True, eq=False)
class WaveFunction:
    amplitudes: np.ndarray
    dx: float
    x0: float = 0.0
    t: float = 0.0
    step_index: int = 0
    periodic: bool = False

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex)
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)
        if a.ndim != 1 or a.size < 3:
            raise InvalidParameterError("a wavefunction needs at least 3 grid points")
        if not self.dx > 0:
            raise InvalidParameterError(f"dx must be positive, got {self.dx}")

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.amplitudes.size)

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.dx)

    def mean_x(self) -> float:
        dens = np.abs(self.amplitudes) ** 2
        return float(np.sum(self.x * dens) / np.sum(dens))

    def width(self) -> float:
        dens = np.abs(self.amplitudes) ** 2
        dens = dens / dens.sum()
        mu = np.sum(self.x * dens)
        return float(np.sqrt(np.sum((self.x - mu) ** 2 * dens)))

    def probability_beyond(self, x_cut: float) -> float:
        dens = np.abs(self.amplitudes) ** 2
        return float(dens[self.x > x_cut].sum() / dens.sum())

    def advanced(self, amplitudes, dt) -> "WaveFunction":
        return replace(self, amplitudes=amplitudes, t=self.t + dt, step_index=self.step_index + 1)


def make_grid(x_min: float, x_max: float, n: int):
    """(x0, dx) for ``n`` interior points strictly inside (x_min, x_max)."""
    dx = (x_max - x_min) / (n + 1)
    return x_min + dx, dx


def gaussian_packet(x0, dx, n, center=0.0, width=1.0, k0=0.0, periodic=False) -> WaveFunction:
    """Normalised Gaussian with position spread ``width`` and mean wavenumber ``k0``."""
    x = x0 + dx * np.arange(n)
    psi = np.exp(-((x - center) ** 2) / (4.0 * width**2) + 1j * k0 * x)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * dx)
    return WaveFunction(psi, dx, x0, 0.0, 0, periodic)


def ground_state_width(params: SchwingerParams) -> float:
    """Position spread of the harmonic ground state of the well at x = 0."""
    k = params.mu_e_sq + 0.5 * params.dwp_sq
    if k <= 0:
        raise InvalidParameterError("the potential has no confining curvature at x = 0")
    omega = np.sqrt(k / params.d_coeff)
    return float(np.sqrt(params.hbar / (2.0 * params.d_coeff * omega)))


def _check_growth(norm_in, norm_out, step):
    if norm_in > 0 and not norm_out <= BLOWUP_FACTOR * norm_in:
        raise BlowUpError(f"wavefunction norm blew up at step {step} ({norm_out:.3g} vs {norm_in:.3g})",
                          step=step)


def step_crank_nicolson(wf: WaveFunction, params: SchwingerParams, dt: float,
                        variant="standard", prev: WaveFunction | None = None) -> WaveFunction:
    """One Crank-Nicolson step.

    ``variant="standard"`` is the unitary two-level solve with V evaluated at
    t + dt/2. ``variant="printed"`` is the three-level mixed stencil with the
    ``psi[j+1] - psi[j-1]`` explicit bracket, as typeset in the source
    derivation; it needs the previous level ``prev``.
    """
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    k = kernels.backend
    norm_in = wf.norm()
    if variant == "standard":
        try:
            psi, _, _, nm, _, _ = k.cn_run(
                wf.amplitudes, wf.x, wf.dx, params.hbar, params.d_coeff, params.mu_e_sq,
                params.dwp_sq, params.omega_d, wf.t, dt, 1, wf.periodic, np.inf, np.inf, 1.0,
            )
        except ZeroDivisionError as exc:
            raise SolverSingularError(str(exc)) from None
    elif variant == "printed":
        if prev is None:
            raise InvalidParameterError("the printed three-level variant needs the previous level")
        psi = _printed_cn(wf, prev, params, dt)
    else:
        raise InvalidParameterError(f"unknown Crank-Nicolson variant {variant!r}")
    out = wf.advanced(psi, dt)
    _check_growth(norm_in, out.norm(), wf.step_index)
    return out


def _printed_cn(wf, prev, params, dt):
    psi, old = wf.amplitudes, prev.amplitudes
    n = psi.size
    lam = dt * params.hbar / (params.d_coeff * wf.dx**2)
    if wf.periodic:
        up, dn = np.roll(psi, -1), np.roll(psi, 1)
    else:
        up = np.concatenate([psi[1:], [0.0]])
        dn = np.concatenate([[0.0], psi[:-1]])
    v = washboard_potential(wf.x, wf.t, params)
    rhs = old + 1j * lam * (up - dn - 2.0 * psi) - 2j * dt * v * psi / params.hbar
    diag = np.full(n, 1.0 + 2j * lam)
    off = np.full(n, -1j * lam)
    try:
        if wf.periodic:
            return kernels.backend.cyclic_solve(off, diag, off, rhs, off[0], off[0])
        return kernels.backend.tridiag_solve(off, diag, off, rhs)
    except ZeroDivisionError as exc:
        raise SolverSingularError(str(exc)) from None


def dufort_frankel_ratio(dt: float, dx: float, params: SchwingerParams) -> complex:
    """R = -i dt hbar / (2 D dx^2), the mesh ratio of the printed scheme."""
    return -1j * dt * params.hbar / (2.0 * params.d_coeff * dx**2)


def _df_coefficients(dt, dx, params, form):
    """(neighbour, previous-level, potential) coefficients of the three-level update."""
    if form == "consistent":
        # same equation as the Crank-Nicolson solve: ratio i dt hbar/(2 D dx^2),
        # potential entering as -2 i dt V psi / (hbar (1 + 2R))
        r = -dufort_frankel_ratio(dt, dx, params)
        pot = -2j * dt / (params.hbar * (1.0 + 2.0 * r))
    elif form == "printed":
        r = dufort_frankel_ratio(dt, dx, params)
        pot = -1j * dt / params.hbar
    else:
        raise InvalidParameterError(f"unknown Dufort-Frankel form {form!r}")
    return 2.0 * r / (1.0 + 2.0 * r), (1.0 - 2.0 * r) / (1.0 + 2.0 * r), pot


NEIGHBOUR_SIGNS = {"sum": 1.0, "difference": -1.0}


def step_dufort_frankel(wf: WaveFunction, wf_prev: WaveFunction, params: SchwingerParams,
                        dt: float, form="consistent", neighbors="sum") -> WaveFunction:
    """Three-level Dufort-Frankel step from levels n (``wf``) and n-1.

    ``form="consistent"`` discretises the same Schrodinger equation as the
    Crank-Nicolson solve. ``form="printed"`` uses the mesh ratio with the
    opposite sign and the bare ``-i dt V / hbar`` potential term.
    ``neighbors="difference"`` swaps the neighbour sum for psi[j-1] - psi[j+1].
    """
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    if neighbors not in NEIGHBOUR_SIGNS:
        raise InvalidParameterError(f"neighbors must be 'sum' or 'difference', got {neighbors!r}")
    c_nb, c_prev, c_pot = _df_coefficients(dt, wf.dx, params, form)
    norm_in = wf.norm()
    psi, _, _, _, _, _, _ = kernels.backend.df_run(
        wf.amplitudes, wf_prev.amplitudes, wf.x, wf.dx, params.hbar, params.mu_e_sq, params.dwp_sq,
        params.omega_d, c_nb, c_prev, c_pot, NEIGHBOUR_SIGNS[neighbors], wf.t, dt, 1,
        wf.periodic, np.inf, np.inf, 1.0,
    )
    out = wf.advanced(psi, dt)
    _check_growth(norm_in, out.norm(), wf.step_index)
    return out


@dataclass
class ChainTrace:
    t: np.ndarray
    mean_x: np.ndarray
    norm: np.ndarray
    beyond: np.ndarray
    flags: list
    final: WaveFunction
    meta: dict = field(default_factory=dict)

    @property
    def norm_drift(self) -> np.ndarray:
        return self.norm / self.norm[0] - 1.0


def evolve_chain(wf0: WaveFunction, params: SchwingerParams, scheme="crank_nicolson",
                 dt: float = 1e-3, n_steps: int = 1000, x_cut: float = np.pi,
                 cn_variant="standard", df_form="consistent", df_neighbors="sum",
                 backend=None) -> ChainTrace:
    """Step a packet and record (t, <x>, norm, probability beyond ``x_cut``).

    Row 0 is the initial packet. The three-level schemes are bootstrapped by
    one standard Crank-Nicolson step. On a norm blow-up the trace is cut at
    the failing step, flagged ``"blowup"``, stored in ``meta["error"]`` and
    a BlowUpError carrying the trace (``exc.trace``) is raised.
    """
    scheme = SCHEMES.get(scheme)
    if scheme is None:
        raise InvalidParameterError("scheme must be crank_nicolson (cn) or dufort_frankel (df)")
    if not dt > 0 or n_steps < 1:
        raise InvalidParameterError("need dt > 0 and n_steps >= 1")
    norm0 = wf0.norm()
    if not (np.isfinite(norm0) and norm0 > 0):
        raise InvalidParameterError("initial packet must have finite, positive norm")
    k = backend or kernels.backend
    x = wf0.x
    common = (x, wf0.dx, params.hbar)
    pot = (params.mu_e_sq, params.dwp_sq, params.omega_d)
    pieces = [(np.array([wf0.t]), np.array([wf0.mean_x()]), np.array([norm0]),
               np.array([wf0.probability_beyond(x_cut)]))]
    fail = -1

    def cn(psi, t, steps):
        try:
            return k.cn_run(psi, *common, params.d_coeff, *pot, t, dt, steps, wf0.periodic,
                            BLOWUP_FACTOR, x_cut, norm0)
        except ZeroDivisionError as exc:
            raise SolverSingularError(str(exc)) from None

    if scheme == "crank_nicolson" and cn_variant == "standard":
        psi, tr, mx, nm, bt, fail = cn(wf0.amplitudes, wf0.t, n_steps)
        pieces.append((tr, mx, nm, bt))
        prev = None
    else:
        psi, tr, mx, nm, bt, fail = cn(wf0.amplitudes, wf0.t, 1)
        pieces.append((tr, mx, nm, bt))
        prev = wf0.amplitudes
        if fail < 0 and n_steps > 1:
            if scheme == "dufort_frankel":
                c_nb, c_prev, c_pot = _df_coefficients(dt, wf0.dx, params, df_form)
                if df_neighbors not in NEIGHBOUR_SIGNS:
                    raise InvalidParameterError(f"unknown neighbour rule {df_neighbors!r}")
                psi, prev, tr, mx, nm, bt, fail = k.df_run(
                    psi, prev, *common, *pot, c_nb, c_prev, c_pot, NEIGHBOUR_SIGNS[df_neighbors],
                    wf0.t + dt, dt, n_steps - 1, wf0.periodic, BLOWUP_FACTOR, x_cut, norm0,
                )
                if fail >= 0:
                    fail += 1
                pieces.append((tr, mx, nm, bt))
            elif cn_variant == "printed":
                psi, fail, rows = _run_printed(wf0, psi, prev, params, dt, n_steps, x_cut, norm0)
                pieces.append(rows)
            else:
                raise InvalidParameterError(f"unknown Crank-Nicolson variant {cn_variant!r}")

    t_all, mx_all, nm_all, bt_all = (np.concatenate(p) for p in zip(*pieces))
    flags = ["ok"] * t_all.size
    done = t_all.size - 1
    final = replace(wf0, amplitudes=psi, t=float(t_all[-1]), step_index=wf0.step_index + done)
    trace = ChainTrace(t_all, mx_all, nm_all, bt_all, flags, final,
                       {"scheme": scheme, "dt": dt, "backend": k.BACKEND, "cn_variant": cn_variant,
                        "df_form": df_form, "df_neighbors": df_neighbors})
    if fail >= 0:
        flags[-1] = "blowup"
        err = BlowUpError(f"{scheme} blew up at step {fail}: norm {nm_all[-1]:.3g} "
                          f"exceeds {BLOWUP_FACTOR:g} x initial {norm0:.3g}", step=fail)
        err.trace = trace
        trace.meta["error"] = str(err)
        trace.meta["fail_step"] = fail
        raise err
    return trace


def _run_printed(wf0, psi, prev, params, dt, n_steps, x_cut, norm0):
    cur = replace(wf0, amplitudes=psi, t=wf0.t + dt, step_index=wf0.step_index + 1)
    old = wf0
    rows = ([], [], [], [])
    fail = -1
    for s in range(1, n_steps):
        new = cur.advanced(_printed_cn(cur, old, params, dt), dt)
        nm = new.norm()
        with np.errstate(all="ignore"):
            vals = (new.t, new.mean_x(), nm, new.probability_beyond(x_cut))
        for r, v in zip(rows, vals):
            r.append(v)
        old, cur = cur, new
        if not nm <= BLOWUP_FACTOR * norm0:
            fail = s
            break
    return cur.amplitudes, fail, tuple(np.array(r, dtype=float) for r in rows)


def comoving_minimum(theta: float, params: SchwingerParams) -> float:
    """Classical minimum of the washboard in the well at x = 0 for drive ``theta``."""
    from scipy.optimize import minimize_scalar

    def v(x):
        return 0.5 * params.mu_e_sq * (x - theta) ** 2 + 0.5 * params.dwp_sq * (1.0 - np.cos(x))

    res = minimize_scalar(v, bounds=(-np.pi, np.pi), method="bounded", options={"xatol": 1e-12})
    return float(res.x)


def oscillation_envelope(trace: ChainTrace, params: SchwingerParams, n_windows: int = 6):
    """Deviation of <x> from the co-moving classical minimum and its windowed maxima.

    Returns ``(deviation, envelope, sign_changes)``.
    """
    eq = np.array([comoving_minimum(params.omega_d * t, params) for t in trace.t])
    dev = trace.mean_x - eq
    env = np.array([np.abs(w).max() for w in np.array_split(dev, n_windows)])
    changes = int(np.count_nonzero(np.diff(np.sign(dev[1:])) != 0))
    return dev, env, changes


def barrier_maximum(theta: float, params: SchwingerParams) -> float:
    """First maximum of the washboard to the right of the well at x = 0 for drive ``theta``."""
    from scipy.optimize import brentq

    def slope(x):
        return params.mu_e_sq * (x - theta) + 0.5 * params.dwp_sq * np.sin(x)

    x_min = comoving_minimum(theta, params)
    xs = x_min + np.linspace(1e-6, 2.0 * np.pi, 2049)
    s = slope(xs)
    down = np.flatnonzero((s[:-1] > 0) & (s[1:] <= 0))
    if down.size == 0:
        raise InvalidParameterError(f"no barrier to the right of the well at theta={theta}")
    i = down[0]
    return float(brentq(slope, xs[i], xs[i + 1], xtol=1e-12))
