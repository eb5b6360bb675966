"""Pure numpy implementations of the step loops.

These define the reference semantics for the compiled ``_kernels`` module;
both expose the same functions with the same argument order. Status codes
are returned rather than raised so the calling module can attach its own
diagnostics.
"""

import numpy as np

BACKEND = "python"

MIDPOINT, HEUN = 0, 1


# ---------------------------------------------------------------- classical

def _gaps(sites, length):
    g = np.empty_like(sites)
    g[:-1] = sites[1:] - sites[:-1]
    g[-1] = sites[0] + length - sites[-1]
    return g


def _phase_rhs(phi, gaps, theta, field, v):
    right = np.roll(phi, -1)
    left = np.roll(phi, 1)
    lap = (right - phi) / gaps - (phi - left) / np.roll(gaps, 1)
    return lap + 0.5 * field * gaps + v * np.sin(theta + phi)


def transport_run(phi, sites, theta, length, e_dc, e_ac, omega, v, t0, dt,
                  n_steps, probes, stride, guard, method):
    """Advance the random-pinning phase equation ``n_steps`` RK2 steps.

    Returns ``(phi, t_rec, mean_phi_rec, mean_dot_rec, cos_sums, sin_sums,
    fail_step)``; ``fail_step`` is -1 on success, otherwise the index of the
    step whose result overflowed ``guard`` (``phi`` is then the last finite
    state and the records stop there).
    """
    phi = np.array(phi, dtype=float)
    sites = np.asarray(sites, dtype=float)
    theta = np.asarray(theta, dtype=float)
    probes = np.asarray(probes, dtype=float)
    gaps = _gaps(sites, length)
    n_rec = (n_steps + stride - 1) // stride
    t_rec = np.empty(n_rec)
    mphi = np.empty(n_rec)
    mdot = np.empty(n_rec)
    cos_sums = np.zeros(probes.size)
    sin_sums = np.zeros(probes.size)
    fail = -1
    k = 0
    for n in range(n_steps):
        t = t0 + n * dt
        e1 = e_dc + e_ac * np.sin(omega * t)
        k1 = _phase_rhs(phi, gaps, theta, e1, v)
        if method == HEUN:
            e2 = e_dc + e_ac * np.sin(omega * (t + dt))
            k2 = _phase_rhs(phi + dt * k1, gaps, theta, e2, v)
            new = phi + 0.5 * dt * (k1 + k2)
        else:
            e2 = e_dc + e_ac * np.sin(omega * (t + 0.5 * dt))
            k2 = _phase_rhs(phi + 0.5 * dt * k1, gaps, theta, e2, v)
            new = phi + dt * k2
        rate = k1.mean()
        if n % stride == 0:
            t_rec[k] = t
            mphi[k] = phi.mean()
            mdot[k] = rate
            k += 1
        cos_sums += rate * np.cos(probes * t) * dt
        sin_sums += rate * np.sin(probes * t) * dt
        if not np.all(np.abs(new) <= guard):
            fail = n
            break
        phi = new
    return phi, t_rec[:k], mphi[:k], mdot[:k], cos_sums, sin_sums, fail


# ------------------------------------------------------------- pendulums

def _chain_accel(phi, w0sq, w1sq, clamped, left, right):
    ext = np.empty(phi.size + 2)
    ext[1:-1] = phi
    if clamped:
        ext[0], ext[-1] = left, right
    else:
        ext[0], ext[-1] = phi[0], phi[-1]
    return w0sq * (ext[2:] - 2.0 * phi + ext[:-2]) - w1sq * np.sin(phi)


def chain_energy(phi, vel, w0sq, w1sq, clamped, left, right):
    """Total energy per unit m l^2 of the coupled pendulum chain."""
    bonds = np.diff(phi)
    e = 0.5 * np.dot(vel, vel) + w1sq * np.sum(1.0 - np.cos(phi)) + 0.5 * w0sq * np.dot(bonds, bonds)
    if clamped:
        e += 0.5 * w0sq * ((phi[0] - left) ** 2 + (right - phi[-1]) ** 2)
    return e


def pendulum_run(phi, vel, w0sq, w1sq, clamped, left, right, dt, n_steps, stride, guard):
    """Velocity-Verlet integration of the coupled pendulum chain.

    Records ``(t, phases, energy)`` at step 0 and after every ``stride``-th
    step. Returns ``(phi, vel, t_rec, phi_rec, e_rec, fail_step)``.
    """
    phi = np.array(phi, dtype=float)
    vel = np.array(vel, dtype=float)
    n_rec = 1 + n_steps // stride
    t_rec = np.empty(n_rec)
    phi_rec = np.empty((n_rec, phi.size))
    e_rec = np.empty(n_rec)
    t_rec[0] = 0.0
    phi_rec[0] = phi
    e_rec[0] = chain_energy(phi, vel, w0sq, w1sq, clamped, left, right)
    k = 1
    acc = _chain_accel(phi, w0sq, w1sq, clamped, left, right)
    fail = -1
    for n in range(n_steps):
        half = vel + 0.5 * dt * acc
        new = phi + dt * half
        if not np.all(np.abs(new) <= guard):
            fail = n
            break
        phi = new
        acc = _chain_accel(phi, w0sq, w1sq, clamped, left, right)
        vel = half + 0.5 * dt * acc
        if (n + 1) % stride == 0:
            t_rec[k] = (n + 1) * dt
            phi_rec[k] = phi
            e_rec[k] = chain_energy(phi, vel, w0sq, w1sq, clamped, left, right)
            k += 1
    return phi, vel, t_rec[:k], phi_rec[:k], e_rec[:k], fail


# ---------------------------------------------------------------- quantum

def tridiag_solve(lower, diag, upper, rhs):
    """Thomas algorithm; ``lower[0]`` and ``upper[-1]`` are ignored.

    Raises ZeroDivisionError on a vanishing pivot.
    """
    n = diag.size
    cp = np.empty(n, dtype=complex)
    dp = np.empty(n, dtype=complex)
    piv = diag[0]
    if abs(piv) < 1e-300:
        raise ZeroDivisionError("zero pivot in tridiagonal solve")
    cp[0] = upper[0] / piv
    dp[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i] * cp[i - 1]
        if abs(piv) < 1e-300:
            raise ZeroDivisionError("zero pivot in tridiagonal solve")
        cp[i] = upper[i] / piv
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / piv
    out = np.empty(n, dtype=complex)
    out[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]
    return out


def _banded_solve(lower, diag, upper, rhs):
    from scipy.linalg import solve_banded

    ab = np.zeros((3, diag.size), dtype=complex)
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def cyclic_solve(lower, diag, upper, rhs, corner_lo, corner_hi):
    """Periodic tridiagonal solve via Sherman-Morrison.

    ``corner_lo`` couples row 0 to the last unknown and ``corner_hi`` couples
    the last row to unknown 0.
    """
    n = diag.size
    gamma = -diag[0]
    d = np.array(diag, dtype=complex)
    d[0] -= gamma
    d[-1] -= corner_hi * corner_lo / gamma
    u = np.zeros(n, dtype=complex)
    u[0] = gamma
    u[-1] = corner_hi
    y = _banded_solve(lower, d, upper, rhs)
    z = _banded_solve(lower, d, upper, u)
    fact = (y[0] + corner_lo * y[-1] / gamma) / (1.0 + z[0] + corner_lo * z[-1] / gamma)
    return y - fact * z


def washboard(x, t, mu_sq, dwp_sq, omega_d):
    return 0.5 * mu_sq * (x - omega_d * t) ** 2 + 0.5 * dwp_sq * (1.0 - np.cos(x))


def _observe(psi, x, dx, x_cut):
    dens = psi.real ** 2 + psi.imag ** 2
    norm = dens.sum() * dx
    mean_x = (x * dens).sum() * dx / norm
    beyond = dens[x > x_cut].sum() * dx / norm
    return mean_x, norm, beyond


def cn_run(psi, x, dx, hbar, d_coeff, mu_sq, dwp_sq, omega_d, t0, dt, n_steps,
           periodic, blowup, x_cut, norm0):
    """Two-level Crank-Nicolson steps with the potential at mid-step.

    Returns ``(psi, t_rec, mean_x, norm, beyond, fail_step)`` with one record
    per completed step; ``fail_step`` marks a norm blow-up.
    """
    psi = np.array(psi, dtype=complex)
    n = psi.size
    kappa = hbar * hbar / (2.0 * d_coeff * dx * dx)
    half = 0.5j * dt / hbar
    off = np.full(n, -half * kappa, dtype=complex)
    t_rec = np.empty(n_steps)
    mx = np.empty(n_steps)
    nm = np.empty(n_steps)
    bt = np.empty(n_steps)
    fail = -1
    k = 0
    for s in range(n_steps):
        tm = t0 + (s + 0.5) * dt
        hdiag = 2.0 * kappa + washboard(x, tm, mu_sq, dwp_sq, omega_d)
        if periodic:
            nb = np.roll(psi, 1) + np.roll(psi, -1)
        else:
            nb = np.zeros(n, dtype=complex)
            nb[1:] += psi[:-1]
            nb[:-1] += psi[1:]
        rhs = psi - half * (hdiag * psi - kappa * nb)
        diag = 1.0 + half * hdiag
        if periodic:
            psi = cyclic_solve(off, diag, off, rhs, off[0], off[0])
        else:
            psi = _banded_solve(off, diag, off, rhs)
        t_rec[k] = t0 + (s + 1) * dt
        mx[k], nm[k], bt[k] = _observe(psi, x, dx, x_cut)
        k += 1
        if not nm[k - 1] <= blowup * norm0:
            fail = s
            break
    return psi, t_rec[:k], mx[:k], nm[:k], bt[:k], fail


def df_run(psi, psi_prev, x, dx, hbar, mu_sq, dwp_sq, omega_d, c_nb, c_prev,
           c_pot, nb_sign, t0, dt, n_steps, periodic, blowup, x_cut, norm0):
    """Three-level Dufort-Frankel steps.

    ``psi`` is the level at time ``t0`` and ``psi_prev`` the level before.
    Each step forms ``c_nb*(psi[j-1] + nb_sign*psi[j+1]) + c_prev*psi_prev
    + c_pot*V(x, t)*psi``. Returns ``(psi, psi_prev, t_rec, mean_x, norm,
    beyond, fail_step)``.
    """
    psi = np.array(psi, dtype=complex)
    prev = np.array(psi_prev, dtype=complex)
    n = psi.size
    t_rec = np.empty(n_steps)
    mx = np.empty(n_steps)
    nm = np.empty(n_steps)
    bt = np.empty(n_steps)
    fail = -1
    k = 0
    for s in range(n_steps):
        t = t0 + s * dt
        if periodic:
            lo = np.roll(psi, 1)
            hi = np.roll(psi, -1)
        else:
            lo = np.zeros(n, dtype=complex)
            hi = np.zeros(n, dtype=complex)
            lo[1:] = psi[:-1]
            hi[:-1] = psi[1:]
        new = c_nb * (lo + nb_sign * hi) + c_prev * prev + c_pot * washboard(x, t, mu_sq, dwp_sq, omega_d) * psi
        prev, psi = psi, new
        t_rec[k] = t0 + (s + 1) * dt
        mx[k], nm[k], bt[k] = _observe(psi, x, dx, x_cut)
        k += 1
        if not nm[k - 1] <= blowup * norm0:
            fail = s
            break
    return psi, prev, t_rec[:k], mx[:k], nm[:k], bt[:k], fail


# ------------------------------------------------------------ variational

def gaussian_moments(alpha, centers, x, w, cos_x, sin_x):
    """Quadrature matrices for g_m(x) = exp(-alpha (x - c_m)^2).

    Returns ``(S, K, C, Sn, X1, X2)``: overlaps of g_m g_n with 1, of the
    derivatives g_m' g_n', and of g_m g_n with cos x, sin x, x and x^2.
    """
    dx = x[None, :] - centers[:, None]
    g = np.exp(-alpha * dx * dx)
    gp = -2.0 * alpha * dx * g
    gw = g * w
    s = gw @ g.T
    kin = (gp * w) @ gp.T
    c = (gw * cos_x) @ g.T
    sn = (gw * sin_x) @ g.T
    x1 = (gw * x) @ g.T
    x2 = (gw * (x * x)) @ g.T
    return s, kin, c, sn, x1, x2
