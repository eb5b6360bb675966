# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled step loops; same signatures and semantics as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp, fabs

cnp.import_array()

BACKEND = "cython"

DEF MIDPOINT = 0
DEF HEUN = 1


# ---------------------------------------------------------------- classical

cdef inline void _rhs(const double[::1] phi, const double[::1] gaps,
                      const double[::1] theta, double field, double v,
                      double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = phi.shape[0], i, il, ir
    cdef double lap
    for i in range(n):
        il = i - 1 if i > 0 else n - 1
        ir = i + 1 if i < n - 1 else 0
        lap = (phi[ir] - phi[i]) / gaps[i] - (phi[i] - phi[il]) / gaps[il]
        out[i] = lap + 0.5 * field * gaps[i] + v * sin(theta[i] + phi[i])


def transport_run(phi_in, sites_in, theta_in, double length, double e_dc,
                  double e_ac, double omega, double v, double t0, double dt,
                  Py_ssize_t n_steps, probes_in, Py_ssize_t stride,
                  double guard, int method):
    cdef double[::1] phi = np.array(phi_in, dtype=np.float64)
    cdef const double[::1] sites = np.ascontiguousarray(sites_in, dtype=np.float64)
    cdef const double[::1] theta = np.ascontiguousarray(theta_in, dtype=np.float64)
    cdef const double[::1] probes = np.ascontiguousarray(probes_in, dtype=np.float64)
    cdef Py_ssize_t n = phi.shape[0], n_p = probes.shape[0]
    cdef Py_ssize_t n_rec = (n_steps + stride - 1) // stride
    cdef double[::1] gaps = np.empty(n)
    cdef double[::1] k1 = np.empty(n)
    cdef double[::1] k2 = np.empty(n)
    cdef double[::1] tmp = np.empty(n)
    cdef double[::1] new = np.empty(n)
    t_rec_a = np.empty(n_rec)
    mphi_a = np.empty(n_rec)
    mdot_a = np.empty(n_rec)
    cos_a = np.zeros(n_p)
    sin_a = np.zeros(n_p)
    cdef double[::1] t_rec = t_rec_a, mphi = mphi_a, mdot = mdot_a
    cdef double[::1] cos_s = cos_a, sin_s = sin_a
    cdef Py_ssize_t i, s, p, k = 0, fail = -1
    cdef double t, e1, e2, rate, total
    cdef bint bad

    for i in range(n - 1):
        gaps[i] = sites[i + 1] - sites[i]
    gaps[n - 1] = sites[0] + length - sites[n - 1]

    with nogil:
        for s in range(n_steps):
            t = t0 + s * dt
            e1 = e_dc + e_ac * sin(omega * t)
            _rhs(phi, gaps, theta, e1, v, k1)
            if method == HEUN:
                e2 = e_dc + e_ac * sin(omega * (t + dt))
                for i in range(n):
                    tmp[i] = phi[i] + dt * k1[i]
                _rhs(tmp, gaps, theta, e2, v, k2)
                for i in range(n):
                    new[i] = phi[i] + 0.5 * dt * (k1[i] + k2[i])
            else:
                e2 = e_dc + e_ac * sin(omega * (t + 0.5 * dt))
                for i in range(n):
                    tmp[i] = phi[i] + 0.5 * dt * k1[i]
                _rhs(tmp, gaps, theta, e2, v, k2)
                for i in range(n):
                    new[i] = phi[i] + dt * k2[i]
            total = 0.0
            for i in range(n):
                total = total + k1[i]
            rate = total / n
            if s % stride == 0:
                total = 0.0
                for i in range(n):
                    total = total + phi[i]
                t_rec[k] = t
                mphi[k] = total / n
                mdot[k] = rate
                k += 1
            for p in range(n_p):
                cos_s[p] += rate * cos(probes[p] * t) * dt
                sin_s[p] += rate * sin(probes[p] * t) * dt
            bad = False
            for i in range(n):
                if not (fabs(new[i]) <= guard):
                    bad = True
                    break
            if bad:
                fail = s
                break
            for i in range(n):
                phi[i] = new[i]
    return (np.asarray(phi), t_rec_a[:k], mphi_a[:k], mdot_a[:k], cos_a, sin_a, fail)


# ------------------------------------------------------------- pendulums

cdef inline void _accel(const double[::1] phi, double w0sq, double w1sq, bint clamped,
                        double left, double right, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = phi.shape[0], i
    cdef double lo, hi
    for i in range(n):
        if i > 0:
            lo = phi[i - 1]
        else:
            lo = left if clamped else phi[0]
        if i < n - 1:
            hi = phi[i + 1]
        else:
            hi = right if clamped else phi[n - 1]
        out[i] = w0sq * (hi - 2.0 * phi[i] + lo) - w1sq * sin(phi[i])


cdef double _energy(const double[::1] phi, const double[::1] vel, double w0sq, double w1sq,
                    bint clamped, double left, double right) noexcept nogil:
    cdef Py_ssize_t n = phi.shape[0], i
    cdef double kin = 0.0, pot = 0.0, bond = 0.0, d
    for i in range(n):
        kin += vel[i] * vel[i]
        pot += 1.0 - cos(phi[i])
    for i in range(n - 1):
        d = phi[i + 1] - phi[i]
        bond += d * d
    cdef double e = 0.5 * kin + w1sq * pot + 0.5 * w0sq * bond
    if clamped:
        e += 0.5 * w0sq * ((phi[0] - left) ** 2 + (right - phi[n - 1]) ** 2)
    return e


def chain_energy(phi_in, vel_in, double w0sq, double w1sq, bint clamped, double left, double right):
    cdef const double[::1] phi = np.ascontiguousarray(phi_in, dtype=np.float64)
    cdef const double[::1] vel = np.ascontiguousarray(vel_in, dtype=np.float64)
    return _energy(phi, vel, w0sq, w1sq, clamped, left, right)


def pendulum_run(phi_in, vel_in, double w0sq, double w1sq, bint clamped, double left,
                 double right, double dt, Py_ssize_t n_steps, Py_ssize_t stride, double guard):
    cdef double[::1] phi = np.array(phi_in, dtype=np.float64)
    cdef double[::1] vel = np.array(vel_in, dtype=np.float64)
    cdef Py_ssize_t n = phi.shape[0], n_rec = 1 + n_steps // stride
    cdef double[::1] acc = np.empty(n)
    cdef double[::1] half = np.empty(n)
    cdef double[::1] new = np.empty(n)
    t_rec_a = np.empty(n_rec)
    phi_rec_a = np.empty((n_rec, n))
    e_rec_a = np.empty(n_rec)
    cdef double[::1] t_rec = t_rec_a, e_rec = e_rec_a
    cdef double[:, ::1] phi_rec = phi_rec_a
    cdef Py_ssize_t i, s, k = 1, fail = -1
    cdef bint bad

    t_rec[0] = 0.0
    phi_rec[0, :] = phi
    e_rec[0] = _energy(phi, vel, w0sq, w1sq, clamped, left, right)
    with nogil:
        _accel(phi, w0sq, w1sq, clamped, left, right, acc)
        for s in range(n_steps):
            bad = False
            for i in range(n):
                half[i] = vel[i] + 0.5 * dt * acc[i]
                new[i] = phi[i] + dt * half[i]
                if not (fabs(new[i]) <= guard):
                    bad = True
            if bad:
                fail = s
                break
            for i in range(n):
                phi[i] = new[i]
            _accel(phi, w0sq, w1sq, clamped, left, right, acc)
            for i in range(n):
                vel[i] = half[i] + 0.5 * dt * acc[i]
            if (s + 1) % stride == 0:
                t_rec[k] = (s + 1) * dt
                for i in range(n):
                    phi_rec[k, i] = phi[i]
                e_rec[k] = _energy(phi, vel, w0sq, w1sq, clamped, left, right)
                k += 1
    return (np.asarray(phi), np.asarray(vel), t_rec_a[:k], phi_rec_a[:k], e_rec_a[:k], fail)


# ---------------------------------------------------------------- quantum

cdef inline double _cabs(double complex z) noexcept nogil:
    return (z.real * z.real + z.imag * z.imag) ** 0.5


cdef int _thomas(const double complex[::1] lower, const double complex[::1] diag,
                 const double complex[::1] upper, const double complex[::1] rhs,
                 double complex[::1] cp, double complex[::1] dp,
                 double complex[::1] out) noexcept nogil:
    cdef Py_ssize_t n = diag.shape[0], i
    cdef double complex piv = diag[0]
    if _cabs(piv) < 1e-300:
        return -1
    cp[0] = upper[0] / piv
    dp[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i] * cp[i - 1]
        if _cabs(piv) < 1e-300:
            return -1
        cp[i] = upper[i] / piv
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / piv
    out[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]
    return 0


def tridiag_solve(lower_in, diag_in, upper_in, rhs_in):
    cdef const double complex[::1] lower = np.ascontiguousarray(lower_in, dtype=np.complex128)
    cdef const double complex[::1] diag = np.ascontiguousarray(diag_in, dtype=np.complex128)
    cdef const double complex[::1] upper = np.ascontiguousarray(upper_in, dtype=np.complex128)
    cdef const double complex[::1] rhs = np.ascontiguousarray(rhs_in, dtype=np.complex128)
    cdef Py_ssize_t n = diag.shape[0]
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] cp = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] dp = np.empty(n, dtype=np.complex128)
    if _thomas(lower, diag, upper, rhs, cp, dp, out) != 0:
        raise ZeroDivisionError("zero pivot in tridiagonal solve")
    return out


cdef int _cyclic(const double complex[::1] lower, double complex[::1] diag,
                 const double complex[::1] upper, const double complex[::1] rhs,
                 double complex corner_lo, double complex corner_hi,
                 double complex[::1] u, double complex[::1] y, double complex[::1] z,
                 double complex[::1] cp, double complex[::1] dp,
                 double complex[::1] out) noexcept nogil:
    # diag is used as scratch and restored before returning
    cdef Py_ssize_t n = diag.shape[0], i
    cdef double complex gamma = -diag[0], d0 = diag[0], dn = diag[n - 1], fact
    diag[0] = d0 - gamma
    diag[n - 1] = dn - corner_hi * corner_lo / gamma
    for i in range(n):
        u[i] = 0.0
    u[0] = gamma
    u[n - 1] = corner_hi
    if _thomas(lower, diag, upper, rhs, cp, dp, y) != 0:
        diag[0] = d0
        diag[n - 1] = dn
        return -1
    if _thomas(lower, diag, upper, u, cp, dp, z) != 0:
        diag[0] = d0
        diag[n - 1] = dn
        return -1
    diag[0] = d0
    diag[n - 1] = dn
    fact = (y[0] + corner_lo * y[n - 1] / gamma) / (1.0 + z[0] + corner_lo * z[n - 1] / gamma)
    for i in range(n):
        out[i] = y[i] - fact * z[i]
    return 0


def cyclic_solve(lower_in, diag_in, upper_in, rhs_in, double complex corner_lo, double complex corner_hi):
    cdef const double complex[::1] lower = np.ascontiguousarray(lower_in, dtype=np.complex128)
    cdef double complex[::1] diag = np.array(diag_in, dtype=np.complex128)
    cdef const double complex[::1] upper = np.ascontiguousarray(upper_in, dtype=np.complex128)
    cdef const double complex[::1] rhs = np.ascontiguousarray(rhs_in, dtype=np.complex128)
    cdef Py_ssize_t n = diag.shape[0]
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] u = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] y = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] z = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] cp = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] dp = np.empty(n, dtype=np.complex128)
    if _cyclic(lower, diag, upper, rhs, corner_lo, corner_hi, u, y, z, cp, dp, out) != 0:
        raise ZeroDivisionError("zero pivot in cyclic tridiagonal solve")
    return out


def washboard(x, t, mu_sq, dwp_sq, omega_d):
    return 0.5 * mu_sq * (x - omega_d * t) ** 2 + 0.5 * dwp_sq * (1.0 - np.cos(x))


cdef inline double _pot(double x, double t, double mu_sq, double dwp_sq, double omega_d) noexcept nogil:
    cdef double q = x - omega_d * t
    return 0.5 * mu_sq * q * q + 0.5 * dwp_sq * (1.0 - cos(x))


cdef inline void _observe(const double complex[::1] psi, const double[::1] x, double dx,
                          double x_cut, double* mean_x, double* norm, double* beyond) noexcept nogil:
    cdef Py_ssize_t i
    cdef double dens, s = 0.0, sx = 0.0, sb = 0.0
    for i in range(psi.shape[0]):
        dens = psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
        s += dens
        sx += x[i] * dens
        if x[i] > x_cut:
            sb += dens
    norm[0] = s * dx
    mean_x[0] = sx * dx / norm[0]
    beyond[0] = sb * dx / norm[0]


def cn_run(psi_in, x_in, double dx, double hbar, double d_coeff, double mu_sq,
           double dwp_sq, double omega_d, double t0, double dt, Py_ssize_t n_steps,
           bint periodic, double blowup, double x_cut, double norm0):
    cdef double complex[::1] psi = np.array(psi_in, dtype=np.complex128)
    cdef const double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t n = psi.shape[0], i, s, k = 0, fail = -1
    cdef double kappa = hbar * hbar / (2.0 * d_coeff * dx * dx)
    cdef double complex half = 0.5j * dt / hbar
    cdef double complex[::1] off = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] diag = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] hd = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] rhs = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] u = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] y = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] z = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] cp = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] dp = np.empty(n, dtype=np.complex128)
    t_rec_a = np.empty(n_steps)
    mx_a = np.empty(n_steps)
    nm_a = np.empty(n_steps)
    bt_a = np.empty(n_steps)
    cdef double[::1] t_rec = t_rec_a, mx = mx_a, nm = nm_a, bt = bt_a
    cdef double tm, hdi
    cdef double complex nb
    cdef int status = 0

    for i in range(n):
        off[i] = -half * kappa
    with nogil:
        for s in range(n_steps):
            tm = t0 + (s + 0.5) * dt
            for i in range(n):
                hdi = 2.0 * kappa + _pot(x[i], tm, mu_sq, dwp_sq, omega_d)
                if i > 0:
                    nb = psi[i - 1]
                elif periodic:
                    nb = psi[n - 1]
                else:
                    nb = 0.0
                if i < n - 1:
                    nb = nb + psi[i + 1]
                elif periodic:
                    nb = nb + psi[0]
                rhs[i] = psi[i] - half * (hdi * psi[i] - kappa * nb)
                diag[i] = 1.0 + half * hdi
            if periodic:
                status = _cyclic(off, diag, off, rhs, off[0], off[0], u, y, z, cp, dp, psi)
            else:
                status = _thomas(off, diag, off, rhs, cp, dp, psi)
            if status != 0:
                break
            t_rec[k] = t0 + (s + 1) * dt
            _observe(psi, x, dx, x_cut, &mx[k], &nm[k], &bt[k])
            k += 1
            if not (nm[k - 1] <= blowup * norm0):
                fail = s
                break
    if status != 0:
        raise ZeroDivisionError("zero pivot in Crank-Nicolson solve")
    return (np.asarray(psi), t_rec_a[:k], mx_a[:k], nm_a[:k], bt_a[:k], fail)


def df_run(psi_in, prev_in, x_in, double dx, double hbar, double mu_sq, double dwp_sq,
           double omega_d, double complex c_nb, double complex c_prev, double complex c_pot,
           double nb_sign, double t0, double dt, Py_ssize_t n_steps, bint periodic,
           double blowup, double x_cut, double norm0):
    cdef double complex[::1] psi = np.array(psi_in, dtype=np.complex128)
    cdef double complex[::1] prev = np.array(prev_in, dtype=np.complex128)
    cdef double complex[::1] new = np.empty_like(psi)
    cdef double complex[::1] swap
    cdef const double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t n = psi.shape[0], i, s, k = 0, fail = -1
    t_rec_a = np.empty(n_steps)
    mx_a = np.empty(n_steps)
    nm_a = np.empty(n_steps)
    bt_a = np.empty(n_steps)
    cdef double[::1] t_rec = t_rec_a, mx = mx_a, nm = nm_a, bt = bt_a
    cdef double t
    cdef double complex lo, hi

    with nogil:
        for s in range(n_steps):
            t = t0 + s * dt
            for i in range(n):
                if i > 0:
                    lo = psi[i - 1]
                elif periodic:
                    lo = psi[n - 1]
                else:
                    lo = 0.0
                if i < n - 1:
                    hi = psi[i + 1]
                elif periodic:
                    hi = psi[0]
                else:
                    hi = 0.0
                new[i] = (c_nb * (lo + nb_sign * hi) + c_prev * prev[i]
                          + c_pot * _pot(x[i], t, mu_sq, dwp_sq, omega_d) * psi[i])
            swap = prev
            prev = psi
            psi = new
            new = swap
            t_rec[k] = t0 + (s + 1) * dt
            _observe(psi, x, dx, x_cut, &mx[k], &nm[k], &bt[k])
            k += 1
            if not (nm[k - 1] <= blowup * norm0):
                fail = s
                break
    return (np.array(psi), np.array(prev), t_rec_a[:k], mx_a[:k], nm_a[:k], bt_a[:k], fail)


# ------------------------------------------------------------ variational

def gaussian_moments(double alpha, centers_in, x_in, w_in, cos_in, sin_in):
    cdef const double[::1] centers = np.ascontiguousarray(centers_in, dtype=np.float64)
    cdef const double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef const double[::1] cx = np.ascontiguousarray(cos_in, dtype=np.float64)
    cdef const double[::1] sx = np.ascontiguousarray(sin_in, dtype=np.float64)
    cdef Py_ssize_t m = centers.shape[0], n = x.shape[0], a, b, i
    cdef double[:, ::1] g = np.empty((m, n))
    cdef double[:, ::1] gp = np.empty((m, n))
    mats = np.zeros((6, m, m))
    cdef double[:, :, ::1] out = mats
    cdef double d, gg, wi, xi, s0, s1, s2, s3, s4, s5
    with nogil:
        for a in range(m):
            for i in range(n):
                d = x[i] - centers[a]
                g[a, i] = exp(-alpha * d * d)
                gp[a, i] = -2.0 * alpha * d * g[a, i]
        for a in range(m):
            for b in range(a, m):
                s0 = s1 = s2 = s3 = s4 = s5 = 0.0
                for i in range(n):
                    wi = w[i]
                    xi = x[i]
                    gg = g[a, i] * g[b, i] * wi
                    s0 += gg
                    s1 += gp[a, i] * gp[b, i] * wi
                    s2 += gg * cx[i]
                    s3 += gg * sx[i]
                    s4 += gg * xi
                    s5 += gg * xi * xi
                out[0, a, b] = s0
                out[1, a, b] = s1
                out[2, a, b] = s2
                out[3, a, b] = s3
                out[4, a, b] = s4
                out[5, a, b] = s5
                for i in range(6):
                    out[i, b, a] = out[i, a, b]
    return mats[0], mats[1], mats[2], mats[3], mats[4], mats[5]
