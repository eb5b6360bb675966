import numpy as np
import pytest
from hypothesis import given, strategies as st

from cdw_lab.classical import (
    PINNED, SLIDING, PhaseState, ResponseAccumulator, classify, conductivity, dielectric,
    discrete_laplacian, phase_rhs, relaxation_rates, run_transport, run_washboard, stable_dt,
    step_rk2, step_washboard, threshold_scan,
)
from cdw_lab.core import DriveField, ImpurityLattice, WashboardParams, generate_impurities
from cdw_lab.errors import (
    DegenerateGapError, DivergenceError, InvalidParameterError, UnknownFrequencyError,
    UnresolvedThresholdError,
)


def lattice_from(sites, length, thetas=None):
    sites = np.asarray(sites, dtype=float)
    thetas = np.zeros_like(sites) if thetas is None else np.asarray(thetas, dtype=float)
    return ImpurityLattice(sites, thetas, 1.0, float(length), 0)


# ---------------------------------------------------------------- laplacian

def test_laplacian_middle():
    lat = lattice_from([1, 2, 3], 3.0)
    assert discrete_laplacian(PhaseState([0.0, 1.0, 0.0]), lat, 1) == -2.0


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_laplacian_wrap_first(a, b, c):
    lat = lattice_from([1, 2, 3], 3.0)
    got = discrete_laplacian(PhaseState([a, b, c]), lat, 0)
    assert got == pytest.approx((b - a) - (a - c), abs=1e-12)


def test_laplacian_wrap_last():
    lat = lattice_from([1, 2, 3], 4.0)
    # right neighbour of site 3 is (phi_1, X_1 + L) = (phi_1, 5), gap 2
    got = discrete_laplacian(PhaseState([4.0, 0.0, 1.0]), lat, 2)
    assert got == pytest.approx((4.0 - 1.0) / 2.0 - (1.0 - 0.0) / 1.0)


@given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
def test_laplacian_annihilates_affine_interior(seed, slope, offset):
    lat = generate_impurities(12, 1.0, 12.0, seed)
    phi = PhaseState(slope * lat.sites + offset)
    for i in range(1, 11):
        assert abs(discrete_laplacian(phi, lat, i)) < 1e-9


def test_laplacian_degenerate_gap():
    lat = lattice_from([1.0, 1.0, 2.0], 3.0)
    with pytest.raises(DegenerateGapError):
        discrete_laplacian(PhaseState([0.0, 0.0, 0.0]), lat, 0)
    with pytest.raises(DegenerateGapError):
        phase_rhs(PhaseState([0.0, 0.0, 0.0]), lat, DriveField())


def test_laplacian_misaligned():
    with pytest.raises(InvalidParameterError):
        discrete_laplacian(PhaseState([0.0, 1.0]), lattice_from([1, 2, 3], 3.0), 0)


def test_phase_state_rejects_nonfinite():
    with pytest.raises(DivergenceError):
        PhaseState([0.0, np.nan])


# ---------------------------------------------------------------------- rhs

def test_rhs_zero():
    lat = ImpurityLattice.uniform(5, 5.0)
    assert np.all(phase_rhs(PhaseState.zeros(lat), lat, DriveField()) == 0.0)


def test_rhs_pinning_term():
    lat = lattice_from([0.5, 1.5, 2.5], 3.0, np.full(3, np.pi / 2))
    np.testing.assert_allclose(phase_rhs(PhaseState.zeros(lat), lat, DriveField()), 1.0)


def test_rhs_field_term():
    lat = ImpurityLattice.uniform(4, 4.0)
    np.testing.assert_allclose(phase_rhs(PhaseState.zeros(lat), lat, DriveField(2.0), 0.0), 1.0)


def test_rhs_matches_laplacian(lattice64):
    phi = PhaseState(np.sin(np.arange(64.0)))
    rhs = phase_rhs(phi, lattice64, DriveField(), v_strength=0.0)
    lap = [discrete_laplacian(phi, lattice64, i) for i in range(64)]
    np.testing.assert_allclose(rhs, lap, atol=1e-12)


def test_rhs_drive_uses_forward_gap_with_wrap():
    lat = lattice_from([1.0, 2.0, 4.0], 6.0)
    rhs = phase_rhs(PhaseState.zeros(lat), lat, DriveField(2.0), 0.0)
    np.testing.assert_allclose(rhs, [1.0, 2.0, 3.0])


# ---------------------------------------------------------------------- rk2

def test_rk2_zero_rhs(backend):
    lat = generate_impurities(8, 1.0, 8.0, 2)
    # a uniform phase has zero Laplacian, so V = E = 0 leaves it fixed
    s = PhaseState(np.full(8, 0.4), 0.3)
    out = step_rk2(s, lat, DriveField(), 0.0, 0.01)
    np.testing.assert_array_equal(out.phases, s.phases)
    assert out.t == pytest.approx(0.31)


@pytest.mark.parametrize("method", ["midpoint", "heun"])
def test_rk2_constant_rhs_exact(method):
    # equal gaps keep the phase uniform, so the right-hand side stays constant
    lat = ImpurityLattice.uniform(8, 12.0)
    out = step_rk2(PhaseState.zeros(lat), lat, DriveField(0.7), 0.0, 0.05, method)
    np.testing.assert_allclose(out.phases, 0.05 * 0.35 * 1.5, rtol=1e-14)


def test_rk2_second_order():
    lat = generate_impurities(16, 1.0, 16.0, 11)
    drive = DriveField(0.2, 0.3, 1.3)
    s0 = PhaseState(0.3 * np.sin(lat.sites))
    total = 2.0
    dts = [0.04, 0.02]
    ref = run_transport(lat, drive, 1.0, dts[-1] / 100, int(round(total * 100 / dts[-1])), state=s0)
    errs = []
    for dt in dts:
        r = run_transport(lat, drive, 1.0, dt, int(round(total / dt)), state=s0)
        errs.append(np.abs(r.final_state.phases - ref.final_state.phases).max())
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_rk2_bad_dt():
    lat = ImpurityLattice.uniform(3, 3.0)
    with pytest.raises(InvalidParameterError):
        step_rk2(PhaseState.zeros(lat), lat, DriveField(), dt=0.0)
    with pytest.raises(InvalidParameterError):
        step_rk2(PhaseState.zeros(lat), lat, DriveField(), dt=0.1, method="euler")


def test_divergence_reported(backend):
    lat = ImpurityLattice.uniform(4, 4.0)
    with pytest.raises(DivergenceError) as info:
        run_transport(lat, DriveField(1e10), 0.0, 1.0, 10, backend=backend)
    assert info.value.step == 0
    assert np.all(np.isfinite(info.value.state.phases))


def test_stable_dt_is_stable(lattice64):
    r = run_transport(lattice64, DriveField(), 1.0, stable_dt(lattice64, 0.99), 5000,
                      state=PhaseState(0.01 * np.cos(7 * lattice64.sites)))
    assert abs(r.late_rate()) < 1e-6


# ------------------------------------------------------------ transport/dft

def test_v0_constant_drive_constant_rate(lattice64):
    r = run_transport(lattice64, DriveField(0.3), 0.0, 0.05, 400)
    np.testing.assert_allclose(r.mean_phase_dot, r.mean_phase_dot[0], rtol=1e-12)
    assert r.mean_phase_dot[0] == pytest.approx(0.15 * lattice64.grid_length / 64)


def test_pinned_relaxes(lattice64):
    r = run_transport(lattice64, DriveField(), 1.0, stable_dt(lattice64), 20000)
    assert abs(r.late_rate()) < 1e-6
    assert classify(r) == PINNED


def test_in_loop_dft_matches_post_hoc(lattice64):
    omegas = np.array([0.05, 0.3, 1.7])
    dt = 0.02
    r = run_transport(lattice64, DriveField(0.1, 0.2, 0.3), 1.0, dt, 10_000, omegas)
    t, rate = r.t, r.mean_phase_dot
    for k, w in enumerate(omegas):
        ref = complex(np.sum(rate * np.cos(w * t) * dt), np.sum(rate * np.sin(w * t) * dt))
        got = conductivity(r.accumulator, w)
        assert abs(got - ref) <= 1e-10 * abs(ref)
    assert r.accumulator.n_updates == 10_000


def test_accumulator_orthogonality():
    w0, dt = 2.0, 1e-3
    n = int(round(20 * 2 * np.pi / w0 / dt))
    t = dt * np.arange(n)
    acc = ResponseAccumulator([w0, 2 * w0], g1=1.5)
    acc.add_trace(np.cos(w0 * t), t, dt)
    T = n * dt
    assert conductivity(acc, w0).real == pytest.approx(1.5 * T / 2, rel=5e-3)
    assert abs(conductivity(acc, 2 * w0)) < 1e-2 * T


def test_accumulator_constant_signal():
    w, dt, n = 0.7, 1e-4, 30_000
    t = dt * np.arange(n)
    acc = ResponseAccumulator([w])
    acc.add_trace(np.ones(n), t, dt)
    assert conductivity(acc, w).real == pytest.approx(np.sin(w * n * dt) / w, abs=1e-4)


def test_accumulator_empty_and_unknown():
    acc = ResponseAccumulator([1.0])
    assert conductivity(acc, 1.0) == 0
    with pytest.raises(UnknownFrequencyError):
        conductivity(acc, 2.0)


@pytest.mark.parametrize("sigma, omega, expected", [
    (0j, 1.0, 0j),
    (1j, 2 * np.pi, 2 + 0j),
    (1 + 1j, 4 * np.pi, 1 + 1j),
])
def test_dielectric(sigma, omega, expected):
    assert dielectric(sigma, omega) == pytest.approx(expected, abs=1e-14)


def test_dielectric_zero_frequency():
    with pytest.raises(InvalidParameterError):
        dielectric(1j, 0.0)


def test_rescaling_keeps_peak_frequency(lattice64):
    omegas = np.geomspace(0.05, 5.0, 9)
    r = run_transport(lattice64, DriveField(0.0, 0.01, 1.0), 1.0, 0.02, 5000, omegas)
    eps = np.array([dielectric(conductivity(r.accumulator, w), w) for w in omegas])
    assert np.argmax(np.abs(eps / eps[0])) == np.argmax(np.abs(eps))


# ---------------------------------------------------------------- threshold

def test_threshold_all_zero_unresolved():
    lat = generate_impurities(8, 1.0, 8.0, 1)
    with pytest.raises(InvalidParameterError):
        threshold_scan(lat, [0.0, 0.0], 0.05, 100)
    with pytest.raises(UnresolvedThresholdError):
        threshold_scan(lat, [0.0], 0.05, 100)


def test_threshold_v0_slides_immediately():
    lat = generate_impurities(8, 1.0, 8.0, 1)
    scan = threshold_scan(lat, [0.0, 1e-3, 1e-2], 0.05, 200, v_strength=0.0)
    assert scan.classes == [PINNED, SLIDING, SLIDING]
    assert 0.0 <= scan.e_th <= 1e-3


def test_threshold_reproducible():
    lat = generate_impurities(16, 1.0, 16.0, 42)
    fields = np.linspace(0.1, 1.6, 6)
    dt = stable_dt(lat)
    a = threshold_scan(lat, fields, dt, 20000, n_bisect=3)
    b = threshold_scan(lat, fields, dt, 20000, n_bisect=3)
    assert a.e_th == b.e_th and a.classes == b.classes
    lo, hi = a.bracket
    i = a.classes.index(SLIDING)
    assert fields[i - 1] <= lo < hi <= fields[i]
    assert a.slopes.shape == fields.shape
    np.testing.assert_array_equal(a.slopes, b.slopes)
    # the classifier and the recorded late drift tell the same story
    assert np.all(np.abs(a.slopes[:i]) < 1e-6) and np.all(a.slopes[i:] > 1e-3)


# ---------------------------------------------------------------- washboard

def test_washboard_fixed_point():
    p = WashboardParams()
    assert step_washboard(0.0, 0.0, p, DriveField(), 0.01) == (0.0, 0.0)


def test_washboard_small_oscillation_frequency():
    w0 = 3.0
    p = WashboardParams(tau=1e12, omega0_sq=w0**2)
    dt = 1e-3
    n = int(10 * 2 * np.pi / w0 / dt) + 200
    t, phi, _ = run_washboard(1e-3, 0.0, p, DriveField(), dt, n)
    up = np.flatnonzero((phi[:-1] < 0) & (phi[1:] >= 0))
    crossings = t[up] - phi[up] * dt / (phi[up + 1] - phi[up])
    freq = 2 * np.pi / np.mean(np.diff(crossings[:11]))
    assert freq == pytest.approx(w0, rel=0.01)


def test_washboard_static_balance():
    p = WashboardParams(tau=0.2, omega0_sq=2.0, coupling=0.5)
    _, phi, dot = run_washboard(0.0, 0.0, p, DriveField(1.2), 1e-3, 60000)
    assert phi[-1] == pytest.approx(np.arcsin(0.5 * 1.2 / 2.0), abs=1e-6)
    assert abs(dot[-1]) < 1e-6


def test_relaxation_rates_positive_when_pinned(lattice64):
    r = run_transport(lattice64, DriveField(), 1.0, stable_dt(lattice64), 20000)
    rates = relaxation_rates(r.final_state, lattice64)
    assert rates[0] > 0 and np.all(np.diff(rates) >= 0)
