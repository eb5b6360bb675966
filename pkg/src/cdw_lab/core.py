"""Shared records: impurity lattices, drive fields and washboard parameters.

Everything here is immutable once built, so lattices and drives can be handed
to worker processes without copying concerns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasiblePackingError, InvalidParameterError

TWO_PI = 2.0 * np.pi
RNG_NAME = "PCG64"
MAX_GAP_REPAIRS = 10_000


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator used by every stochastic piece of the package."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ImpurityLattice:
    """Ordered pinning sites on a periodic line of length ``grid_length``."""

    sites: np.ndarray
    pinning_phases: np.ndarray
    concentration: float
    grid_length: float
    seed: int
    min_gap: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sites", _readonly(self.sites))
        object.__setattr__(self, "pinning_phases", _readonly(self.pinning_phases))
        if self.sites.shape != self.pinning_phases.shape or self.sites.ndim != 1:
            raise InvalidParameterError("sites and pinning_phases must be equal-length 1-D arrays")

    @property
    def n_sites(self) -> int:
        return self.sites.size

    def forward_gaps(self) -> np.ndarray:
        """X_{i+1} - X_i, with the last gap wrapping to X_1 + L."""
        nxt = np.roll(self.sites, -1)
        nxt[-1] += self.grid_length
        return nxt - self.sites

    def __eq__(self, other):
        if not isinstance(other, ImpurityLattice):
            return NotImplemented
        return (
            np.array_equal(self.sites, other.sites)
            and np.array_equal(self.pinning_phases, other.pinning_phases)
            and (self.concentration, self.grid_length, self.seed, self.min_gap)
            == (other.concentration, other.grid_length, other.seed, other.min_gap)
        )

    @classmethod
    def uniform(cls, n, length, pinning_phases=None, seed=0):
        """Evenly spaced sites, handy for hand-checkable tests."""
        sites = (np.arange(n) + 0.5) * (length / n)
        if pinning_phases is None:
            pinning_phases = np.zeros(n)
        return cls(sites, np.broadcast_to(pinning_phases, (n,)), 1.0, float(length), seed, 0.0)


def default_min_gap(n: int, length: float) -> float:
    return 0.01 * length / n


def _gap_violations(x: np.ndarray, length: float, min_gap: float) -> np.ndarray:
    gaps = np.diff(x, append=x[0] + length)
    return np.flatnonzero(gaps < min_gap)


def generate_impurities(n, c=1.0, l=1.0, seed=0, min_gap=None) -> ImpurityLattice:
    """Draw ``n`` random pinning sites and phases.

    Positions R_i are uniform on (0, l), sorted, and any site closer than
    ``min_gap`` to its left neighbour (periodically) is redrawn until every
    gap clears the floor. Sites are returned as X_i = c * R_i on a grid of
    length L = c * l. Pinning phases are uniform on [0, 2pi).
    """
    n = int(n)
    if n < 1:
        raise InvalidParameterError(f"need at least one impurity, got n={n}")
    if not l > 0 or not c > 0:
        raise InvalidParameterError(f"grid length and concentration must be positive (l={l}, c={c})")
    length = c * l
    if min_gap is None:
        min_gap = default_min_gap(n, length)
    if min_gap < 0:
        raise InvalidParameterError(f"min_gap must be non-negative, got {min_gap}")
    if min_gap * n >= length:
        raise InfeasiblePackingError(
            f"cannot place {n} sites with gap {min_gap} on a grid of length {length}"
        )

    rng = make_rng(seed)
    phases = rng.uniform(0.0, TWO_PI, n)
    r = np.sort(rng.uniform(0.0, l, n))
    x = c * r
    for _ in range(MAX_GAP_REPAIRS):
        bad = _gap_violations(x, length, min_gap)
        if bad.size == 0 and x[0] > 0.0:
            break
        # redraw the right-hand member of the first offending pair
        i = (bad[0] + 1) % n if bad.size else 0
        x[i] = c * rng.uniform(0.0, l)
        x.sort()
    else:
        raise InfeasiblePackingError(
            f"gap repair did not converge in {MAX_GAP_REPAIRS} redraws (n={n}, min_gap={min_gap})"
        )
    return ImpurityLattice(x, phases, float(c), float(length), int(seed), float(min_gap))


@dataclass(frozen=True)
class DriveField:
    e_dc: float = 0.0
    e_ac: float = 0.0
    omega: float = 1.0

    def __post_init__(self):
        if self.e_ac < 0:
            raise InvalidParameterError(f"e_ac must be >= 0, got {self.e_ac}")
        if self.e_ac > 0 and not self.omega > 0:
            raise InvalidParameterError("omega must be positive when an AC component is present")


def field_at(drive: DriveField, t):
    """E_dc + E_ac sin(omega t); accepts scalar or array ``t``."""
    return drive.e_dc + drive.e_ac * np.sin(drive.omega * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class WashboardParams:
    """Rigid-phase pendulum: phi'' + phi'/tau + omega0_sq sin(phi) = coupling E(t)."""

    tau: float = 1.0
    omega0_sq: float = 1.0
    coupling: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidParameterError(f"tau must be positive, got {self.tau}")
        if self.omega0_sq < 0:
            raise InvalidParameterError(f"omega0_sq must be >= 0, got {self.omega0_sq}")


CONFIG_KEYS = ("n_sites", "concentration", "grid_length", "seed", "min_gap", "e_dc", "e_ac", "omega")
