"""Physical model on a periodic cubic lattice.

Holds the lattice geometry, physical constants and external fields, and
derives the regularisation scales: the time step ``dt = m a^2 / hbar`` and
the energy threshold ``K0`` that keeps every winding-jump rate nonnegative.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InfeasibleModelError, LatticeError

__all__ = [
    "LatticeSpec",
    "PhysicalConstants",
    "FieldConfig",
    "ModelSpec",
    "derive_dt",
    "effective_potential",
    "split_vector_potential",
    "choose_k0",
    "k0_interval",
    "site_index",
    "index_site",
]

# relative slack when testing |V| <= 2 K0 <= 2 hbar^2/(a^2 m)
_BOUND_RTOL = 1e-12


@dataclass(frozen=True)
class LatticeSpec:
    """Periodic lattice ``(a Z_L)^d``."""

    dimension: int
    sites_per_axis: int
    spacing: float

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise LatticeError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if int(self.sites_per_axis) != self.sites_per_axis or self.sites_per_axis < 1:
            raise LatticeError(f"sites_per_axis must be a positive integer, got {self.sites_per_axis}")
        if self.sites_per_axis**self.dimension < 2:
            raise LatticeError("lattice needs at least two sites")
        if not self.spacing > 0:
            raise LatticeError(f"spacing must be positive, got {self.spacing}")

    @property
    def n_sites(self) -> int:
        return self.sites_per_axis**self.dimension

    @property
    def shape(self) -> tuple:
        return (self.sites_per_axis,) * self.dimension

    def coordinates(self) -> np.ndarray:
        """Integer coordinates of every site, shape ``(n_sites, d)``, row-major."""
        return np.array(np.unravel_index(np.arange(self.n_sites), self.shape)).T

    def positions(self) -> np.ndarray:
        """Physical positions ``a * coordinates``."""
        return self.spacing * self.coordinates()

    def neighbor(self, sites, axis: int, step: int) -> np.ndarray:
        """Flat index of the neighbour ``x + step * e_axis`` with periodic wrap."""
        coords = np.array(np.unravel_index(np.asarray(sites), self.shape))
        coords[axis] = (coords[axis] + step) % self.sites_per_axis
        return np.ravel_multi_index(tuple(coords), self.shape)


@dataclass(frozen=True)
class PhysicalConstants:
    mass: float = 1.0
    charge: float = 1.0
    light_speed: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("mass", "light_speed", "hbar"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive, got {value}")
        if not np.isfinite(self.charge):
            raise ValueError("charge must be finite")


def _frozen(array, shape, name):
    out = np.array(array, dtype=float, copy=True)
    if out.shape != shape:
        raise LatticeError(f"{name} must have shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite values")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class FieldConfig:
    """Site-sampled external potentials.

    ``vector_potential`` has shape ``(n_sites, d)``, ``scalar_potential``
    shape ``(n_sites,)``.  Arrays are copied and made read-only.
    """

    vector_potential: np.ndarray
    scalar_potential: np.ndarray

    @classmethod
    def zero(cls, lattice: LatticeSpec) -> "FieldConfig":
        return cls(
            np.zeros((lattice.n_sites, lattice.dimension)), np.zeros(lattice.n_sites)
        )

    def checked(self, lattice: LatticeSpec) -> "FieldConfig":
        n, d = lattice.n_sites, lattice.dimension
        vec = np.asarray(self.vector_potential, dtype=float)
        if vec.ndim == 1 and d == 1:
            vec = vec[:, None]
        return FieldConfig(
            _frozen(vec, (n, d), "vector_potential"),
            _frozen(self.scalar_potential, (n,), "scalar_potential"),
        )


def derive_dt(lattice: LatticeSpec, constants: PhysicalConstants) -> float:
    """Time step at which the regularised action is quantised: ``m a^2 / hbar``."""
    return constants.mass * lattice.spacing**2 / constants.hbar


def effective_potential(fields: FieldConfig, constants: PhysicalConstants, site=None):
    """``V = e^2 |A|^2 / (2 c^2 m) + e phi`` at ``site`` (all sites if None)."""
    e, c, m = constants.charge, constants.light_speed, constants.mass
    vec = np.asarray(fields.vector_potential, dtype=float)
    if vec.ndim == 1:
        vec = vec[:, None]
    V = e**2 / (2 * c**2 * m) * np.sum(vec**2, axis=1) + e * np.asarray(
        fields.scalar_potential, dtype=float
    )
    if site is None:
        return V
    return float(V[site])


def split_vector_potential(value):
    """Split into nonnegative parts ``(max(v, 0), max(-v, 0))``."""
    v = np.asarray(value, dtype=float)
    plus, minus = np.maximum(v, 0.0), np.maximum(-v, 0.0)
    if plus.ndim == 0:
        return float(plus), float(minus)
    return plus, minus


def k0_interval(fields, constants, lattice) -> tuple:
    """Admissible ``[sup|V|/2, hbar^2/(a^2 m)]`` for the energy threshold."""
    V = effective_potential(fields, constants)
    lo = float(np.max(np.abs(V))) / 2 if V.size else 0.0
    hi = constants.hbar**2 / (lattice.spacing**2 * constants.mass)
    return lo, hi


def choose_k0(fields, constants, lattice) -> float:
    """Midpoint of the admissible K0 interval.

    Raises
    ------
    InfeasibleModelError
        If ``sup|V| / 2 > hbar^2 / (a^2 m)``.
    """
    lo, hi = k0_interval(fields, constants, lattice)
    if lo > hi * (1 + _BOUND_RTOL):
        raise InfeasibleModelError(
            f"sup|V|/2 = {lo:.6g} exceeds hbar^2/(a^2 m) = {hi:.6g}; "
            "refine the lattice spacing or weaken the potential"
        )
    return 0.5 * (lo + hi)


def site_index(lattice: LatticeSpec, coordinates) -> int:
    coords = tuple(int(c) for c in np.atleast_1d(coordinates))
    if len(coords) != lattice.dimension:
        raise LatticeError(f"expected {lattice.dimension} coordinates, got {len(coords)}")
    if any(c < 0 or c >= lattice.sites_per_axis for c in coords):
        raise LatticeError(f"coordinates {coords} outside [0, {lattice.sites_per_axis})")
    return int(np.ravel_multi_index(coords, lattice.shape))


def index_site(lattice: LatticeSpec, index: int) -> tuple:
    if not 0 <= index < lattice.n_sites:
        raise LatticeError(f"site index {index} outside [0, {lattice.n_sites})")
    return tuple(int(c) for c in np.unravel_index(int(index), lattice.shape))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Complete specification of one lattice model.

    ``k0=None`` selects the midpoint of the admissible interval.  The
    constructor rejects any ``k0`` outside ``[sup|V|/2, hbar^2/(a^2 m)]``.
    """

    lattice: LatticeSpec
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    fields: FieldConfig = None
    k0: float = None

    def __post_init__(self):
        fields = self.fields if self.fields is not None else FieldConfig.zero(self.lattice)
        object.__setattr__(self, "fields", fields.checked(self.lattice))
        lo, hi = k0_interval(self.fields, self.constants, self.lattice)
        if self.k0 is None:
            object.__setattr__(self, "k0", choose_k0(self.fields, self.constants, self.lattice))
        else:
            k0 = float(self.k0)
            slack = _BOUND_RTOL * max(hi, 1.0)
            if not (lo - slack <= k0 <= hi + slack):
                raise InfeasibleModelError(
                    f"K0 = {k0:.6g} outside admissible interval [{lo:.6g}, {hi:.6g}]"
                )
            object.__setattr__(self, "k0", k0)

    @property
    def dt(self) -> float:
        return derive_dt(self.lattice, self.constants)

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @cached_property
    def potential(self) -> np.ndarray:
        V = effective_potential(self.fields, self.constants)
        V.setflags(write=False)
        return V

    @property
    def hop_rate(self) -> float:
        """Kinetic hop rate ``hbar / (2 m a^2)`` per direction."""
        c = self.constants
        return c.hbar / (2 * c.mass * self.lattice.spacing**2)

    def replace(self, **changes) -> "ModelSpec":
        """Copy with some of lattice/constants/fields/k0 replaced.

        K0 is re-derived unless given explicitly.
        """
        kwargs = dict(lattice=self.lattice, constants=self.constants, fields=self.fields, k0=None)
        kwargs.update(changes)
        return ModelSpec(**kwargs)

    def to_dict(self) -> dict:
        lat, c = self.lattice, self.constants
        return {
            "dimension": lat.dimension,
            "sites_per_axis": lat.sites_per_axis,
            "spacing": lat.spacing,
            "mass": c.mass,
            "charge": c.charge,
            "light_speed": c.light_speed,
            "hbar": c.hbar,
            "k0": self.k0,
            "dt": self.dt,
            "vector_potential": self.fields.vector_potential.tolist(),
            "scalar_potential": self.fields.scalar_potential.tolist(),
        }

    def model_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
