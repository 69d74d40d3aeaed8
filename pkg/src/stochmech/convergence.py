"""Continuum-limit study: lattice propagation of a Gaussian against closed forms.

The lattice propagator ``exp(i t H / hbar)`` evolves a state backwards in
ordinary Schrodinger time, so the continuum references are evaluated at
``tau = -t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .lattice import FieldConfig, LatticeSpec, ModelSpec, PhysicalConstants
from .operators import build_hamiltonian
from .semigroup import expm_action

__all__ = [
    "REFERENCE_KINDS",
    "free_gaussian",
    "harmonic_coherent_state",
    "ConvergenceRow",
    "ConvergenceTable",
    "lattice_model",
    "lattice_error",
    "convergence_table",
]

REFERENCE_KINDS = ("free", "harmonic")

_DEFAULTS = {
    "free": {"box": 30.0, "width": 1.0, "momentum": 1.0},
    "harmonic": {"box": 16.0, "stiffness": 1.0, "amplitude": 1.0},
}


def free_gaussian(x, tau, x0, width, momentum, constants: PhysicalConstants = PhysicalConstants()):
    """Free Schrodinger evolution of a normalised Gaussian after time ``tau``.

    ``psi(x, 0) = (2 pi s^2)^(-1/4) exp(-(x-x0)^2 / (4 s^2) + i k (x-x0))``.
    """
    hbar, m = constants.hbar, constants.mass
    s2 = width**2
    alpha = s2 + 1j * hbar * tau / (2 * m)
    y = np.asarray(x, dtype=float) - x0
    norm = (2 * np.pi * s2) ** -0.25 * np.sqrt(s2 / alpha)
    return norm * np.exp((2 * s2 * momentum + 1j * y) ** 2 / (4 * alpha) - s2 * momentum**2)


def harmonic_coherent_state(x, tau, center, stiffness, amplitude, constants: PhysicalConstants = PhysicalConstants()):
    """Coherent state of ``p^2/2m + k (x - center)^2 / 2`` displaced by ``amplitude`` at rest.

    Uses ``<x|alpha> = (m w / pi hbar)^(1/4) exp(-xi^2/2 + sqrt2 alpha xi - alpha^2/2 - |alpha|^2/2)``
    with ``alpha(tau) = alpha0 exp(-i w tau)`` and the global phase ``exp(-i w tau / 2)``.
    """
    hbar, m = constants.hbar, constants.mass
    w = np.sqrt(stiffness / m)
    scale = np.sqrt(m * w / hbar)
    xi = scale * (np.asarray(x, dtype=float) - center)
    alpha = scale * amplitude / np.sqrt(2) * np.exp(-1j * w * tau)
    return (
        (m * w / (np.pi * hbar)) ** 0.25
        * np.exp(-xi**2 / 2 + np.sqrt(2) * alpha * xi - alpha**2 / 2 - abs(alpha) ** 2 / 2)
        * np.exp(-0.5j * w * tau)
    )


def lattice_model(kind: str, spacing: float, box: float, stiffness: float = 0.0,
                  constants: PhysicalConstants = PhysicalConstants()) -> ModelSpec:
    n = int(round(box / spacing))
    if abs(n * spacing - box) > 1e-9 * box:
        raise ConfigError(f"box {box} is not a multiple of the spacing {spacing}")
    lattice = LatticeSpec(1, n, spacing)
    x = lattice.positions()[:, 0]
    phi = np.zeros(n)
    if kind == "harmonic":
        phi = 0.5 * stiffness * (x - box / 2) ** 2 / constants.charge  # e * phi is the potential energy
    fields = FieldConfig(np.zeros((n, 1)), phi)
    return ModelSpec(lattice, constants, fields)


@dataclass(frozen=True)
class ConvergenceRow:
    spacing: float
    sites: int
    error: float
    ratio: float = float("nan")  # previous error / this error
    order: float = float("nan")  # log2 of ratio


@dataclass
class ConvergenceTable:
    kind: str
    t: float
    box: float
    rows: list = field(default_factory=list)

    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.rows])

    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows[1:]])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "t": self.t,
            "box": self.box,
            "rows": [r.__dict__ for r in self.rows],
        }


def _reference(kind, x, tau, box, params, constants):
    if kind == "free":
        return free_gaussian(x, tau, box / 2, params["width"], params["momentum"], constants)
    return harmonic_coherent_state(x, tau, box / 2, params["stiffness"], params["amplitude"], constants)


def lattice_error(kind: str, spacing: float, t: float, constants=PhysicalConstants(), **params) -> float:
    """Discrete L2 error ``sqrt(a sum |psi_lattice - psi_ref|^2)`` at time ``t``."""
    if kind not in REFERENCE_KINDS:
        raise ConfigError(f"no continuum reference for {kind!r}; choose one of {REFERENCE_KINDS}")
    p = {**_DEFAULTS[kind], **params}
    model = lattice_model(kind, spacing, p["box"], p.get("stiffness", 0.0), constants)
    x = model.lattice.positions()[:, 0]
    psi0 = _reference(kind, x, 0.0, p["box"], p, constants)
    H = build_hamiltonian(model).matrix
    psi_t = expm_action(1j * H / constants.hbar, psi0, t, tol=1e-12, krylov_dim=40)
    ref = _reference(kind, x, -t, p["box"], p, constants)
    return float(np.sqrt(spacing * np.sum(np.abs(psi_t - ref) ** 2)))


def convergence_table(kind: str, a0: float = 0.2, t: float = 1.0, levels: int = 3,
                      constants=PhysicalConstants(), **params) -> ConvergenceTable:
    """Errors for ``a0, a0/2, ...`` at fixed box and ``t``, with successive ratios.

    Second-order differencing gives ratios near 4 once ``a`` resolves the
    packet's momentum content.
    """
    p = {**_DEFAULTS.get(kind, {}), **params}
    table = ConvergenceTable(kind, float(t), float(p.get("box", 0.0)))
    prev = None
    for level in range(levels):
        a = a0 / 2**level
        err = lattice_error(kind, a, t, constants, **p)
        n = int(round(p["box"] / a))
        if prev is None or err == 0:
            table.rows.append(ConvergenceRow(a, n, err))
        else:
            ratio = prev / err
            table.rows.append(ConvergenceRow(a, n, err, ratio, float(np.log2(ratio))))
        prev = err
    return table
