"""Two-copy classical densities, phase averaging and quantum conditioning.

A quantum particle is represented by two independent lifted processes: the
pair ``(xi, nu)`` follows the conjugate generator and ``(x, n)`` the lifted
generator.  Both fibers are projected on the ``p = pi/2`` sector, so the
phase weight of a state is ``exp(-i pi (n + nu) / 2)``; the conjugate
dynamics on the first leg supplies the complex conjugation.

Joint densities are arrays indexed ``[xi, nu, x, n]``; density matrices
are indexed ``[xi, x]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equivalence import EXPONENT_CAP, derive_sector_constant, quantum_propagator
from .errors import (
    AmplificationError,
    EigenvalueNotFoundError,
    ZeroProbabilityError,
)
from .lattice import ModelSpec
from .operators import FIBER, build_conjugate_generator, build_hamiltonian, build_lifted_generator, build_sector_generator
from .semigroup import expm_dense

__all__ = [
    "JointDensity",
    "DensityMatrix",
    "Observable",
    "phase_weights",
    "joint_exponent",
    "gaussian_wavepacket",
    "prepare_joint_density",
    "evolve_joint_density",
    "phase_average",
    "verify_theorem1",
    "lift_observable",
    "classical_expectation",
    "pure_state_check",
    "spectral_projector",
    "condition",
    "commute_check",
    "off_diagonal_mass",
]

_W = np.array([1, -1j, -1, 1j])


def phase_weights() -> np.ndarray:
    """``w[nu, n] = (-i)^(n + nu)``."""
    idx = np.arange(FIBER)
    return _W[(idx[:, None] + idx[None, :]) % FIBER]


@dataclass(frozen=True, eq=False)
class JointDensity:
    """Probability array over ``(xi, nu, x, n)`` at time ``t``."""

    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 4 or v.shape[1] != FIBER or v.shape[3] != FIBER or v.shape[0] != v.shape[2]:
            raise ValueError(f"joint density must have shape (S, 4, S, 4), got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def n_sites(self) -> int:
        return self.values.shape[0]

    def check(self, tol: float = 1e-12):
        if self.values.min() < -tol:
            raise ValueError(f"negative probability {self.values.min():.3g}")
        if abs(self.values.sum() - 1) > tol:
            raise ValueError(f"total mass {self.values.sum():.15g} differs from 1")
        return self

    def as_matrix(self) -> np.ndarray:
        s = self.n_sites * FIBER
        return self.values.reshape(s, s)

    def to_sparse_rows(self, threshold: float = 0.0):
        """Yield ``(xi, nu, x, n, value)`` for entries above ``threshold``."""
        for idx in zip(*np.nonzero(self.values > threshold)):
            yield (*map(int, idx), float(self.values[idx]))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray
    t: float = 0.0

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def normalized(self) -> "DensityMatrix":
        return DensityMatrix(self.matrix / self.trace.real, self.t)

    def hermiticity_residual(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))

    @property
    def purity(self) -> float:
        rho = self.normalized().matrix
        return float(np.trace(rho @ rho).real)


@dataclass(frozen=True, eq=False)
class Observable:
    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=complex)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("observable must be a square matrix")
        object.__setattr__(self, "matrix", M)

    def hermiticity_residual(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())


def _mat(x):
    return np.asarray(getattr(x, "matrix", x))


def joint_exponent(model: ModelSpec) -> float:
    """Sum of the sector constants of the lifted and conjugate generators.

    The conjugate constant is measured from the conjugate sector generator
    against ``conj((i/hbar) H)``; the sum is real.
    """
    c0 = derive_sector_constant(model).c0
    H = build_hamiltonian(model).matrix
    G = build_sector_generator(model, np.pi / 2, conjugate=True).matrix
    diff = np.conj((1j / model.constants.hbar) * H) - G
    c0_conj = complex(np.mean(diff.diagonal()))
    total = c0 + c0_conj
    if abs(total.imag) > 1e-12 * max(1.0, abs(total)):
        raise ValueError(f"joint exponent is not real: {total}")
    return total.real


def gaussian_wavepacket(model: ModelSpec, center, width: float, momentum=0.0) -> np.ndarray:
    """Normalised lattice wavefunction ``exp(-(x-x0)^2/(4 w^2) + i k.x)``.

    Displacements use the minimal periodic image.
    """
    lat = model.lattice
    pos = lat.positions()
    box = lat.sites_per_axis * lat.spacing
    disp = pos - np.atleast_1d(np.asarray(center, dtype=float))
    disp -= box * np.round(disp / box)
    k = np.broadcast_to(np.atleast_1d(np.asarray(momentum, dtype=float)), (lat.dimension,))
    psi = np.exp(-np.sum(disp**2, axis=1) / (4 * width**2) + 1j * disp @ k)
    return psi / np.linalg.norm(psi)


def prepare_joint_density(rho_q) -> JointDensity:
    """Nonnegative joint density whose phase average is proportional to ``rho_q``.

    Each complex entry is split into nonnegative parts carried by windings
    ``n = 0, 1, 2, 3`` at ``nu = 0``, whose weights are ``1, -i, -1, i``.
    The result is normalised to unit mass, so its phase average at ``t = 0``
    equals ``rho_q`` divided by the total absolute weight.
    """
    rho = _mat(rho_q)
    n = rho.shape[0]
    values = np.zeros((n, FIBER, n, FIBER))
    values[:, 0, :, 0] = np.maximum(rho.real, 0)
    values[:, 0, :, 1] = np.maximum(-rho.imag, 0)
    values[:, 0, :, 2] = np.maximum(-rho.real, 0)
    values[:, 0, :, 3] = np.maximum(rho.imag, 0)
    total = values.sum()
    if total == 0:
        raise ValueError("cannot prepare a joint density for the zero matrix")
    return JointDensity(values / total, 0.0)


def evolve_joint_density(rho_c: JointDensity, model: ModelSpec, t: float) -> JointDensity:
    """Propagate ``(xi, nu)`` with the conjugate and ``(x, n)`` with the lifted kernel."""
    if rho_c.n_sites != model.n_sites:
        raise ValueError(f"joint density has {rho_c.n_sites} sites, model has {model.n_sites}")
    K_conj = expm_dense(build_conjugate_generator(model), t).matrix
    K_lift = expm_dense(build_lifted_generator(model), t).matrix
    R = K_conj.T @ rho_c.as_matrix() @ K_lift
    return JointDensity(R.reshape(rho_c.values.shape), rho_c.t + t)


def phase_average(rho_c: JointDensity, model: ModelSpec, t: float = None, exponent_cap: float = EXPONENT_CAP) -> DensityMatrix:
    """``exp(E t) * sum_{nu, n} (-i)^(n + nu) rho_c(xi, nu; x, n)``.

    ``E`` is :func:`joint_exponent`.  ``t`` defaults to the density's own
    time stamp.  The result is not trace-normalised.
    """
    t = rho_c.t if t is None else t
    exponent = joint_exponent(model) * t
    if exponent > exponent_cap:
        raise AmplificationError(f"joint exponent {exponent:.3g} exceeds the cap {exponent_cap}")
    rho = np.einsum("anbm,nm->ab", rho_c.values, phase_weights())
    return DensityMatrix(np.exp(exponent) * rho, t)


def verify_theorem1(rho_c0: JointDensity, model: ModelSpec, t: float) -> float:
    """Max deviation between phase-averaged classical evolution and
    ``U rho_q(0) U^dagger`` with ``U = exp(-i t H / hbar)``.

    Both sides are divided by the trace of ``rho_q(0)``.
    """
    rho0 = phase_average(rho_c0, model)
    rhot = phase_average(evolve_joint_density(rho_c0, model, t), model)
    scale = rho0.trace.real
    U = quantum_propagator(model, t, sign=-1)
    expected = U @ rho0.matrix @ U.conj().T
    return float(np.abs(rhot.matrix - expected).max() / scale)


def lift_observable(F_q) -> np.ndarray:
    """Classical random variable ``F_c(xi, nu; x, n) = (-i)^(n + nu) F_q(x, xi)``."""
    F = _mat(F_q)
    return np.einsum("ba,nm->anbm", F, phase_weights())


def classical_expectation(rho_c: JointDensity, F_c, model: ModelSpec, normalize: bool = True) -> complex:
    """``exp(E t) * sum rho_c F_c``, optionally divided by the same sum for ``F_q = I``."""
    value = np.sum(rho_c.values * F_c) * np.exp(joint_exponent(model) * rho_c.t)
    if normalize:
        value /= phase_average(rho_c, model).trace.real
    return complex(value)


def pure_state_check(rho_q, tol: float = 1e-8):
    """Return ``(is_pure, psi)`` with ``rho(xi, x) = conj(psi(xi)) psi(x)``.

    ``psi`` is ``None`` when the state is mixed.  The matrix is trace
    normalised first.
    """
    rho = _mat(rho_q)
    rho = rho / np.trace(rho).real
    vals, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if len(vals) > 1 and abs(vals[-2]) >= tol:
        return False, None
    psi = np.conj(vecs[:, -1]) * np.sqrt(max(vals[-1], 0.0))
    if np.abs(np.outer(np.conj(psi), psi) - rho).max() >= tol:
        return False, None
    return True, psi / np.linalg.norm(psi)


def spectral_projector(G, g: float, tol: float = 1e-8) -> np.ndarray:
    """Projector on the eigenspace of ``G`` for eigenvalues within ``tol`` of ``g``."""
    M = _mat(G)
    vals, vecs = np.linalg.eigh(0.5 * (M + M.conj().T))
    sel = np.abs(vals - g) <= tol * max(1.0, abs(g))
    if not sel.any():
        nearest = vals[np.argmin(np.abs(vals - g))]
        raise EigenvalueNotFoundError(f"{g} is not an eigenvalue (nearest {nearest:.6g})")
    V = vecs[:, sel]
    return V @ V.conj().T


def condition(rho_q, G, g: float, tol: float = 1e-8, return_probability: bool = False):
    """``P_g rho P_g / Tr(P_g rho P_g)`` for the eigenspace of ``G`` at ``g``.

    Raises
    ------
    EigenvalueNotFoundError
        ``g`` is not within ``tol`` of an eigenvalue.
    ZeroProbabilityError
        ``Tr(P_g rho P_g) <= tol``.
    """
    rho = _mat(rho_q)
    P = spectral_projector(G, g, tol)
    projected = P @ rho @ P
    prob = np.trace(projected).real / np.trace(rho).real
    if prob <= tol:
        raise ZeroProbabilityError(f"event G = {g} has probability {prob:.3g}")
    out = DensityMatrix(projected / np.trace(projected).real, getattr(rho_q, "t", 0.0))
    return (out, float(prob)) if return_probability else out


def commute_check(F, G, tol: float = 1e-10) -> bool:
    A, B = _mat(F), _mat(G)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    return bool(np.abs(A @ B - B @ A).max() <= tol)


def off_diagonal_mass(rho_q) -> float:
    """``sum_{xi != x} |rho(xi, x)|`` of the trace-normalised matrix."""
    rho = _mat(rho_q)
    rho = rho / np.trace(rho).real
    return float(np.abs(rho).sum() - np.abs(np.diag(rho)).sum())
