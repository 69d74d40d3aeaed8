"""Lattice Z4-gauge classical diffusion representation of quantum mechanics."""

__version__ = "0.1.0"

from .lattice import (  # noqa: E402
    FieldConfig,
    LatticeSpec,
    ModelSpec,
    PhysicalConstants,
    choose_k0,
    derive_dt,
    effective_potential,
    index_site,
    site_index,
    split_vector_potential,
)
from .operators import (  # noqa: E402
    build_base_generator,
    build_conjugate_generator,
    build_hamiltonian,
    build_lifted_generator,
    build_sector_generator,
    fiber_fourier,
)
from .semigroup import FiberKernel, expm_action, expm_dense, uniformize  # noqa: E402
from .equivalence import (  # noqa: E402
    antiparticle_kernel,
    derive_sector_constant,
    reconstruct_quantum_kernel,
    sector_identity_residual,
)
from .config import load_model, preset  # noqa: E402
