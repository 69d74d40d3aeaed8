import numpy as np
import pytest

from stochmech import FieldConfig, LatticeSpec, ModelSpec, PhysicalConstants, preset
from stochmech.config import PRESETS

PRESET_NAMES = sorted(PRESETS)
EXACT_PRESETS = ["free", "harmonic"]  # presets with A = 0


@pytest.fixture(params=PRESET_NAMES)
def any_preset(request):
    return preset(request.param)


@pytest.fixture(params=EXACT_PRESETS)
def exact_preset(request):
    return preset(request.param)


@pytest.fixture
def free():
    return preset("free")


def random_model(rng, sites=6, dimension=1, with_vector=False, spacing=1.0, mass=1.0, hbar=1.0):
    """Admissible model with a random potential using most of the K0 budget."""
    lattice = LatticeSpec(dimension, sites, spacing)
    constants = PhysicalConstants(mass=mass, hbar=hbar)
    bound = hbar**2 / (spacing**2 * mass)
    n, d = lattice.n_sites, dimension
    vec = 0.2 * rng.uniform(-1, 1, (n, d)) if with_vector else np.zeros((n, d))
    phi = rng.uniform(-1.5, 1.5, n) * bound
    return ModelSpec(lattice, constants, FieldConfig(vec, phi))


# Acceptance verdicts, one line per criterion, printed after the run.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[2:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
