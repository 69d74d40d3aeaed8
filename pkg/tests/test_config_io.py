import textwrap

import numpy as np
import pytest

from stochmech import build_hamiltonian, build_lifted_generator, load_model, preset
from stochmech import io
from stochmech.config import PRESETS, model_from_config, preset_config
from stochmech.errors import ConfigError, InfeasibleModelError


def write(tmp_path, text):
    path = tmp_path / "model.yaml"
    path.write_text(textwrap.dedent(text))
    return path


def test_presets_build_and_fit_the_dense_cap():
    for name in PRESETS:
        model = preset(name)
        assert model.lattice.dimension == 1 and model.n_sites == 8
        assert 4 * model.n_sites <= 4096


def test_preset_harmonic_potential():
    model = preset("harmonic")
    x = model.lattice.positions()[:, 0]
    np.testing.assert_allclose(model.potential, 0.125 * (x - 3.5) ** 2)
    assert model.potential.max() / 2 <= model.k0 <= 1.0


def test_full_file_round_trip(tmp_path):
    path = write(tmp_path, """
        dimension: 1
        sites_per_axis: 8
        spacing: 1.0
        mass: 1.0
        charge: 1.0
        light_speed: 1.0
        hbar: 1.0
        potential:
          kind: harmonic
          stiffness: 0.25
        vector_potential:
          kind: zero
        """)
    assert load_model(path).model_hash() == preset("harmonic").model_hash()


def test_custom_tables_and_k0(tmp_path):
    path = write(tmp_path, """
        dimension: 2
        sites_per_axis: 2
        spacing: 1.0
        potential:
          kind: custom-table
          values: [0.0, 0.1, 0.2, 0.3]
        vector_potential:
          kind: custom-table
          values: [[0.1, 0.0], [0.0, 0.1], [0.0, 0.0], [-0.1, 0.0]]
        k0: 0.6
        """)
    model = load_model(path)
    assert model.k0 == 0.6
    np.testing.assert_allclose(model.fields.scalar_potential, [0.0, 0.1, 0.2, 0.3])
    assert model.fields.vector_potential.shape == (4, 2)


def test_yaml_syntax_error_reports_line(tmp_path):
    path = write(tmp_path, "dimension: 1\nsites_per_axis: [8\nspacing: 1\n")
    with pytest.raises(ConfigError, match="line"):
        load_model(path)


@pytest.mark.parametrize(
    "body,key",
    [
        ("dimension: 1\nsites_per_axis: 8\nspacing: fast\n", "spacing"),
        ("dimension: 1\nspacing: 1.0\n", "sites_per_axis"),
        ("dimension: 1\nsites_per_axis: 8\nspacing: 1.0\ncolour: red\n", "colour"),
        ("dimension: 1\nsites_per_axis: 8\nspacing: 1.0\npotential:\n  kind: cubic\n", "potential"),
        ("dimension: 1\nsites_per_axis: 8\nspacing: 1.0\npotential:\n  kind: custom-table\n  values: [1, 2]\n", "potential"),
        ("dimension: 1\nsites_per_axis: 8\nspacing: 1.0\nvector_potential:\n  kind: constant\n", "vector_potential"),
        ("dimension: 1\nsites_per_axis: 8\nspacing: -1.0\n", None),
    ],
)
def test_schema_errors_name_key(tmp_path, body, key):
    with pytest.raises(ConfigError) as info:
        load_model(write(tmp_path, body))
    if key:
        assert key in str(info.value)
        if key in body:  # keys present in the file also get their line
            assert "line" in str(info.value)


def test_infeasible_model_is_reported():
    cfg = preset_config("harmonic")
    cfg["potential"]["stiffness"] = 10.0
    with pytest.raises(InfeasibleModelError):
        model_from_config(cfg)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset("square-well")


def test_triplet_round_trip(tmp_path):
    model = preset("constant-A")
    for op in (build_lifted_generator(model), build_hamiltonian(model)):
        path = tmp_path / "op.txt"
        io.write_triplets(path, op, model)
        header = path.read_text().splitlines()[0]
        assert model.model_hash() in header and "stochmech" in header
        mat, tag = io.read_triplets(path)
        assert np.abs((mat - op.matrix).toarray()).max() == 0
        assert tag


def test_matrix_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    M = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    path = tmp_path / "m.csv"
    io.write_matrix_csv(path, M)
    np.testing.assert_array_equal(io.read_matrix_csv(path), M)
