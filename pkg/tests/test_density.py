import csv

import numpy as np
import pytest

from aqt import density, states
from aqt.errors import ShapeError, ValidationError
from conftest import random_density


def test_export_round_trip_is_exact(tmp_path, rng):
    dm = density.DensityMatrix(2, random_density(rng, 4), projected=True, projection_distance=0.125)
    path = tmp_path / "rho.json"
    density.write_export(dm, path)
    back = density.read_export(path)
    assert np.array_equal(back.matrix, dm.matrix)
    assert back.projected and back.projection_distance == 0.125 and back.n_qubits == 2


def test_raw_export_has_null_distance(tmp_path):
    dm = density.DensityMatrix(1, np.eye(2) / 2)
    text = density.export_text(dm)
    assert '"projection_distance": null' in text and '"projected": false' in text
    assert "qubit0-most-significant" in text


def test_export_rejects_foreign_documents(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ValidationError):
        density.read_export(path)


def test_shape_checked():
    with pytest.raises(ShapeError):
        density.DensityMatrix(2, np.eye(2))


def test_corner_mass_of_ghz_is_one():
    dm = density.DensityMatrix(3, states.to_dense(states.ghz(3)))
    assert dm.corner_mass() == pytest.approx(1.0)
    mixed = density.DensityMatrix(2, np.eye(4) / 4)
    assert mixed.corner_mass() == pytest.approx(0.5)


def test_bar_csv(tmp_path):
    m = states.to_dense(states.ghz(2))
    path = tmp_path / "bars.csv"
    density.write_bar_csv(density.DensityMatrix(2, m), path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["row", "col", "abs_value"]
    assert len(rows) == 17
    vals = {(int(r), int(c)): float(v) for r, c, v in rows[1:]}
    assert vals[(0, 3)] == pytest.approx(0.5) and vals[(1, 2)] == 0.0
