"""Density-matrix record and its text export."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError

EXPORT_FORMAT = "aqt-dm v1"
BASIS_CONVENTION = "qubit0-most-significant"


@dataclass(eq=False)
class DensityMatrix:
    """A reconstructed ``2^N x 2^N`` matrix.

    ``projected`` is False for raw frame inversions, which are Hermitian with
    unit trace but may have negative eigenvalues.
    """

    n_qubits: int
    matrix: np.ndarray
    projected: bool = False
    projection_distance: float | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        dim = 2**self.n_qubits
        if m.shape != (dim, dim):
            raise ShapeError(f"expected a {dim}x{dim} matrix for {self.n_qubits} qubits, got {m.shape}")
        self.matrix = m

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def corner_mass(self) -> float:
        """Share of total absolute mass held by the four GHZ corner elements."""
        a = np.abs(self.matrix)
        last = self.dim - 1
        corners = a[0, 0] + a[0, last] + a[last, 0] + a[last, last]
        return float(corners / a.sum())


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def export_text(dm: DensityMatrix) -> str:
    """JSON document with the real and imaginary parts at 17 significant digits."""

    def rows(part):
        return "[" + ",\n    ".join("[" + ", ".join(_fmt(v) for v in row) + "]" for row in part) + "]"

    dist = "null" if dm.projection_distance is None else _fmt(dm.projection_distance)
    return (
        "{\n"
        f'  "format": "{EXPORT_FORMAT}",\n'
        f'  "n_qubits": {dm.n_qubits},\n'
        f'  "basis_convention": "{BASIS_CONVENTION}",\n'
        f'  "projected": {"true" if dm.projected else "false"},\n'
        f'  "projection_distance": {dist},\n'
        f'  "real": {rows(dm.matrix.real)},\n'
        f'  "imag": {rows(dm.matrix.imag)}\n'
        "}\n"
    )


def write_export(dm: DensityMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(export_text(dm))


def read_export(path) -> DensityMatrix:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != EXPORT_FORMAT:
        raise ValidationError(f"{path}: not an {EXPORT_FORMAT} document")
    if doc.get("basis_convention") != BASIS_CONVENTION:
        raise ValidationError(f"{path}: unsupported basis convention {doc.get('basis_convention')!r}")
    m = np.array(doc["real"], dtype=float) + 1j * np.array(doc["imag"], dtype=float)
    return DensityMatrix(int(doc["n_qubits"]), m, bool(doc["projected"]), doc.get("projection_distance"))


def write_bar_csv(dm: DensityMatrix, path) -> None:
    """One row per matrix element: ``row,col,abs_value`` for bar plots."""
    a = np.abs(dm.matrix)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "abs_value"])
        for i in range(dm.dim):
            for j in range(dm.dim):
                w.writerow([i, j, _fmt(a[i, j])])
