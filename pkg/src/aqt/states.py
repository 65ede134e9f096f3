"""Rank-structured target states.

A :class:`ProductOperatorEnsemble` stores an operator as a short sum of
tensor products of 2x2 factors. GHZ states and the faulty-qubit mixture need
only four or eight terms at any qubit count, so POVM probabilities and
samples can be produced without ever forming the 2^N x 2^N matrix.

Basis ordering: qubit 0 is the most significant bit of the computational
basis index, e.g. ``|100>`` is index 4 for three qubits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import CapacityError, DomainError, ShapeError

#: Largest qubit count for which :func:`to_dense` builds a matrix.
MAX_DENSE_QUBITS = 12

_TRACE_TOL = 1e-12


def ket_bra(s: int, t: int) -> np.ndarray:
    """The single-qubit operator ``|s><t|``."""
    m = np.zeros((2, 2), dtype=np.complex128)
    m[s, t] = 1.0
    return m


@dataclass(frozen=True, eq=False)
class ProductOperatorEnsemble:
    """Operator ``sum_t coeffs[t] * kron(factors[t, 0], ..., factors[t, N-1])``.

    ``factors`` has shape ``(terms, n_qubits, 2, 2)``. The constructor checks
    that the operator is Hermitian (the term list is closed under adjoint)
    and has unit trace.
    """

    n_qubits: int
    coeffs: np.ndarray
    factors: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        if self.n_qubits < 1:
            raise DomainError("an ensemble needs at least one qubit")
        coeffs = np.ascontiguousarray(self.coeffs, dtype=np.complex128).reshape(-1)
        factors = np.ascontiguousarray(self.factors, dtype=np.complex128)
        if factors.shape != (coeffs.size, self.n_qubits, 2, 2):
            raise ShapeError(
                f"factors must have shape ({coeffs.size}, {self.n_qubits}, 2, 2), "
                f"got {factors.shape}"
            )
        if not (np.all(np.isfinite(coeffs)) and np.all(np.isfinite(factors))):
            raise DomainError("ensemble has non-finite entries")
        coeffs.setflags(write=False)
        factors.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "factors", factors)
        tr = self.trace()
        if abs(tr - 1.0) > _TRACE_TOL:
            raise DomainError(f"ensemble trace is {tr}, expected 1")
        if not self._closed_under_adjoint():
            raise DomainError("ensemble is not Hermitian: term list is not closed under adjoint")

    @property
    def n_terms(self) -> int:
        return self.coeffs.size

    def trace(self) -> complex:
        traces = np.trace(self.factors, axis1=2, axis2=3)
        return complex(np.sum(self.coeffs * np.prod(traces, axis=1)))

    def adjoint(self) -> "ProductOperatorEnsemble":
        return ProductOperatorEnsemble(
            self.n_qubits,
            np.conj(self.coeffs),
            np.conj(np.swapaxes(self.factors, 2, 3)),
            label=self.label,
        )

    def _closed_under_adjoint(self, tol: float = 1e-12) -> bool:
        adj_f = np.conj(np.swapaxes(self.factors, 2, 3))
        adj_c = np.conj(self.coeffs)
        unused = set(range(self.n_terms))
        for t in range(self.n_terms):
            match = None
            for u in unused:
                if abs(self.coeffs[u] - adj_c[t]) <= tol and np.allclose(
                    self.factors[u], adj_f[t], rtol=0.0, atol=tol
                ):
                    match = u
                    break
            if match is None:
                return False
            unused.discard(match)
        return True


def ghz(n_qubits: int) -> ProductOperatorEnsemble:
    """``|GHZ><GHZ|`` for ``(|0...0> + |1...1>)/sqrt(2)`` as four product terms."""
    if n_qubits < 1:
        raise DomainError("GHZ state needs n_qubits >= 1")
    coeffs, factors = [], []
    for s in (0, 1):
        for t in (0, 1):
            coeffs.append(0.5)
            factors.append([ket_bra(s, t)] * n_qubits)
    return ProductOperatorEnsemble(n_qubits, np.array(coeffs), np.array(factors), label=f"ghz:{n_qubits}")


def faulty_qubit_state(p: float) -> ProductOperatorEnsemble:
    """Three-qubit GHZ whose qubit 0 is flipped with probability ``p``.

    The result is ``(1-p)|GHZ><GHZ| + p|psi><psi|`` with
    ``|psi> = (|100> + |011>)/sqrt(2)``.
    """
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"flip probability must lie in [0, 1], got {p}")
    coeffs, factors = [], []
    for weight, flip in ((1.0 - p, 0), (p, 1)):
        for s in (0, 1):
            for t in (0, 1):
                coeffs.append(0.5 * weight)
                factors.append([ket_bra(s ^ flip, t ^ flip), ket_bra(s, t), ket_bra(s, t)])
    return ProductOperatorEnsemble(3, np.array(coeffs), np.array(factors), label=f"faulty:{p:g}")


def product_state(kets) -> ProductOperatorEnsemble:
    """Pure product state from one normalised 2-vector per qubit."""
    factors = []
    for k in kets:
        k = np.asarray(k, dtype=np.complex128)
        k = k / np.linalg.norm(k)
        factors.append(np.outer(k, k.conj()))
    return ProductOperatorEnsemble(len(factors), np.array([1.0]), np.array([factors]), label="product")


def to_dense(e: ProductOperatorEnsemble) -> np.ndarray:
    if e.n_qubits > MAX_DENSE_QUBITS:
        raise CapacityError(
            f"to_dense supports at most {MAX_DENSE_QUBITS} qubits, got {e.n_qubits}"
        )
    dim = 2**e.n_qubits
    out = np.zeros((dim, dim), dtype=np.complex128)
    for c, fs in zip(e.coeffs, e.factors):
        if c == 0:
            continue
        out += c * linalg.kron_all(fs)
    return 0.5 * (out + out.conj().T)


def parse_state_spec(spec: str) -> ProductOperatorEnsemble:
    """Build a state from ``ghz:N`` or ``faulty:p``."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "ghz":
            return ghz(int(arg))
        if kind == "faulty":
            return faulty_qubit_state(float(arg))
    except ValueError as exc:
        raise DomainError(f"bad state spec {spec!r}: {exc}") from exc
    raise DomainError(f"unknown state spec {spec!r}; expected ghz:N or faulty:p")
