"""Classical and quantum fidelity, and projection onto physical states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .density import DensityMatrix
from .errors import CapacityError, DomainError, ShapeError
from .model import TransformerModel, log_probs, sample_model
from .povm import N_OUTCOMES, all_outcomes

#: Largest qubit count for exhaustive classical fidelity (4^8 outcomes).
MAX_EXACT_QUBITS = 8

_ENUM_CHUNK = 16384


@dataclass(frozen=True)
class FidelityEstimate:
    value: float
    std_error: float
    n_samples: int
    method: str

    def __str__(self) -> str:
        if self.method == "exact":
            return f"{self.value:.6f} (exact)"
        return f"{self.value:.6f} +/- {self.std_error:.6f} ({self.n_samples} samples)"


def _evaluate(p, outcomes) -> np.ndarray:
    vals = np.asarray(p(outcomes), dtype=float)
    if np.any(vals < 0):
        raise DomainError("probability evaluator returned a negative value")
    return vals


def classical_fidelity_exact(p0, p1, n_qubits: int) -> FidelityEstimate:
    """``sum_a sqrt(p0(a) p1(a))`` over every outcome string."""
    if n_qubits > MAX_EXACT_QUBITS:
        raise CapacityError(
            f"exact classical fidelity enumerates 4^N outcomes; capped at {MAX_EXACT_QUBITS} qubits"
        )
    outs = all_outcomes(n_qubits)
    terms = np.empty(len(outs))
    for start in range(0, len(outs), _ENUM_CHUNK):
        chunk = outs[start : start + _ENUM_CHUNK]
        terms[start : start + len(chunk)] = np.sqrt(_evaluate(p0, chunk) * _evaluate(p1, chunk))
    return FidelityEstimate(float(np.sum(terms)), 0.0, N_OUTCOMES**n_qubits, "exact")


def classical_fidelity_sampled(p0, model: TransformerModel, n_samples: int, seed: int) -> FidelityEstimate:
    """Monte Carlo estimate of the classical fidelity using the model as proposal.

    Draws ``a ~ p1`` from the model and averages ``sqrt(p0(a) / p1(a))``; the
    reported error is the sample standard deviation over ``sqrt(n)``.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    outs = sample_model(model, n_samples, seed).outcomes
    ratios = np.empty(n_samples)
    for start in range(0, n_samples, _ENUM_CHUNK):
        chunk = outs[start : start + _ENUM_CHUNK]
        q = _evaluate(p0, chunk)
        lp1 = log_probs(model, chunk)
        ratios[start : start + len(chunk)] = np.sqrt(q * np.exp(-lp1))
    mean = float(ratios.mean())
    se = float(ratios.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return FidelityEstimate(mean, se, n_samples, "sampled")


def _as_density(rho, name: str) -> np.ndarray:
    m = rho.matrix if isinstance(rho, DensityMatrix) else linalg.as_matrix(rho)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name} is not square")
    if np.max(np.abs(m - m.conj().T)) > 1e-10:
        raise DomainError(f"{name} is not Hermitian")
    tr = np.trace(m).real
    if abs(tr - 1.0) > 1e-8:
        raise DomainError(f"{name} has trace {tr}, expected 1")
    m = 0.5 * (m + m.conj().T)
    w = np.linalg.eigvalsh(m)
    if w[0] < -1e-9:
        raise DomainError(f"{name} is not positive semidefinite (eigenvalue {w[0]:.3g}); project it first")
    return m


def quantum_fidelity(rho0, rho1) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho0) rho1 sqrt(rho0)))^2``."""
    a = _as_density(rho0, "rho0")
    b = _as_density(rho1, "rho1")
    if a.shape != b.shape:
        raise ShapeError(f"rho0 {a.shape} and rho1 {b.shape} differ in shape")
    s = linalg.psd_sqrt(a)
    inner = linalg.hermitian_part(s @ b @ s)
    w = np.linalg.eigvalsh(inner)
    # round-off eigenvalues of a rank-deficient product would add sqrt(eps)-sized terms
    floor = w.size * np.finfo(float).eps * max(np.max(np.abs(w)), 0.0)
    w = np.where(w > floor, w, 0.0)
    f = float(np.sum(np.sqrt(w)) ** 2)
    return min(max(f, 0.0), 1.0)


def _simplex_shift(w: np.ndarray) -> float:
    # threshold mu with sum(max(w - mu, 0)) == 1
    u = np.sort(w)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    last = np.nonzero(u - (css - 1.0) / k > 0)[0][-1]
    return (css[last] - 1.0) / (last + 1)


def project_to_psd(m, method: str = "closest") -> tuple[DensityMatrix, float]:
    """Map a Hermitian, roughly unit-trace matrix to a density matrix.

    ``method="closest"`` returns the unit-trace PSD matrix nearest in
    Frobenius norm: eigenvalues are shifted by a common constant and clipped
    at zero. ``method="clip"`` clips negative eigenvalues and rescales the
    rest. Both return the Frobenius distance moved.
    """
    raw = m.matrix if isinstance(m, DensityMatrix) else linalg.as_matrix(m)
    h = linalg.hermitian_part(raw)
    w, v = linalg.hermitian_eig(h)
    if np.all(w <= 0):
        raise DomainError("matrix has no positive eigenvalue; cannot project to a state")
    if method == "closest":
        new_w = np.clip(w - _simplex_shift(w), 0.0, None)
    elif method == "clip":
        new_w = np.clip(w, 0.0, None)
        new_w /= new_w.sum()
    else:
        raise DomainError(f"unknown projection method {method!r}")
    out = (v * new_w) @ v.conj().T
    out = 0.5 * (out + out.conj().T)
    dist = float(np.linalg.norm(out - raw))
    n = int(round(np.log2(out.shape[0])))
    return DensityMatrix(n, out, projected=True, projection_distance=dist), dist
