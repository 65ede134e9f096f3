"""Density matrices from a trained model, from raw frequencies, or by MLE."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .density import DensityMatrix
from .errors import CapacityError, DomainError
from .fidelity import project_to_psd
from .model import TransformerModel, log_probs
from .povm import N_OUTCOMES, OutcomeDataset, PovmFrame, all_outcomes, operator_expectations, operator_sum

log = logging.getLogger(__name__)

MAX_MODEL_QUBITS = 8
MAX_LINEAR_QUBITS = 8
MAX_MLE_QUBITS = 6

_ENUM_CHUNK = 16384
# eigenvalue slack for treating an inverted matrix as already physical
_PSD_SLACK = 1e-12


def _check(n_qubits: int, cap: int, what: str) -> None:
    if n_qubits > cap:
        raise CapacityError(f"{what} is capped at {cap} qubits, got {n_qubits}")


def model_distribution(model: TransformerModel) -> np.ndarray:
    """``p_1(a)`` for every outcome string in lexicographic order."""
    n = model.config.max_len
    _check(n, MAX_MODEL_QUBITS, "model enumeration")
    outs = all_outcomes(n)
    probs = np.empty(len(outs))
    for start in range(0, len(outs), _ENUM_CHUNK):
        chunk = outs[start : start + _ENUM_CHUNK]
        probs[start : start + len(chunk)] = np.exp(log_probs(model, chunk))
    return probs


def invert_distribution(probs: np.ndarray, frame: PovmFrame, n_qubits: int) -> DensityMatrix:
    """``sum_a probs[a] kron(duals[a_i])``, symmetrised; exact for exact inputs."""
    rho = operator_sum(probs, frame.duals, n_qubits)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(n_qubits, rho, projected=False)


def reconstruct_from_model(model: TransformerModel, frame: PovmFrame) -> DensityMatrix:
    """Raw (possibly indefinite) density matrix implied by the model's distribution."""
    return invert_distribution(model_distribution(model), frame, model.config.max_len)


def linear_inversion(dataset: OutcomeDataset, frame: PovmFrame) -> DensityMatrix:
    _check(dataset.n_qubits, MAX_LINEAR_QUBITS, "linear inversion")
    if len(dataset) == 0:
        raise DomainError("cannot invert an empty dataset")
    return invert_distribution(dataset.frequencies(), frame, dataset.n_qubits)


@dataclass
class MleResult:
    density: DensityMatrix
    log_likelihoods: list[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    diluted_steps: int = 0
    gradient_steps: int = 0


def _log_likelihood(freq, probs, mask) -> float:
    return float(np.sum(freq[mask] * np.log(probs[mask])))


def mle_reconstruct(
    dataset: OutcomeDataset | np.ndarray,
    frame: PovmFrame,
    max_iters: int = 5000,
    tol: float = 1e-10,
    n_qubits: int | None = None,
) -> MleResult:
    """Iterative maximum-likelihood fit ``rho <- R rho R / Tr(R rho R)``.

    ``R = sum_a f(a)/p_rho(a) kron(M_{a_i})`` is also the likelihood gradient.
    Each iteration proposes two candidates and keeps the likelier one:

    * the RρR update, diluted to ``(I + eps R)/(1 + eps)`` with ``eps``
      halved while it would lower the likelihood;
    * a projected gradient step ``closest_state(rho + eta R)``, whose step
      ``eta`` doubles on success and halves on failure. Unlike RρR it can
      set eigenvalues exactly to zero, so rank-deficient optima are reached
      in finitely many steps instead of at a ``1/t`` rate.

    If the linear inversion of the frequencies is already a state it
    reproduces them exactly, so it is the maximiser and is returned with no
    iterations. The recorded log-likelihoods never decrease. Stops when the gain falls
    below ``tol``. ``dataset`` may also be a frequency vector in
    lexicographic order, in which case ``n_qubits`` is required.
    """
    if isinstance(dataset, OutcomeDataset):
        n = dataset.n_qubits
        _check(n, MAX_MLE_QUBITS, "MLE reconstruction")
        freq = dataset.frequencies()
    else:
        if n_qubits is None:
            raise DomainError("n_qubits is required with a frequency vector")
        n = n_qubits
        _check(n, MAX_MLE_QUBITS, "MLE reconstruction")
        freq = np.asarray(dataset, dtype=float)
        if freq.shape != (N_OUTCOMES**n,) or np.any(freq < 0) or freq.sum() <= 0:
            raise DomainError("frequency vector must be non-negative with 4^N entries")
        freq = freq / freq.sum()
    dim = 2**n
    mask = freq > 0
    ident = np.eye(dim)
    elems = frame.elements

    def probs_of(r):
        return operator_expectations(r, elems, n).real

    def score(r):
        q = probs_of(r)
        return (_log_likelihood(freq, q, mask) if np.all(q[mask] > 0) else -math.inf), q

    inverted = invert_distribution(freq, frame, n).matrix
    if np.linalg.eigvalsh(inverted)[0] >= -_PSD_SLACK:
        rho = project_to_psd(inverted)[0].matrix
        ll = score(rho)[0]
        if math.isfinite(ll):
            return MleResult(DensityMatrix(n, rho, projected=True, projection_distance=0.0), [ll], True, 0)

    rho = ident / dim + 0j
    p = probs_of(rho)
    result = MleResult(DensityMatrix(n, rho))
    ll = _log_likelihood(freq, p, mask)
    result.log_likelihoods.append(ll)
    eta = 1.0
    for it in range(1, max_iters + 1):
        if np.any(p[mask] <= 0):
            rho = (1.0 - 1e-9) * rho + 1e-9 * ident / dim
            p = probs_of(rho)
            ll = _log_likelihood(freq, p, mask)
        weights = np.where(mask, freq / np.where(mask, p, 1.0), 0.0)
        R = operator_sum(weights, elems, n)
        R = 0.5 * (R + R.conj().T)
        eps = math.inf
        while True:
            step = R if math.isinf(eps) else (ident + eps * R) / (1.0 + eps)
            cand = step @ rho @ step
            cand = 0.5 * (cand + cand.conj().T)
            cand /= np.trace(cand).real
            ll_new, p_new = score(cand)
            if ll_new >= ll or eps < 1e-12:
                break
            eps = 1.0 if math.isinf(eps) else eps / 2.0
            result.diluted_steps += 1
        pg = project_to_psd(rho + eta * R)[0].matrix
        ll_pg, p_pg = score(pg)
        if ll_pg > ll:
            eta *= 2.0
            if ll_pg > ll_new:
                cand, ll_new, p_new = pg, ll_pg, p_pg
                result.gradient_steps += 1
        else:
            eta = max(eta / 2.0, 1e-12)
        if ll_new < ll:
            break
        gain = ll_new - ll
        rho, p, ll = cand, p_new, ll_new
        result.log_likelihoods.append(ll)
        result.iterations = it
        if gain < tol:
            result.converged = True
            break
    if not result.converged:
        log.warning("MLE stopped after %d iterations without meeting tol=%g", result.iterations, tol)
    result.density = DensityMatrix(n, rho, projected=True, projection_distance=0.0)
    return result
