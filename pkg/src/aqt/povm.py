"""Pauli-4 measurement frame, exact outcome statistics and sampling.

Outcome strings are arrays of symbols in ``{0, 1, 2, 3}``, one per qubit,
qubit 0 first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, linalg
from .errors import CapacityError, DomainError, ShapeError, ValidationError
from .states import MAX_DENSE_QUBITS, ProductOperatorEnsemble

N_OUTCOMES = 4

#: Samples per independently seeded random stream; the output of
#: :func:`sample` is identical however the chunks are scheduled.
SAMPLE_CHUNK = 8192

RNG_NAME = "numpy-PCG64(SeedSequence([seed, chunk_start]))"


@dataclass(frozen=True, eq=False)
class PovmFrame:
    """Single-qubit informationally complete POVM with its dual frame.

    ``overlap[a, b] = Tr(M_a M_b)`` and ``duals[a] = sum_b inv(overlap)[a, b] M_b``
    so that ``sigma = sum_a Tr(sigma M_a) duals[a]`` for any 2x2 operator.
    """

    name: str
    elements: np.ndarray
    overlap: np.ndarray = field(init=False)
    duals: np.ndarray = field(init=False)

    def __post_init__(self):
        elems = np.array(self.elements, dtype=np.complex128)
        if elems.shape != (N_OUTCOMES, 2, 2):
            raise ShapeError(f"expected {N_OUTCOMES} 2x2 elements, got {elems.shape}")
        if np.max(np.abs(elems.sum(axis=0) - np.eye(2))) > 1e-12:
            raise DomainError("POVM elements do not sum to the identity")
        for a, m in enumerate(elems):
            w, _ = linalg.hermitian_eig(m)
            if w[0] < -1e-12:
                raise DomainError(f"POVM element {a} is not positive semidefinite")
        overlap = np.einsum("aij,bji->ab", elems, elems).real
        if abs(np.linalg.det(overlap)) <= 1e-9:
            raise DomainError("POVM is not informationally complete (singular overlap matrix)")
        duals = np.einsum("ab,bij->aij", np.linalg.inv(overlap), elems)
        for arr in (elems, overlap, duals):
            arr.setflags(write=False)
        object.__setattr__(self, "elements", elems)
        object.__setattr__(self, "overlap", overlap)
        object.__setattr__(self, "duals", duals)


def pauli4_frame() -> PovmFrame:
    """Projectors onto ``|0>``, ``|+>`` and ``|+i>`` scaled by 1/3, plus the remainder."""
    kets = [
        np.array([1.0, 0.0]),
        np.array([1.0, 1.0]) / np.sqrt(2.0),
        np.array([1.0, 1.0j]) / np.sqrt(2.0),
    ]
    elems = [np.outer(k, k.conj()) / 3.0 for k in kets]
    elems.append(np.eye(2) - elems[0] - elems[1] - elems[2])
    return PovmFrame("pauli4", np.array(elems))


FRAMES = {"pauli4": pauli4_frame}


def get_frame(name: str) -> PovmFrame:
    try:
        return FRAMES[name]()
    except KeyError:
        raise ValidationError(f"unknown POVM {name!r}; available: {sorted(FRAMES)}") from None


# --------------------------------------------------------------------------
# exact statistics of ensemble states


def _trace_table(state: ProductOperatorEnsemble, frame: PovmFrame) -> np.ndarray:
    # table[t, i, k] = Tr(factor[t, i] @ M_k)
    return np.einsum("tiab,kba->tik", state.factors, frame.elements)


def _split(z) -> tuple[np.ndarray, np.ndarray]:
    return np.ascontiguousarray(z.real, dtype=np.float64), np.ascontiguousarray(z.imag, dtype=np.float64)


def as_outcomes(a, n_qubits: int | None = None) -> np.ndarray:
    """Validate and return outcome strings as a 2-D ``uint8`` array."""
    arr = np.asarray(a)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeError(f"outcomes must be 1-D or 2-D, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= N_OUTCOMES):
        raise DomainError(f"outcome symbols must lie in 0..{N_OUTCOMES - 1}")
    if n_qubits is not None and arr.shape[1] != n_qubits:
        raise ShapeError(f"outcome length {arr.shape[1]} does not match {n_qubits} qubits")
    return np.ascontiguousarray(arr, dtype=np.uint8)


def outcome_probs(state: ProductOperatorEnsemble, frame: PovmFrame, outcomes) -> np.ndarray:
    """Exact probabilities of a batch of outcome strings, cost O(terms * N) each."""
    outs = as_outcomes(outcomes, state.n_qubits)
    t_re, t_im = _split(_trace_table(state, frame))
    c_re, c_im = _split(state.coeffs)
    p = kernels.ensemble_probs(c_re, c_im, t_re, t_im, outs)
    return np.clip(p, 0.0, 1.0)


def outcome_prob(state: ProductOperatorEnsemble, frame: PovmFrame, a) -> float:
    a = np.asarray(a)
    if a.ndim != 1:
        raise ShapeError("outcome_prob takes a single outcome string")
    return float(outcome_probs(state, frame, a)[0])


def all_outcomes(n_qubits: int) -> np.ndarray:
    """Every outcome string in lexicographic order (qubit 0 most significant)."""
    idx = np.arange(N_OUTCOMES**n_qubits)
    shifts = 2 * np.arange(n_qubits - 1, -1, -1)
    return ((idx[:, None] >> shifts) & 3).astype(np.uint8)


def state_evaluator(state: ProductOperatorEnsemble, frame: PovmFrame):
    """Probability evaluator ``outcomes -> probabilities`` for a state."""

    def evaluate(outcomes):
        return outcome_probs(state, frame, outcomes)

    evaluate.n_qubits = state.n_qubits
    return evaluate


# --------------------------------------------------------------------------
# sampling


@dataclass(eq=False)
class OutcomeDataset:
    n_qubits: int
    outcomes: np.ndarray
    povm_name: str = "pauli4"
    seed: int | None = None
    source: str = ""

    def __post_init__(self):
        self.outcomes = as_outcomes(self.outcomes, self.n_qubits)

    def __len__(self) -> int:
        return self.outcomes.shape[0]

    def frequencies(self) -> np.ndarray:
        """Empirical frequency of each of the 4^N outcomes, lexicographic order."""
        if self.n_qubits > MAX_DENSE_QUBITS:
            raise CapacityError("frequency table needs n_qubits <= 12")
        if len(self) == 0:
            raise DomainError("dataset is empty")
        flat = outcome_index(self.outcomes)
        counts = np.bincount(flat, minlength=N_OUTCOMES**self.n_qubits)
        return counts / len(self)


def outcome_index(outcomes: np.ndarray) -> np.ndarray:
    """Lexicographic index of each outcome string."""
    outs = np.asarray(outcomes, dtype=np.int64)
    weights = N_OUTCOMES ** np.arange(outs.shape[1] - 1, -1, -1, dtype=np.int64)
    return outs @ weights


def chunk_rng(seed: int, start: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(start)])))


def sample(
    state: ProductOperatorEnsemble,
    frame: PovmFrame,
    n_samples: int,
    seed: int,
    source: str | None = None,
) -> OutcomeDataset:
    """Draw i.i.d. outcome strings from the exact distribution of ``state``.

    Qubits are sampled one after another from their exact conditionals. The
    suffix of unmeasured qubits contributes only the traces of its factors,
    so each draw costs O(terms * N * 4) whatever the qubit count.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    table = _trace_table(state, frame)
    traces = np.trace(state.factors, axis1=2, axis2=3)
    suffix = np.ones((state.n_terms, state.n_qubits + 1), dtype=np.complex128)
    for i in range(state.n_qubits - 1, -1, -1):
        suffix[:, i] = suffix[:, i + 1] * traces[:, i]
    x = table * suffix[:, 1:, None]
    t_re, t_im = _split(table)
    x_re, x_im = _split(x)
    c_re, c_im = _split(state.coeffs)
    chunks = []
    for start in range(0, n_samples, SAMPLE_CHUNK):
        size = min(SAMPLE_CHUNK, n_samples - start)
        u = chunk_rng(seed, start).random((size, state.n_qubits))
        chunks.append(kernels.ensemble_sample(c_re, c_im, t_re, t_im, x_re, x_im, u))
    if source is None:
        source = f"state={state.label} rng={RNG_NAME}"
    return OutcomeDataset(state.n_qubits, np.concatenate(chunks), frame.name, int(seed), source)


# --------------------------------------------------------------------------
# dual frame


def multi_qubit_dual(frame: PovmFrame, a) -> np.ndarray:
    """``kron(duals[a_0], ..., duals[a_{N-1}])`` for one outcome string."""
    a = np.asarray(a)
    if a.ndim != 1:
        raise ShapeError("multi_qubit_dual takes a single outcome string")
    if a.size > MAX_DENSE_QUBITS:
        raise CapacityError(f"dense duals are capped at {MAX_DENSE_QUBITS} qubits")
    as_outcomes(a)
    return linalg.kron_all([frame.duals[k] for k in a])


def operator_sum(weights: np.ndarray, ops: np.ndarray, n_qubits: int) -> np.ndarray:
    """``sum_a weights[a] kron(ops[a_0], ..., ops[a_{N-1}])`` over all 4^N strings.

    ``weights`` is in lexicographic order. The sum is contracted one qubit at
    a time, which costs O(4^N * 4) per qubit instead of 4^N dense Kronecker
    products, and always runs in the same order.
    """
    if n_qubits > MAX_DENSE_QUBITS:
        raise CapacityError(f"dense reconstruction is capped at {MAX_DENSE_QUBITS} qubits")
    w = np.asarray(weights)
    if w.shape != (N_OUTCOMES**n_qubits,):
        raise ShapeError(f"expected {N_OUTCOMES**n_qubits} weights, got shape {w.shape}")
    t = w.astype(np.complex128).reshape((N_OUTCOMES,) * n_qubits)
    for _ in range(n_qubits):
        # contract the leading outcome axis, append this qubit's (row, col) pair
        t = np.tensordot(t, ops, axes=([0], [0]))
    t = t.reshape((2, 2) * n_qubits)
    t = t.transpose(list(range(0, 2 * n_qubits, 2)) + list(range(1, 2 * n_qubits, 2)))
    dim = 2**n_qubits
    return t.reshape(dim, dim)


def operator_expectations(rho: np.ndarray, ops: np.ndarray, n_qubits: int) -> np.ndarray:
    """``Tr(rho kron(ops[a_0], ...))`` for every outcome string, lexicographic order."""
    dim = 2**n_qubits
    if rho.shape != (dim, dim):
        raise ShapeError(f"expected a {dim}x{dim} matrix, got {rho.shape}")
    # rho[i..., j...] with qubit axes; contract (i_q, j_q) with ops[:, j_q, i_q]
    t = rho.reshape((2,) * (2 * n_qubits))
    for q in range(n_qubits):
        # axes now: (remaining rows..., remaining cols..., outcomes so far...)
        rem = n_qubits - q
        t = np.tensordot(t, ops, axes=([0, rem], [2, 1]))
    return t.reshape(-1)


# --------------------------------------------------------------------------
# dataset files

_HEADER_RE = re.compile(
    r"^# aqt-dataset v1 n_qubits=(?P<n>\d+) povm=(?P<povm>\S+) "
    r"seed=(?P<seed>-?\d+|none) source=(?P<source>.*)$"
)


def write_dataset(ds: OutcomeDataset, path) -> None:
    seed = "none" if ds.seed is None else str(ds.seed)
    source = ds.source.replace("\n", " ")
    lookup = np.frombuffer(b"0123", dtype=np.uint8)
    body = lookup[ds.outcomes]
    lines = np.concatenate([body, np.full((len(ds), 1), ord("\n"), dtype=np.uint8)], axis=1)
    with open(path, "wb") as fh:
        fh.write(
            f"# aqt-dataset v1 n_qubits={ds.n_qubits} povm={ds.povm_name} "
            f"seed={seed} source={source}\n".encode()
        )
        fh.write(lines.tobytes())


def read_dataset(path) -> OutcomeDataset:
    """Parse a dataset file; malformed lines raise with their line number."""
    path = Path(path)
    with open(path, encoding="ascii", errors="replace", newline="") as fh:
        header = fh.readline()
        m = _HEADER_RE.match(header.rstrip("\n"))
        if m is None:
            raise ValidationError(f"{path}:1: bad dataset header {header.strip()!r}")
        n = int(m["n"])
        if n < 1:
            raise ValidationError(f"{path}:1: n_qubits must be >= 1")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.endswith("\n"):
                raise ValidationError(f"{path}:{lineno}: line is not newline-terminated")
            s = line[:-1]
            if len(s) != n or s.strip("0123"):
                raise ValidationError(
                    f"{path}:{lineno}: expected {n} symbols from 0-3, got {s!r}"
                )
            rows.append(s)
    data = "".join(rows).encode()
    outcomes = np.frombuffer(data, dtype=np.uint8).reshape(len(rows), n) - ord("0")
    seed = None if m["seed"] == "none" else int(m["seed"])
    return OutcomeDataset(n, outcomes, m["povm"], seed, m["source"])
