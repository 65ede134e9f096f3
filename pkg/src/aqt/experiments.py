"""End-to-end pipelines: sample, train, reconstruct and score.

These are the functions behind the sweep commands. Every random draw is
keyed by an explicit seed so a grid point can be rerun in isolation.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import fidelity, povm, reconstruct, states
from .density import DensityMatrix
from .errors import ValidationError
from .model import TransformerConfig, TransformerModel, init_model
from .train import TrainOptions, TrainResult, train

log = logging.getLogger(__name__)

SCALING_SCHEMA = "aqt-sweep-scaling v1"
ERROR_SCHEMA = "aqt-sweep-error v1"


def fit(
    dataset: povm.OutcomeDataset, model_config: TransformerConfig, opts: TrainOptions
) -> TrainResult:
    """Train a freshly initialised model of ``model_config`` on ``dataset``."""
    if model_config.max_len != dataset.n_qubits:
        model_config = replace(model_config, max_len=dataset.n_qubits)
    return train(init_model(model_config), dataset, opts)


def classical_fidelity(
    state: states.ProductOperatorEnsemble,
    model: TransformerModel,
    frame: povm.PovmFrame,
    n_samples: int,
    seed: int,
) -> fidelity.FidelityEstimate:
    return fidelity.classical_fidelity_sampled(povm.state_evaluator(state, frame), model, n_samples, seed)


@dataclass
class Reconstruction:
    raw: DensityMatrix
    projected: DensityMatrix

    @property
    def projection_distance(self) -> float:
        return self.projected.projection_distance


def reconstruct_model(model: TransformerModel, frame: povm.PovmFrame, projection: str = "closest") -> Reconstruction:
    raw = reconstruct.reconstruct_from_model(model, frame)
    projected, _ = fidelity.project_to_psd(raw, method=projection)
    return Reconstruction(raw, projected)


# ---------------------------------------------------------------- scaling


@dataclass
class ScalingRow:
    n_qubits: int
    n_samples: int
    seed: int
    fc_value: float
    fc_std_error: float
    wall_time: float = 0.0


@dataclass
class SweepResult:
    """Rows of the scaling sweep plus the derived ``N_s*`` per qubit count.

    ``n_star[N]`` is None when the crossing is not bracketed: either no
    ladder value reached the threshold, or the smallest tested value already
    did (so the true crossing may lie below the ladder).
    """

    threshold: float
    rows: list[ScalingRow] = field(default_factory=list)
    n_star: dict[int, int | None] = field(default_factory=dict)

    def mean_fc(self, n_qubits: int, n_samples: int) -> float:
        vals = [r.fc_value for r in self.rows if (r.n_qubits, r.n_samples) == (n_qubits, n_samples)]
        return float(np.mean(vals))

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"# {SCALING_SCHEMA} threshold={self.threshold!r}\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n_qubits", "n_samples", "seed", "fc_value", "fc_std_error"])
        for r in self.rows:
            w.writerow([r.n_qubits, r.n_samples, r.seed, repr(r.fc_value), repr(r.fc_std_error)])
        return out.getvalue()

    def n_star_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n_qubits", "n_star"])
        for n, v in sorted(self.n_star.items()):
            w.writerow([n, "unresolved" if v is None else v])
        return out.getvalue()

    def timing_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n_qubits", "n_samples", "seed", "wall_time"])
        for r in self.rows:
            w.writerow([r.n_qubits, r.n_samples, r.seed, f"{r.wall_time:.3f}"])
        return out.getvalue()


def check_ladder(ladder) -> list[int]:
    ladder = [int(x) for x in ladder]
    if not ladder or any(b <= a for a, b in zip(ladder, ladder[1:])) or ladder[0] < 2:
        raise ValidationError("the sample ladder must be strictly increasing and start at >= 2")
    return ladder


def sweep_scaling(
    qubit_counts,
    ladder,
    seeds=(0,),
    threshold: float = 0.99,
    model_config: TransformerConfig | None = None,
    train_options: TrainOptions | None = None,
    fc_samples: int = 10_000,
    stop_at_crossing: bool = True,
    frame: povm.PovmFrame | None = None,
) -> SweepResult:
    """Smallest training-set size whose model reaches ``F_C >= threshold`` on GHZ states.

    For each qubit count the ladder is walked upwards; at each rung a model is
    trained from scratch for every seed and ``F_C`` is estimated by sampling.
    The rung passes when the seed-averaged estimate reaches the threshold.
    The datasets for one seed are nested prefixes of a single sample stream,
    so larger rungs only ever add data.
    """
    ladder = check_ladder(ladder)
    frame = frame or povm.pauli4_frame()
    base_cfg = model_config or TransformerConfig.desk(2)
    opts = train_options or TrainOptions()
    result = SweepResult(threshold)
    for n_q in qubit_counts:
        state = states.ghz(int(n_q))
        cfg = replace(base_cfg, max_len=int(n_q))
        result.n_star[int(n_q)] = None
        crossed = False
        for rung, n_s in enumerate(ladder):
            values = []
            for seed in seeds:
                start = time.perf_counter()
                ds = povm.sample(state, frame, n_s, seed=seed)
                fitted = fit(ds, replace(cfg, seed=seed), replace(opts, seed=seed))
                est = classical_fidelity(state, fitted.model, frame, fc_samples, seed)
                row = ScalingRow(int(n_q), n_s, seed, est.value, est.std_error, time.perf_counter() - start)
                result.rows.append(row)
                values.append(est.value)
                log.info("N_q=%d N_s=%d seed=%d F_C=%s", n_q, n_s, seed, est)
            if np.mean(values) >= threshold:
                if rung == 0:
                    log.warning("N_q=%d passes at the smallest rung %d; N_s* is not bracketed", n_q, n_s)
                    crossed = True
                elif not crossed:
                    result.n_star[int(n_q)] = n_s
                    crossed = True
                if stop_at_crossing:
                    break
    return result


# ------------------------------------------------------------ error model


@dataclass
class ErrorRow:
    p: float
    seed: int
    fq_ghz: float
    deviation: float
    fq_err: float
    projection_distance: float


def error_point(
    p: float,
    n_samples: int,
    seed: int,
    model_config: TransformerConfig | None = None,
    train_options: TrainOptions | None = None,
    projection: str = "closest",
    frame: povm.PovmFrame | None = None,
) -> tuple[ErrorRow, Reconstruction]:
    """Faulty-qubit state at rate ``p``: sample, train, reconstruct, project, score."""
    frame = frame or povm.pauli4_frame()
    state = states.faulty_qubit_state(p)
    cfg = replace(model_config or TransformerConfig.desk(3), max_len=3, seed=seed)
    ds = povm.sample(state, frame, n_samples, seed=seed)
    fitted = fit(ds, cfg, replace(train_options or TrainOptions(), seed=seed))
    rec = reconstruct_model(fitted.model, frame, projection)
    fq_ghz = fidelity.quantum_fidelity(states.to_dense(states.ghz(3)), rec.projected)
    fq_err = fidelity.quantum_fidelity(states.to_dense(state), rec.projected)
    row = ErrorRow(p, seed, fq_ghz, abs(fq_ghz - (1.0 - p)), fq_err, rec.projection_distance)
    log.info("p=%g seed=%d F_Q(ghz)=%.4f F_Q(err)=%.4f", p, seed, fq_ghz, fq_err)
    return row, rec


def check_rates(p_values) -> list[float]:
    rates = [float(p) for p in p_values]
    for p in rates:
        if not 0.0 <= p <= 1.0 or math.isnan(p):
            raise ValidationError(f"error rate {p} is outside [0, 1]")
    return rates


def sweep_error(
    p_values,
    n_samples: int,
    seeds=(0,),
    model_config: TransformerConfig | None = None,
    train_options: TrainOptions | None = None,
    projection: str = "closest",
) -> list[ErrorRow]:
    rows = []
    for p in check_rates(p_values):
        for seed in seeds:
            rows.append(error_point(p, n_samples, seed, model_config, train_options, projection)[0])
    return rows


def error_csv(rows: list[ErrorRow]) -> str:
    out = io.StringIO()
    out.write(f"# {ERROR_SCHEMA}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["p", "seed", "fq_ghz", "abs_deviation", "fq_err", "projection_distance"])
    for r in rows:
        w.writerow([repr(r.p), r.seed, repr(r.fq_ghz), repr(r.deviation), repr(r.fq_err), repr(r.projection_distance)])
    return out.getvalue()
