"""Maximum-likelihood training of the outcome model with Adam."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NumericError, ValidationError
from .model import TransformerModel, log_probs, nll_and_gradients
from .povm import OutcomeDataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainOptions:
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    heldout_fraction: float = 0.1
    patience: int = 10
    #: multiply the learning rate by this factor after ``decay_patience``
    #: epochs without held-out improvement; 1.0 keeps it fixed
    lr_decay: float = 1.0
    decay_patience: int = 2
    min_learning_rate: float = 1e-5

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("learning_rate, batch_size and epochs must be positive")
        if not 0.0 <= self.heldout_fraction < 1.0:
            raise ValidationError("heldout_fraction must lie in [0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValidationError("Adam betas must lie in [0, 1)")
        if not 0.0 < self.lr_decay <= 1.0 or self.decay_patience < 1:
            raise ValidationError("lr_decay must lie in (0, 1] and decay_patience must be >= 1")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    heldout_nll: float


@dataclass
class TrainResult:
    model: TransformerModel
    trace: list[EpochRecord] = field(default_factory=list)
    #: learning rate in force during each epoch
    learning_rates: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


class Adam:
    """Adam with bias correction, updating a parameter dict in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            self.params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def mean_nll(model: TransformerModel, outcomes: np.ndarray, chunk: int = 8192) -> float:
    total = 0.0
    for start in range(0, len(outcomes), chunk):
        total -= float(log_probs(model, outcomes[start : start + chunk]).sum())
    return total / len(outcomes)


def split_heldout(outcomes: np.ndarray, fraction: float, rng: np.random.Generator):
    n = len(outcomes)
    n_held = int(round(fraction * n)) if n > 1 else 0
    n_held = min(n_held, n - 1)
    perm = rng.permutation(n)
    return outcomes[perm[n_held:]], outcomes[perm[:n_held]]


def train(model: TransformerModel, dataset: OutcomeDataset, opts: TrainOptions | None = None) -> TrainResult:
    """Fit ``model`` to ``dataset`` by minimising the mean negative log-likelihood.

    A ``heldout_fraction`` share of the data is set aside; training stops
    after ``patience`` epochs without held-out improvement and the best
    parameters are returned. With ``lr_decay < 1`` the learning rate is cut
    on held-out plateaus, down to ``min_learning_rate``. The input model is
    not modified. A non-finite
    loss raises :class:`NumericError` carrying the last good model.
    """
    opts = opts or TrainOptions()
    if dataset.n_qubits != model.config.max_len:
        raise ValidationError(
            f"dataset has {dataset.n_qubits} qubits but the model expects {model.config.max_len}"
        )
    if len(dataset) == 0:
        raise ValidationError("dataset is empty")
    rng = np.random.default_rng(opts.seed)
    train_set, held = split_heldout(dataset.outcomes, opts.heldout_fraction, rng)
    work = model.copy()
    optim = Adam(work.params, opts.learning_rate, opts.beta1, opts.beta2, opts.eps)
    best = work.copy()
    best_score = math.inf
    result = TrainResult(best)
    stale = plateau = 0
    for epoch in range(1, opts.epochs + 1):
        order = rng.permutation(len(train_set)) if opts.shuffle else np.arange(len(train_set))
        seen, total = 0, 0.0
        for start in range(0, len(order), opts.batch_size):
            batch = train_set[order[start : start + opts.batch_size]]
            loss, grads = nll_and_gradients(work, batch)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}", checkpoint=best)
            optim.step(grads)
            total += loss * len(batch)
            seen += len(batch)
        train_nll = total / seen
        held_nll = mean_nll(work, held) if len(held) else train_nll
        if not math.isfinite(held_nll):
            raise NumericError(f"non-finite held-out loss at epoch {epoch}", checkpoint=best)
        result.trace.append(EpochRecord(epoch, train_nll, held_nll))
        result.learning_rates.append(optim.lr)
        log.debug("epoch %d train %.6f heldout %.6f", epoch, train_nll, held_nll)
        if held_nll < best_score:
            best_score, best, stale, plateau = held_nll, work.copy(), 0, 0
            result.best_epoch = epoch
        else:
            stale += 1
            plateau += 1
            if opts.lr_decay < 1.0 and plateau >= opts.decay_patience:
                optim.lr = max(optim.lr * opts.lr_decay, opts.min_learning_rate)
                plateau = 0
            if opts.patience and stale >= opts.patience:
                result.stopped_early = True
                break
    result.model = best
    return result
