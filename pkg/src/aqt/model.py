"""Autoregressive Transformer over POVM outcome strings.

The model factorises ``p(a) = prod_i p(a_i | a_<i)``. A decoder-only stack
reads ``[START, a_1, ..., a_{N-1}]`` under a causal mask and emits four
logits per position, the distribution of the next symbol. Because every
conditional is an explicit softmax, both ``p(a)`` and ancestral samples are
exact.

Layers use pre-normalisation::

    h = h + Attention(LayerNorm(h))
    h = h + FeedForward(LayerNorm(h))

with fixed sinusoidal position encodings, GELU (tanh form) feed-forward
activations and no dropout. Forward and backward passes are written out by
hand in float64 numpy so gradients can be checked against finite
differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NumericError, ShapeError, ValidationError
from .povm import N_OUTCOMES, OutcomeDataset, as_outcomes, chunk_rng, RNG_NAME

START = N_OUTCOMES
VOCAB = N_OUTCOMES + 1
LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)

CHECKPOINT_MAGIC = b"AQT-CHECKPOINT v1\n"


@dataclass(frozen=True)
class TransformerConfig:
    max_len: int
    n_layers: int = 2
    embed_dim: int = 64
    n_heads: int = 4
    ff_dim: int | None = None
    seed: int = 0
    vocab: int = field(default=VOCAB)

    def __post_init__(self):
        if self.ff_dim is None:
            object.__setattr__(self, "ff_dim", 4 * self.embed_dim)
        if self.max_len < 1:
            raise ValidationError("max_len must be >= 1")
        if self.n_layers < 1 or self.embed_dim < 1 or self.n_heads < 1 or self.ff_dim < 1:
            raise ValidationError("layer counts and widths must be positive")
        if self.embed_dim % self.n_heads:
            raise ValidationError(
                f"embed_dim={self.embed_dim} is not divisible by n_heads={self.n_heads}"
            )
        if self.vocab != VOCAB:
            raise ValidationError(f"vocab must be {VOCAB} (4 outcomes + start token)")

    @classmethod
    def desk(cls, max_len: int, seed: int = 0) -> "TransformerConfig":
        return cls(max_len=max_len, n_layers=2, embed_dim=64, n_heads=4, seed=seed)

    @classmethod
    def full_size(cls, max_len: int, seed: int = 0) -> "TransformerConfig":
        """Six layers with 256-dimensional embeddings."""
        return cls(max_len=max_len, n_layers=6, embed_dim=256, n_heads=4, seed=seed)

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads


def parameter_shapes(config: TransformerConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Every parameter name and shape, in checkpoint order."""
    d, f = config.embed_dim, config.ff_dim
    shapes = [("tok_embed", (VOCAB, d))]
    for l in range(config.n_layers):
        p = f"l{l}."
        shapes += [
            (p + "ln1_g", (d,)), (p + "ln1_b", (d,)),
            (p + "wq", (d, d)), (p + "bq", (d,)),
            (p + "wk", (d, d)), (p + "bk", (d,)),
            (p + "wv", (d, d)), (p + "bv", (d,)),
            (p + "wo", (d, d)), (p + "bo", (d,)),
            (p + "ln2_g", (d,)), (p + "ln2_b", (d,)),
            (p + "w1", (d, f)), (p + "b1", (f,)),
            (p + "w2", (f, d)), (p + "b2", (d,)),
        ]  # fmt: skip
    shapes += [("lnf_g", (d,)), ("lnf_b", (d,)), ("w_out", (d, N_OUTCOMES)), ("b_out", (N_OUTCOMES,))]
    return shapes


def positional_encoding(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    freq = np.exp(-math.log(10000.0) * (np.arange(0, dim, 2) / dim))
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(pos * freq)
    pe[:, 1::2] = np.cos(pos * freq[: dim // 2])
    return pe


@dataclass(eq=False)
class TransformerModel:
    config: TransformerConfig
    params: dict[str, np.ndarray]

    def __post_init__(self):
        expected = parameter_shapes(self.config)
        if [n for n, _ in expected] != list(self.params):
            raise ValidationError("parameter names do not match the configuration")
        for name, shape in expected:
            if self.params[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {self.params[name].shape}")
        self._pe = positional_encoding(self.config.max_len, self.config.embed_dim)

    @property
    def n_qubits(self) -> int:
        return self.config.max_len

    def copy(self) -> "TransformerModel":
        return TransformerModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    def __call__(self, outcomes) -> np.ndarray:
        """Probability evaluator interface: ``p_1(a)`` for a batch of strings."""
        return np.exp(log_probs(self, outcomes))


def init_model(config: TransformerConfig) -> TransformerModel:
    """Fresh parameters drawn from ``config.seed``.

    Token embeddings ~ N(0, 1). Projection weights ~ N(0, 1/fan_in); the two
    residual-branch outputs (``wo``, ``w2``) are further scaled by
    ``1/sqrt(2 n_layers)``. Biases are zero, layer-norm gains one. The output
    head starts at zero, so the untrained model is uniform over outcomes.
    """
    rng = np.random.default_rng(config.seed)
    resid = 1.0 / math.sqrt(2 * config.n_layers)
    params = {}
    for name, shape in parameter_shapes(config):
        short = name.split(".")[-1]
        if name == "tok_embed":
            params[name] = rng.normal(0.0, 1.0, shape)
        elif name in ("w_out", "b_out"):
            params[name] = np.zeros(shape)
        elif short.endswith("_g"):
            params[name] = np.ones(shape)
        elif short.startswith("w"):
            scale = 1.0 / math.sqrt(shape[0])
            if short in ("wo", "w2"):
                scale *= resid
            params[name] = rng.normal(0.0, scale, shape)
        else:
            params[name] = np.zeros(shape)
    return TransformerModel(config, params)


# --------------------------------------------------------------------------
# building blocks


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_back(dy, g, cache):
    xhat, inv = cache
    d = xhat.shape[-1]
    dg = (dy * xhat).reshape(-1, d).sum(axis=0)
    db = dy.reshape(-1, d).sum(axis=0)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _gelu(z):
    t = np.tanh(_GELU_C * z * (1.0 + 0.044715 * z * z))
    return 0.5 * z * (1.0 + t), t


def _gelu_back(du, z, t):
    dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * 0.044715 * z * z)
    return du * (0.5 * (1.0 + t) + 0.5 * z * dt)


def _linear(x, w, b):
    return (x.reshape(-1, w.shape[0]) @ w).reshape(*x.shape[:-1], w.shape[1]) + b


def _linear_back(dy, x, w):
    x2 = x.reshape(-1, w.shape[0])
    dy2 = dy.reshape(-1, w.shape[1])
    return (dy2 @ w.T).reshape(x.shape), x2.T @ dy2, dy2.sum(axis=0)


def _log_softmax(logits):
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _split_heads(x, n_heads):
    b, n, d = x.shape
    return x.reshape(b, n, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, n, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * dh)


def input_tokens(outcomes: np.ndarray) -> np.ndarray:
    """Shift right and prepend the start token."""
    tok = np.empty(outcomes.shape, dtype=np.intp)
    tok[:, 0] = START
    tok[:, 1:] = outcomes[:, :-1]
    return tok


def forward(model: TransformerModel, tokens: np.ndarray, keep_cache: bool = False):
    """Log-probabilities of the next symbol at every position.

    ``tokens`` has shape ``(batch, L)`` with ``L <= max_len``; position ``i``
    sees tokens ``0..i`` only. Returns ``(logp, cache)`` where ``logp`` has
    shape ``(batch, L, 4)``.
    """
    P, cfg = model.params, model.config
    batch, length = tokens.shape
    if length > cfg.max_len:
        raise ShapeError(f"sequence length {length} exceeds max_len={cfg.max_len}")
    scale = 1.0 / math.sqrt(cfg.head_dim)
    causal = np.tril(np.ones((length, length), dtype=bool))
    h = P["tok_embed"][tokens] + model._pe[:length]
    layers = []
    for l in range(cfg.n_layers):
        p = f"l{l}."
        x1, ln1 = _layer_norm(h, P[p + "ln1_g"], P[p + "ln1_b"])
        q = _split_heads(_linear(x1, P[p + "wq"], P[p + "bq"]), cfg.n_heads)
        k = _split_heads(_linear(x1, P[p + "wk"], P[p + "bk"]), cfg.n_heads)
        v = _split_heads(_linear(x1, P[p + "wv"], P[p + "bv"]), cfg.n_heads)
        s = np.where(causal, (q @ k.transpose(0, 1, 3, 2)) * scale, -np.inf)
        s = s - s.max(axis=-1, keepdims=True)
        a = np.exp(s)
        a /= a.sum(axis=-1, keepdims=True)
        o = _merge_heads(a @ v)
        h = h + _linear(o, P[p + "wo"], P[p + "bo"])
        x2, ln2 = _layer_norm(h, P[p + "ln2_g"], P[p + "ln2_b"])
        z = _linear(x2, P[p + "w1"], P[p + "b1"])
        u, t = _gelu(z)
        h = h + _linear(u, P[p + "w2"], P[p + "b2"])
        if keep_cache:
            layers.append((x1, ln1, q, k, v, a, o, x2, ln2, z, u, t))
    xf, lnf = _layer_norm(h, P["lnf_g"], P["lnf_b"])
    logp = _log_softmax(_linear(xf, P["w_out"], P["b_out"]))
    cache = (tokens, layers, xf, lnf) if keep_cache else None
    return logp, cache


def _backward(model: TransformerModel, cache, dlogits) -> dict[str, np.ndarray]:
    P, cfg = model.params, model.config
    tokens, layers, xf, lnf = cache
    scale = 1.0 / math.sqrt(cfg.head_dim)
    grads = {}
    dxf, grads["w_out"], grads["b_out"] = _linear_back(dlogits, xf, P["w_out"])
    dh, grads["lnf_g"], grads["lnf_b"] = _layer_norm_back(dxf, P["lnf_g"], lnf)
    for l in range(cfg.n_layers - 1, -1, -1):
        p = f"l{l}."
        x1, ln1, q, k, v, a, o, x2, ln2, z, u, t = layers[l]
        du, grads[p + "w2"], grads[p + "b2"] = _linear_back(dh, u, P[p + "w2"])
        dz = _gelu_back(du, z, t)
        dx2, grads[p + "w1"], grads[p + "b1"] = _linear_back(dz, x2, P[p + "w1"])
        dx2, grads[p + "ln2_g"], grads[p + "ln2_b"] = _layer_norm_back(dx2, P[p + "ln2_g"], ln2)
        dh = dh + dx2
        do, grads[p + "wo"], grads[p + "bo"] = _linear_back(dh, o, P[p + "wo"])
        do = _split_heads(do, cfg.n_heads)
        da = do @ v.transpose(0, 1, 3, 2)
        dv = a.transpose(0, 1, 3, 2) @ do
        ds = a * (da - (da * a).sum(axis=-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        dx1 = np.zeros_like(x1)
        for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
            dx, grads[p + "w" + name], grads[p + "b" + name] = _linear_back(
                _merge_heads(dproj), x1, P[p + "w" + name]
            )
            dx1 += dx
        dx1, grads[p + "ln1_g"], grads[p + "ln1_b"] = _layer_norm_back(dx1, P[p + "ln1_g"], ln1)
        dh = dh + dx1
    onehot = np.zeros((tokens.size, VOCAB))
    onehot[np.arange(tokens.size), tokens.reshape(-1)] = 1.0
    grads["tok_embed"] = onehot.T @ dh.reshape(-1, cfg.embed_dim)
    return {name: grads[name] for name, _ in parameter_shapes(cfg)}


# --------------------------------------------------------------------------
# public operations


def log_probs(model: TransformerModel, outcomes) -> np.ndarray:
    """``log p_1(a)`` for each full-length outcome string in a batch."""
    outs = as_outcomes(outcomes, model.config.max_len)
    logp, _ = forward(model, input_tokens(outs))
    idx = outs.astype(np.intp)[..., None]
    return np.take_along_axis(logp, idx, axis=-1)[..., 0].sum(axis=1)


def log_prob(model: TransformerModel, a) -> float:
    a = np.asarray(a)
    if a.ndim != 1 or a.size != model.config.max_len:
        raise ShapeError(f"expected one outcome string of length {model.config.max_len}")
    return float(log_probs(model, a)[0])


def conditionals(model: TransformerModel, prefixes) -> np.ndarray:
    """Distribution of the next symbol after each prefix, shape ``(batch, 4)``."""
    pre = np.asarray(prefixes, dtype=np.intp)
    if pre.ndim == 1:
        pre = pre[None, :]
    tok = np.concatenate([np.full((pre.shape[0], 1), START, dtype=np.intp), pre], axis=1)
    logp, _ = forward(model, tok)
    return np.exp(logp[:, -1, :])


def nll_and_gradients(model: TransformerModel, batch) -> tuple[float, dict[str, np.ndarray]]:
    """Mean negative log-likelihood of ``batch`` and its exact gradient."""
    outs = as_outcomes(batch, model.config.max_len)
    if outs.shape[0] == 0:
        raise ShapeError("empty batch")
    logp, cache = forward(model, input_tokens(outs), keep_cache=True)
    n = outs.shape[0]
    idx = outs.astype(np.intp)[..., None]
    per_example = np.take_along_axis(logp, idx, axis=-1)[..., 0].sum(axis=1)
    # fsum is correctly rounded, so the loss does not depend on batch order
    loss = -math.fsum(per_example) / n
    dlogits = np.exp(logp)
    np.put_along_axis(dlogits, idx, np.take_along_axis(dlogits, idx, axis=-1) - 1.0, axis=-1)
    dlogits /= n
    return loss, _backward(model, cache, dlogits)


SAMPLE_CHUNK = 4096


def sample_model(model: TransformerModel, n: int, seed: int) -> OutcomeDataset:
    """Exact ancestral samples, one conditional softmax per position."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    n_q = model.config.max_len
    chunks = []
    for start in range(0, n, SAMPLE_CHUNK):
        size = min(SAMPLE_CHUNK, n - start)
        u = chunk_rng(seed, start).random((size, n_q))
        tok = np.full((size, n_q), START, dtype=np.intp)
        out = np.empty((size, n_q), dtype=np.uint8)
        for i in range(n_q):
            logp, _ = forward(model, tok[:, : i + 1])
            cum = np.cumsum(np.exp(logp[:, i, :]), axis=1)
            thr = u[:, i] * cum[:, -1]
            sym = (cum[:, :-1] <= thr[:, None]).sum(axis=1)
            out[:, i] = sym
            if i + 1 < n_q:
                tok[:, i + 1] = sym
        chunks.append(out)
    return OutcomeDataset(
        n_q, np.concatenate(chunks), "pauli4", int(seed), f"model-samples rng={RNG_NAME}"
    )


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: TransformerModel, path, train_options=None, provenance=None) -> None:
    """Write a checkpoint.

    Layout: the magic line ``AQT-CHECKPOINT v1``, one line of JSON (config,
    training options, dataset provenance, parameter names and shapes), then
    every parameter as little-endian float64, row-major, in
    :func:`parameter_shapes` order.
    """
    header = {
        "format": "aqt-checkpoint v1",
        "config": asdict(model.config),
        "train_options": train_options or {},
        "provenance": provenance or {},
        "parameters": [[name, list(shape)] for name, shape in parameter_shapes(model.config)],
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for name, _ in parameter_shapes(model.config):
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[TransformerModel, dict]:
    with open(path, "rb") as fh:
        if fh.readline() != CHECKPOINT_MAGIC:
            raise ValidationError(f"{path}: not an aqt checkpoint")
        try:
            header = json.loads(fh.readline())
            config = TransformerConfig(**header["config"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ValidationError(f"{path}: corrupt checkpoint header ({exc})") from exc
        params = {}
        for name, shape in parameter_shapes(config):
            count = int(np.prod(shape))
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValidationError(f"{path}: truncated while reading {name}")
            params[name] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
        if fh.read(1):
            raise ValidationError(f"{path}: trailing bytes after parameters")
    for name, arr in params.items():
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"{path}: parameter {name} is not finite")
    return TransformerModel(config, params), header
