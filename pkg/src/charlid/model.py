"""The character-level CNN classifier.

Architecture: character embedding (with dropout), parallel 1-d convolutions
of several widths each followed by ReLU, max-over-time pooling, concatenation,
an optional fully-connected ReLU layer with dropout, and a softmax output.

Forward and backward passes are written out by hand in numpy. Training runs
in float32; gradient checking runs the same code in wide precision.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corpus import Batch

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters fixing every tensor shape in the network.

    ``filter_spec`` is an ordered sequence of (width, num_filters) pairs;
    pooled convolution outputs are concatenated in that order. ``fc_dim = 0``
    omits the fully-connected layer and feeds the pooled vector straight to
    the output layer.
    """

    alphabet_size: int
    num_classes: int
    max_len: int
    embed_dim: int
    filter_spec: tuple[tuple[int, int], ...]
    fc_dim: int = 250
    dropout_embed: float = 0.2
    dropout_fc: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "filter_spec", tuple((int(w), int(n)) for w, n in self.filter_spec))
        if self.alphabet_size < 2:
            raise ValueError("alphabet_size must be >= 2 (PAD and UNK are reserved)")
        if self.num_classes < 1 or self.max_len < 1 or self.embed_dim < 1:
            raise ValueError("num_classes, max_len and embed_dim must be >= 1")
        if not self.filter_spec:
            raise ValueError("filter_spec must name at least one convolution")
        for w, n in self.filter_spec:
            if not 1 <= w <= self.max_len:
                raise ValueError(f"filter width {w} outside 1..max_len={self.max_len}")
            if n < 1:
                raise ValueError(f"filter count {n} must be >= 1")
        if self.fc_dim < 0:
            raise ValueError("fc_dim must be >= 0 (0 omits the layer)")
        for rate in (self.dropout_embed, self.dropout_fc):
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"dropout rate {rate} outside [0, 1)")

    @property
    def f_total(self) -> int:
        """Length of the concatenated pooled vector."""
        return sum(n for _, n in self.filter_spec)

    @property
    def hidden_dim(self) -> int:
        """Width of the input to the output layer."""
        return self.fc_dim if self.fc_dim > 0 else self.f_total


@dataclass
class ModelParams:
    """All learned tensors. Gradients and Adam moments reuse this container."""

    embedding: np.ndarray  # [alphabet_size, embed_dim]
    conv_weights: list[np.ndarray]  # per filter_spec entry: [w, embed_dim, n]
    conv_biases: list[np.ndarray]  # per filter_spec entry: [n]
    out_weight: np.ndarray  # [hidden_dim, num_classes]
    out_bias: np.ndarray  # [num_classes]
    fc_weight: np.ndarray | None = None  # [f_total, fc_dim]
    fc_bias: np.ndarray | None = None  # [fc_dim]

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        """All tensors in the canonical (serialization) order."""
        out = [("embedding", self.embedding)]
        for i, (w, b) in enumerate(zip(self.conv_weights, self.conv_biases)):
            out.append((f"conv{i}_w{w.shape[0]}.weight", w))
            out.append((f"conv{i}_w{w.shape[0]}.bias", b))
        if self.fc_weight is not None:
            out.append(("fc.weight", self.fc_weight))
            out.append(("fc.bias", self.fc_bias))
        out.append(("out.weight", self.out_weight))
        out.append(("out.bias", self.out_bias))
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            embedding=self.embedding.copy(),
            conv_weights=[w.copy() for w in self.conv_weights],
            conv_biases=[b.copy() for b in self.conv_biases],
            out_weight=self.out_weight.copy(),
            out_bias=self.out_bias.copy(),
            fc_weight=None if self.fc_weight is None else self.fc_weight.copy(),
            fc_bias=None if self.fc_bias is None else self.fc_bias.copy(),
        )

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            embedding=np.zeros_like(self.embedding),
            conv_weights=[np.zeros_like(w) for w in self.conv_weights],
            conv_biases=[np.zeros_like(b) for b in self.conv_biases],
            out_weight=np.zeros_like(self.out_weight),
            out_bias=np.zeros_like(self.out_bias),
            fc_weight=None if self.fc_weight is None else np.zeros_like(self.fc_weight),
            fc_bias=None if self.fc_bias is None else np.zeros_like(self.fc_bias),
        )


@dataclass
class ForwardCache:
    """Intermediate activations kept by a train-mode forward pass."""

    inputs: np.ndarray
    embedded: np.ndarray  # embedding output after dropout
    embed_mask: np.ndarray | None
    conv_pooled: list[np.ndarray]  # per width: [B, n], pre-dropout
    conv_argmax: list[np.ndarray]  # per width: [B, n], first-max positions
    pooled: np.ndarray  # concatenated pooled vector, pre-dropout
    fc_relu: np.ndarray | None  # fully-connected ReLU output, pre-dropout
    fc_mask: np.ndarray | None
    hidden: np.ndarray  # input to the output layer (post-dropout)
    probs: np.ndarray


@dataclass
class Prediction:
    """Class probabilities and the argmax label (ties go to the lowest index)."""

    probabilities: np.ndarray  # [num_classes]
    label: int


def _glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_params(config: ModelConfig, seed: int, dtype=np.float32, embed_scale: float = 0.05) -> ModelParams:
    """Fresh parameters: Glorot-uniform weights, zero biases, uniform
    (±embed_scale) embeddings with the PAD row zeroed (it stays trainable).

    Deterministic per seed; draw order is the canonical tensor order. Other
    initialization schemes can fill a ModelParams directly, every consumer
    only depends on the tensor shapes.
    """
    rng = np.random.default_rng(seed)
    d = config.embed_dim
    embedding = rng.uniform(-embed_scale, embed_scale, size=(config.alphabet_size, d)).astype(dtype)
    embedding[0] = 0.0
    conv_weights, conv_biases = [], []
    for w, n in config.filter_spec:
        conv_weights.append(_glorot_uniform(rng, (w, d, n), fan_in=w * d, fan_out=w * n, dtype=dtype))
        conv_biases.append(np.zeros(n, dtype=dtype))
    fc_weight = fc_bias = None
    if config.fc_dim > 0:
        fc_weight = _glorot_uniform(
            rng, (config.f_total, config.fc_dim), fan_in=config.f_total, fan_out=config.fc_dim, dtype=dtype
        )
        fc_bias = np.zeros(config.fc_dim, dtype=dtype)
    out_weight = _glorot_uniform(
        rng, (config.hidden_dim, config.num_classes), fan_in=config.hidden_dim, fan_out=config.num_classes, dtype=dtype
    )
    out_bias = np.zeros(config.num_classes, dtype=dtype)
    return ModelParams(
        embedding=embedding,
        conv_weights=conv_weights,
        conv_biases=conv_biases,
        out_weight=out_weight,
        out_bias=out_bias,
        fc_weight=fc_weight,
        fc_bias=fc_bias,
    )


def _conv_relu_batch(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid stride-1 convolution plus ReLU on [B, L, d] input -> [B, T, n]."""
    w = weight.shape[0]
    length = x.shape[1]
    t = length - w + 1
    pre = np.broadcast_to(bias, (x.shape[0], t, bias.shape[0])).copy()
    for j in range(w):
        pre += x[:, j : j + t, :] @ weight[j]
    return np.maximum(pre, 0.0)


def conv_relu_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """ReLU(valid convolution) of a single [L, d] sequence -> [L-w+1, n].

    out[t, f] = max(0, bias[f] + sum_{j<w, c<d} x[t+j, c] * weight[j, c, f]).
    """
    if weight.shape[0] > x.shape[0]:
        raise ValueError(f"filter width {weight.shape[0]} exceeds sequence length {x.shape[0]}")
    return _conv_relu_batch(x[None, :, :], weight, bias)[0]


def _max_pool_batch(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Columnwise max over time of [B, T, n] -> ([B, n] values, [B, n] argmax)."""
    argmax = np.argmax(h, axis=1)
    values = np.take_along_axis(h, argmax[:, None, :], axis=1)[:, 0, :]
    return values, argmax


def max_pool_over_time(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Max over time of a [T, n] activation matrix.

    Returns (values [n], argmax positions [n]); ties resolve to the first
    maximal position, which is where the backward pass routes the gradient.
    """
    if h.ndim != 2 or h.shape[0] < 1:
        raise ValueError("max_pool_over_time needs a non-empty [T, n] matrix")
    values, argmax = _max_pool_batch(h[None, :, :])
    return values[0], argmax[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row softmax with max subtraction for stability."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probabilities: np.ndarray, labels) -> np.floating:
    """Mean -ln p[gold] over the batch; probabilities floored at 1e-12.

    Accumulates in float64 at least; wider inputs keep their precision so
    the finite-difference loss comparisons stay meaningful.
    """
    labels = np.asarray(labels)
    dtype = np.result_type(probabilities.dtype, np.float64)
    p = probabilities[np.arange(len(labels)), labels].astype(dtype)
    return -np.log(np.maximum(p, PROB_FLOOR)).mean()


def _dropout_mask(rng: np.random.Generator, shape, rate: float, dtype) -> np.ndarray:
    # inverted dropout: survivors scaled by 1/(1-rate) so inference needs no rescaling
    return (rng.random(size=shape) >= rate).astype(dtype) / (1.0 - rate)


def forward(
    params: ModelParams,
    config: ModelConfig,
    batch: Batch,
    train_mode: bool = False,
    dropout_seed: int = 0,
) -> tuple[np.ndarray, ForwardCache | None]:
    """Run the network on a batch.

    Returns ([B, K] class probabilities, cache). The cache holds everything
    ``backward`` needs and is only built in train mode; inference applies no
    dropout and returns None for it. Dropout masks are drawn from
    ``dropout_seed`` (embedding mask first, then the fully-connected mask).
    """
    inputs = batch.inputs
    if inputs.shape[1] != config.max_len:
        raise ValueError(f"encoded length {inputs.shape[1]} != config max_len {config.max_len}")
    if inputs.min() < 0 or inputs.max() >= config.alphabet_size:
        raise ValueError("input index outside the alphabet")
    if batch.labels is not None:
        labels = np.asarray(batch.labels)
        if labels.min() < 0 or labels.max() >= config.num_classes:
            raise ValueError(f"label index outside 0..{config.num_classes - 1}")

    rng = np.random.default_rng(dropout_seed) if train_mode else None
    x = params.embedding[inputs]  # [B, L, d]
    embed_mask = None
    if train_mode and config.dropout_embed > 0.0:
        embed_mask = _dropout_mask(rng, x.shape, config.dropout_embed, x.dtype)
        x = x * embed_mask

    pooled_parts, argmaxes = [], []
    for weight, bias in zip(params.conv_weights, params.conv_biases):
        h = _conv_relu_batch(x, weight, bias)
        values, argmax = _max_pool_batch(h)
        pooled_parts.append(values)
        argmaxes.append(argmax)
    pooled = np.concatenate(pooled_parts, axis=1)  # [B, f_total]

    fc_relu = fc_mask = None
    if config.fc_dim > 0:
        z = pooled @ params.fc_weight + params.fc_bias
        fc_relu = np.maximum(z, 0.0)
        hidden = fc_relu
        if train_mode and config.dropout_fc > 0.0:
            fc_mask = _dropout_mask(rng, hidden.shape, config.dropout_fc, hidden.dtype)
            hidden = hidden * fc_mask
    else:
        # without the fully-connected layer, dropout_fc acts on the pooled vector
        hidden = pooled
        if train_mode and config.dropout_fc > 0.0:
            fc_mask = _dropout_mask(rng, hidden.shape, config.dropout_fc, hidden.dtype)
            hidden = hidden * fc_mask

    logits = hidden @ params.out_weight + params.out_bias
    probs = softmax(logits)

    cache = None
    if train_mode:
        cache = ForwardCache(
            inputs=inputs,
            embedded=x,
            embed_mask=embed_mask,
            conv_pooled=pooled_parts,
            conv_argmax=argmaxes,
            pooled=pooled,
            fc_relu=fc_relu,
            fc_mask=fc_mask,
            hidden=hidden,
            probs=probs,
        )
    return probs, cache


def backward(
    params: ModelParams, config: ModelConfig, cache: ForwardCache | None, labels
) -> ModelParams:
    """Exact gradients of the mean cross-entropy w.r.t. every parameter.

    Replays the dropout masks recorded in the cache; the pooling layer routes
    gradient only to the recorded (first-max) positions, and embedding rows
    accumulate over every position where their character occurs.
    """
    if cache is None:
        raise ValueError("backward requires the cache of a train-mode forward pass")
    labels = np.asarray(labels)
    b_size = len(cache.probs)
    if len(labels) != b_size:
        raise ValueError("labels do not match the cached batch")

    grads = params.zeros_like()

    # softmax + cross-entropy: dL/dlogits = (p - onehot(gold)) / B
    dlogits = cache.probs.copy()
    dlogits[np.arange(b_size), labels] -= 1.0
    dlogits /= b_size

    grads.out_bias[:] = dlogits.sum(axis=0)
    grads.out_weight[:] = cache.hidden.T @ dlogits
    dhidden = dlogits @ params.out_weight.T

    if config.fc_dim > 0:
        if cache.fc_mask is not None:
            dhidden = dhidden * cache.fc_mask
        dz = dhidden * (cache.fc_relu > 0)
        grads.fc_bias[:] = dz.sum(axis=0)
        grads.fc_weight[:] = cache.pooled.T @ dz
        dpooled = dz @ params.fc_weight.T
    else:
        dpooled = dhidden * cache.fc_mask if cache.fc_mask is not None else dhidden

    x = cache.embedded
    dx = np.zeros_like(x)
    offset = 0
    for i, weight in enumerate(params.conv_weights):
        w, _, n = weight.shape
        t = config.max_len - w + 1
        dpool = dpooled[:, offset : offset + n]
        offset += n
        # pooled value > 0 iff the winning pre-activation cleared the ReLU
        dpre_at_max = dpool * (cache.conv_pooled[i] > 0)
        dpre = np.zeros((b_size, t, n), dtype=x.dtype)
        np.put_along_axis(dpre, cache.conv_argmax[i][:, None, :], dpre_at_max[:, None, :], axis=1)
        grads.conv_biases[i][:] = dpre.sum(axis=(0, 1))
        for j in range(w):
            grads.conv_weights[i][j] = np.tensordot(x[:, j : j + t, :], dpre, axes=([0, 1], [0, 1]))
            dx[:, j : j + t, :] += dpre @ weight[j].T

    if cache.embed_mask is not None:
        dx = dx * cache.embed_mask
    np.add.at(grads.embedding, cache.inputs, dx)
    return grads


def predict(params: ModelParams, config: ModelConfig, encoded: np.ndarray) -> Prediction:
    """Inference on one encoded text. Ignores dropout; ties pick the lowest index."""
    probs, _ = forward(params, config, Batch(inputs=np.asarray(encoded)[None, :]))
    row = probs[0]
    return Prediction(probabilities=row, label=int(np.argmax(row)))


def predict_probs(
    params: ModelParams, config: ModelConfig, inputs: np.ndarray, batch_size: int = 256
) -> np.ndarray:
    """Inference-mode probabilities for a [N, L] index matrix, in chunks."""
    rows = []
    for start in range(0, len(inputs), batch_size):
        probs, _ = forward(params, config, Batch(inputs=inputs[start : start + batch_size]))
        rows.append(probs)
    return np.concatenate(rows, axis=0)


def tiny_gradcheck_config(fc_dim: int = 7) -> ModelConfig:
    """The small fixed configuration used by the gradient-checking suite."""
    return ModelConfig(
        alphabet_size=10,
        num_classes=4,
        max_len=12,
        embed_dim=5,
        filter_spec=((2, 3), (3, 4)),
        fc_dim=fc_dim,
        dropout_embed=0.0,
        dropout_fc=0.0,
    )


def gradient_check(
    config: ModelConfig, seed: int, epsilon: float = 1e-5, batch_size: int = 3
) -> float:
    """Compare analytic gradients against central finite differences.

    Runs in wide precision (extended 80-bit where the platform has it) with
    dropout forced off, so roundoff in the loss differences stays far below
    the gradients being checked. Returns the maximum of
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|) over every
    scalar parameter.
    """
    cfg = replace(config, dropout_embed=0.0, dropout_fc=0.0)
    params = init_params(cfg, seed, dtype=np.longdouble)
    rng = np.random.default_rng(seed + 1)
    # full-length inputs over real characters: the zero-initialized PAD row
    # would park ReLU pre-activations exactly at the kink
    inputs = rng.integers(2, cfg.alphabet_size, size=(batch_size, cfg.max_len), dtype=np.int32)
    labels = rng.integers(0, cfg.num_classes, size=batch_size, dtype=np.int64)
    batch = Batch(inputs=inputs, labels=labels)

    _, cache = forward(params, cfg, batch, train_mode=True, dropout_seed=0)
    grads = backward(params, cfg, cache, labels)

    worst = 0.0
    for (_, theta), (_, grad) in zip(params.tensors(), grads.tensors()):
        flat_theta = theta.ravel()
        flat_grad = grad.ravel()
        for i in range(flat_theta.size):
            orig = flat_theta[i]
            flat_theta[i] = orig + epsilon
            loss_plus = cross_entropy(forward(params, cfg, batch)[0], labels)
            flat_theta[i] = orig - epsilon
            loss_minus = cross_entropy(forward(params, cfg, batch)[0], labels)
            flat_theta[i] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            analytic = flat_grad[i]
            rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            worst = max(worst, rel)
    return worst


def run_gradient_check_suite(seeds=(0, 1, 2), epsilon: float = 1e-5) -> float:
    """Gradient check over the tiny configuration, with and without the
    fully-connected layer, across several seeds. Returns the worst error."""
    worst = 0.0
    for fc_dim in (7, 0):
        cfg = tiny_gradcheck_config(fc_dim)
        for seed in seeds:
            worst = max(worst, gradient_check(cfg, seed, epsilon))
    return worst
