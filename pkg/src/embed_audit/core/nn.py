"""Dense feed-forward networks with hand-written backpropagation."""

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidArgument, NumericFailure
from ..seeding import substream
from . import optim


def softmax(logits, axis=-1):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def _check_labels(labels, n_classes):
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InvalidArgument(
            f"labels must lie in [0, {n_classes}), got range "
            f"[{labels.min()}, {labels.max()}]",
            field="labels",
        )
    return labels


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of ``labels`` and its gradient w.r.t. ``logits``."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = _check_labels(labels, logits.shape[1])
    if labels.shape[0] != logits.shape[0]:
        raise InvalidArgument("one label per logit row is required", field="labels")
    n = logits.shape[0]
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n


def per_sample_cross_entropy(logits, labels):
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = _check_labels(labels, logits.shape[1])
    return -log_softmax(logits)[np.arange(logits.shape[0]), labels]


def soft_cross_entropy(logits, targets):
    """Cross-entropy against probability-vector targets (mean over rows)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = -(targets * logp).sum(axis=1).mean()
    grad = (np.exp(logp) * targets.sum(axis=1, keepdims=True) - targets) / n
    return float(loss), grad


def mean_squared_error(outputs, targets):
    """Mean over rows of the squared Euclidean error, and its gradient."""
    diff = outputs - targets
    n = outputs.shape[0]
    return float((diff * diff).sum() / n), 2.0 * diff / n


# activation name -> (forward, derivative expressed through the output)
ACTIVATIONS = {
    "tanh": (np.tanh, lambda out: 1.0 - out * out),
    "relu": (lambda z: np.maximum(z, 0.0), lambda out: (out > 0).astype(np.float64)),
    "linear": (lambda z: z, lambda out: np.ones_like(out)),
}


class Network:
    """Stack of dense layers; hidden layers share one activation, the last is linear.

    With ``linear_first`` the first layer is a plain linear map (a token or
    feature embedding layer) regardless of ``activation``.
    """

    def __init__(self, sizes, activation="tanh", seed=0, linear_first=False, stream="init"):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise InvalidArgument(f"invalid layer sizes {sizes}", field="layer_sizes")
        if activation not in ACTIVATIONS:
            raise InvalidArgument(f"unknown activation {activation!r}", field="activation")
        self.sizes = sizes
        self.activation = activation
        self.linear_first = bool(linear_first)
        rng = substream(seed, stream)
        self.weights = []
        self.biases = []
        gain = 2.0 if activation == "relu" else 1.0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self.weights.append(rng.normal(0.0, np.sqrt(gain / fan_in), size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self):
        return len(self.weights)

    def layer_activation(self, i):
        if i == self.n_layers - 1:
            return "linear"
        if i == 0 and self.linear_first:
            return "linear"
        return self.activation

    def forward(self, x, start=0, stop=None):
        """Run layers ``start .. stop-1``; return every intermediate activation.

        ``acts[0]`` is the input, ``acts[j]`` the output of layer ``start + j - 1``.
        """
        stop = self.n_layers if stop is None else stop
        acts = [np.asarray(x, dtype=np.float64)]
        for i in range(start, stop):
            fn = ACTIVATIONS[self.layer_activation(i)][0]
            acts.append(fn(acts[-1] @ self.weights[i] + self.biases[i]))
        return acts

    def __call__(self, x):
        return self.forward(x)[-1]

    def backward(self, acts, grad_out, start=0):
        """Backpropagate ``grad_out`` through the layers that produced ``acts``.

        Returns (weight grads, bias grads, input grad) for layers
        ``start .. start + len(acts) - 2``.
        """
        n = len(acts) - 1
        gw = [None] * n
        gb = [None] * n
        g = grad_out
        for j in range(n - 1, -1, -1):
            i = start + j
            g = g * ACTIVATIONS[self.layer_activation(i)][1](acts[j + 1])
            gw[j] = acts[j].T @ g
            gb[j] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return gw, gb, g

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def set_params(self, params):
        self.weights = [np.asarray(p, dtype=np.float64) for p in params[0::2]]
        self.biases = [np.asarray(p, dtype=np.float64) for p in params[1::2]]

    def copy(self):
        other = Network.__new__(Network)
        other.sizes = list(self.sizes)
        other.activation = self.activation
        other.linear_first = self.linear_first
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    l2_penalty: float = 0.0

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidArgument("epochs must be >= 0", field="epochs")
        if self.batch_size < 1:
            raise InvalidArgument("batch_size must be >= 1", field="batch_size")
        if self.learning_rate <= 0:
            raise InvalidArgument("learning_rate must be positive", field="learning_rate")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidArgument(f"unknown optimizer {self.optimizer!r}", field="optimizer")
        if self.l2_penalty < 0:
            raise InvalidArgument("l2_penalty must be >= 0", field="l2_penalty")

    def replace(self, **changes):
        return TrainConfig(**{**asdict(self), **changes})

    def to_dict(self):
        return asdict(self)


def train_network(net, x, loss_fn, cfg, stream="train"):
    """Mini-batch training of ``net`` on rows of ``x``.

    ``loss_fn(outputs, batch_index)`` returns the mean batch loss and its
    gradient with respect to ``outputs``. Returns the per-epoch mean loss.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    rng = substream(cfg.seed, stream, "shuffle")
    params = net.params()
    states = [optim.make_state(cfg.optimizer, p, cfg.learning_rate) for p in params]
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            acts = net.forward(x[idx])
            loss, grad = loss_fn(acts[-1], idx)
            gw, gb, _ = net.backward(acts, grad)
            if cfg.l2_penalty:
                loss += cfg.l2_penalty * sum(float((w * w).sum()) for w in net.weights)
                gw = [g + 2.0 * cfg.l2_penalty * w for g, w in zip(gw, net.weights)]
            grads = [g for pair in zip(gw, gb) for g in pair]
            params = [optim.step(p, g, s) for p, g, s in zip(params, grads, states)]
            net.set_params(params)
            total += loss * len(idx)
        mean = total / max(n, 1)
        if not np.isfinite(mean):
            raise NumericFailure("training loss became non-finite", step=epoch)
        curve.append(mean)
    return curve
