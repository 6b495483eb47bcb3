"""Target classifiers: training, embedding taps, predictions and per-sample loss."""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core.nn import (
    Network,
    TrainConfig,
    per_sample_cross_entropy,
    softmax,
    softmax_cross_entropy,
    train_network,
)
from .errors import InvalidArgument, ParseError

__all__ = [
    "FitReport",
    "TargetModel",
    "TrainConfig",
    "embed",
    "load_checkpoint",
    "predict_vector",
    "prediction_loss",
    "prediction_losses",
    "save_checkpoint",
    "train_target",
]


@dataclass
class TargetModel:
    """A dense classifier whose hidden activations can be tapped by depth.

    Depth 0 is the input, depth ``L`` the logits, depths in between the
    post-activation outputs of the hidden layers.
    """

    network: Network

    @classmethod
    def build(cls, layer_sizes, activation="tanh", seed=0, embedding_layer=False):
        return cls(Network(layer_sizes, activation, seed=seed, linear_first=embedding_layer, stream="target-init"))

    @property
    def layer_sizes(self):
        return list(self.network.sizes)

    @property
    def activation(self):
        return self.network.activation

    @property
    def embedding_layer(self):
        return self.network.linear_first

    @property
    def depth(self):
        return self.network.n_layers

    @property
    def n_classes(self):
        return self.network.sizes[-1]

    @property
    def tap_depths(self):
        return list(range(self.depth + 1))

    @property
    def shallow_depth(self):
        return 1

    @property
    def deep_depth(self):
        return self.depth - 1


@dataclass
class FitReport:
    train_accuracy: float
    test_accuracy: float
    loss_curve: list = field(default_factory=list)

    @property
    def overfit_gap(self):
        return self.train_accuracy - self.test_accuracy

    def to_dict(self):
        return {
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "overfit_gap": self.overfit_gap,
            "loss_curve": list(self.loss_curve),
        }


def _check_input(model, x):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.layer_sizes[0]:
        raise InvalidArgument(
            f"input width {x.shape[1]} does not match model input {model.layer_sizes[0]}",
            field="x",
        )
    return x


def embed(model, x, depth):
    """Post-activation output of layer ``depth`` (0 = input, L = logits)."""
    if not isinstance(depth, (int, np.integer)) or not 0 <= depth <= model.depth:
        raise InvalidArgument(f"depth must lie in [0, {model.depth}], got {depth}", field="depth")
    x = _check_input(model, x)
    return model.network.forward(x, stop=int(depth))[-1]


def logits(model, x):
    return embed(model, x, model.depth)


def predict_vector(model, x):
    return softmax(logits(model, x))


def predict_class(model, x):
    return logits(model, x).argmax(axis=1)


def prediction_losses(model, x, y):
    """Per-sample cross-entropy of the model's softmax at labels ``y``."""
    return per_sample_cross_entropy(logits(model, x), np.atleast_1d(y))


def prediction_loss(model, x, y):
    x = np.asarray(x, dtype=np.float64)
    return float(prediction_losses(model, x.reshape(1, -1), [y])[0])


def accuracy(model, x, y):
    if len(y) == 0:
        return float("nan")
    return float(np.mean(predict_class(model, x) == np.asarray(y)))


def _split_indices(split):
    if hasattr(split, "member_indices"):
        return np.asarray(split.member_indices), np.asarray(split.nonmember_indices)
    train_idx, test_idx = split
    return np.asarray(train_idx, dtype=np.int64), np.asarray(test_idx, dtype=np.int64)


def train_target(ds, split, layer_sizes, cfg, activation="tanh", embedding_layer=False):
    """Train a classifier on the split's training rows and report accuracies.

    ``split`` is a MembershipSplit (members train, non-members test) or a
    ``(train_idx, test_idx)`` pair.
    """
    layer_sizes = list(layer_sizes)
    if ds.n_features != layer_sizes[0]:
        raise InvalidArgument(
            f"feature width {ds.n_features} does not match input size {layer_sizes[0]}",
            field="layer_sizes",
        )
    if ds.n_classes > layer_sizes[-1]:
        raise InvalidArgument(
            f"dataset has {ds.n_classes} classes but the model outputs {layer_sizes[-1]}",
            field="layer_sizes",
        )
    train_idx, test_idx = _split_indices(split)
    model = TargetModel.build(layer_sizes, activation, seed=cfg.seed, embedding_layer=embedding_layer)
    x = ds.features[train_idx]
    y = ds.labels[train_idx]
    curve = train_network(
        model.network,
        x,
        lambda out, idx: softmax_cross_entropy(out, y[idx]),
        cfg,
        stream="target-train",
    )
    report = FitReport(
        train_accuracy=accuracy(model, x, y),
        test_accuracy=accuracy(model, ds.features[test_idx], ds.labels[test_idx]),
        loss_curve=curve,
    )
    return model, report


_MAGIC = b"EATM"
_VERSION = 1


def save_checkpoint(model, path):
    """Write ``model`` as magic, version, JSON header and little-endian f64 blobs."""
    header = json.dumps(
        {
            "layer_sizes": model.layer_sizes,
            "activation": model.activation,
            "embedding_layer": model.embedding_layer,
        },
        sort_keys=True,
    ).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(header)))
        fh.write(header)
        for p in model.network.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return Path(path)


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ParseError("not a target checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != _VERSION:
        raise ParseError(f"unsupported checkpoint version {version}")
    header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    model = TargetModel.build(header["layer_sizes"], header["activation"], embedding_layer=header["embedding_layer"])
    offset = 12 + hlen
    params = []
    for p in model.network.params():
        nbytes = p.size * 8
        blob = data[offset : offset + nbytes]
        if len(blob) != nbytes:
            raise ParseError("checkpoint truncated")
        params.append(np.frombuffer(blob, dtype="<f8").reshape(p.shape).astype(np.float64))
        offset += nbytes
    if offset != len(data):
        raise ParseError("trailing bytes after checkpoint weights")
    model.network.set_params(params)
    return model
