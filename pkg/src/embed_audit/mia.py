"""Neural-network membership inference attacks.

Three feature settings are supported (hidden-layer embeddings, prediction
vectors, per-sample loss), plus shadow attacks that rebuild a loss signal
from embeddings and either true labels or K-means pseudo-labels.
"""

from dataclasses import dataclass, field

import numpy as np

from .core.cluster import assign_to_centroids, best_permutation_agreement, kmeans
from .core.metrics import roc_auc
from .core.nn import Network, TrainConfig, per_sample_cross_entropy, softmax, softmax_cross_entropy, train_network
from .errors import InvalidArgument
from .target import embed, predict_vector, prediction_losses

SETTINGS = ("embedding", "prediction", "loss")
ATTACK_HIDDEN = (64, 32)


@dataclass
class AttackDataset:
    """Attack features for the attacker's train and eval partitions.

    Membership is 1 for members. Both partitions are balanced.
    """

    train_features: np.ndarray
    train_membership: np.ndarray
    eval_features: np.ndarray
    eval_membership: np.ndarray
    setting: str
    depth: int = None

    def __post_init__(self):
        for part in ("train", "eval"):
            m = getattr(self, f"{part}_membership")
            if m.sum() * 2 != len(m):
                raise InvalidArgument(f"attack {part} partition is not balanced", field="membership")

    @property
    def width(self):
        return self.train_features.shape[1]


@dataclass
class MiaResult:
    auc: float
    attack_accuracy: float
    setting: str
    depth: int = None
    seed: int = 0
    clustering_quality: float = None
    scores: np.ndarray = field(default=None, repr=False)
    membership: np.ndarray = field(default=None, repr=False)

    def to_record(self, finding=None):
        rec = {
            "finding": finding,
            "setting": self.setting,
            "depth": self.depth,
            "seed": self.seed,
            "auc": self.auc,
            "attack_accuracy": self.attack_accuracy,
        }
        if self.clustering_quality is not None:
            rec["clustering_quality"] = self.clustering_quality
        return rec


def _partition(split):
    train_idx = np.concatenate([split.train_members, split.train_nonmembers])
    train_mem = np.r_[np.ones(len(split.train_members)), np.zeros(len(split.train_nonmembers))]
    eval_idx = np.concatenate([split.eval_members, split.eval_nonmembers])
    eval_mem = np.r_[np.ones(len(split.eval_members)), np.zeros(len(split.eval_nonmembers))]
    return train_idx, train_mem.astype(np.int64), eval_idx, eval_mem.astype(np.int64)


def _features(target, ds, idx, setting, depth):
    x = ds.features[idx]
    if setting == "embedding":
        return embed(target, x, depth)
    if setting == "prediction":
        return predict_vector(target, x)
    return prediction_losses(target, x, ds.labels[idx])[:, None]


def build_attack_features(target, ds, split, setting, depth=None):
    """Extract per-setting attack features for the split's attack partitions."""
    if setting not in SETTINGS:
        raise InvalidArgument(f"unknown setting {setting!r}; expected one of {SETTINGS}", field="setting")
    if setting == "embedding":
        if depth is None:
            depth = target.deep_depth
        if not isinstance(depth, (int, np.integer)) or not 0 <= depth <= target.depth:
            raise InvalidArgument(f"depth must lie in [0, {target.depth}], got {depth}", field="depth")
    else:
        depth = target.depth
    n = len(ds)
    train_idx, train_mem, eval_idx, eval_mem = _partition(split)
    if np.any(train_idx >= n) or np.any(eval_idx >= n):
        raise InvalidArgument("split indices exceed dataset size", field="split")
    return AttackDataset(
        _features(target, ds, train_idx, setting, depth),
        train_mem,
        _features(target, ds, eval_idx, setting, depth),
        eval_mem,
        setting=setting,
        depth=int(depth),
    )


def attack_config(seed=0, epochs=80):
    return TrainConfig(epochs=epochs, batch_size=32, learning_rate=1e-3, optimizer="adam", seed=seed)


def _standardize(train, other):
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std[std < 1e-12] = 1.0
    return (train - mean) / std, (other - mean) / std


def train_binary_attack(train_x, train_y, cfg, stream="attack"):
    """Fit the [f, 64, 32, 2] relu attack classifier."""
    net = Network([train_x.shape[1], *ATTACK_HIDDEN, 2], "relu", seed=cfg.seed, stream=f"{stream}-init")
    train_network(net, train_x, lambda out, idx: softmax_cross_entropy(out, train_y[idx]), cfg, stream=stream)
    return net


def run_mia(attack_ds, cfg):
    """Train the attack model on the train partition and score the eval partition."""
    for part in ("train", "eval"):
        m = getattr(attack_ds, f"{part}_membership")
        if len(m) == 0 or m.min() == m.max():
            raise InvalidArgument(f"attack {part} partition needs both classes", field="split")
    train_x, eval_x = _standardize(attack_ds.train_features, attack_ds.eval_features)
    net = train_binary_attack(train_x, attack_ds.train_membership, cfg)
    probs = softmax(net(eval_x))
    scores = probs[:, 1]
    curve = roc_auc(scores, attack_ds.eval_membership)
    acc = float(np.mean(probs.argmax(axis=1) == attack_ds.eval_membership))
    return MiaResult(
        auc=curve.auc,
        attack_accuracy=acc,
        setting=attack_ds.setting,
        depth=attack_ds.depth,
        seed=cfg.seed,
        scores=scores,
        membership=attack_ds.eval_membership.copy(),
    )


def shadow_config(seed=0):
    return TrainConfig(epochs=60, batch_size=32, learning_rate=1e-3, optimizer="adam", seed=seed, l2_penalty=1e-4)


def _shadow_losses(train_emb, train_labels, eval_emb, eval_labels, n_classes, hidden, cfg):
    train_x, eval_x = _standardize(train_emb, eval_emb)
    net = Network([train_x.shape[1], *hidden, n_classes], "tanh", seed=cfg.seed, stream="shadow-init")
    train_network(net, train_x, lambda out, idx: softmax_cross_entropy(out, train_labels[idx]), cfg, stream="shadow")
    return (
        per_sample_cross_entropy(net(train_x), train_labels)[:, None],
        per_sample_cross_entropy(net(eval_x), eval_labels)[:, None],
    )


def _embedding_partitions(target, ds, split, depth):
    if not isinstance(depth, (int, np.integer)) or not 0 <= depth <= target.depth:
        raise InvalidArgument(f"depth must lie in [0, {target.depth}], got {depth}", field="depth")
    train_idx, train_mem, eval_idx, eval_mem = _partition(split)
    return (
        embed(target, ds.features[train_idx], depth),
        embed(target, ds.features[eval_idx], depth),
        train_idx,
        train_mem,
        eval_idx,
        eval_mem,
    )


def shadow_attack_with_labels(target, ds, split, depth, cfg, shadow_hidden=(64,), shadow_cfg=None):
    """Loss-based attack on losses of a shadow classifier fit to (embedding, true label)."""
    shadow_cfg = shadow_cfg or shadow_config(cfg.seed)
    train_emb, eval_emb, train_idx, train_mem, eval_idx, eval_mem = _embedding_partitions(target, ds, split, depth)
    n_classes = max(target.n_classes, ds.n_classes)
    tr_loss, ev_loss = _shadow_losses(
        train_emb, ds.labels[train_idx], eval_emb, ds.labels[eval_idx], n_classes, shadow_hidden, shadow_cfg
    )
    result = run_mia(AttackDataset(tr_loss, train_mem, ev_loss, eval_mem, "shadow-labels", int(depth)), cfg)
    return result


def shadow_attack_with_pseudolabels(target, ds, split, depth, k, cfg, shadow_hidden=(64,), shadow_cfg=None):
    """As :func:`shadow_attack_with_labels`, with K-means cluster ids as labels.

    ``clustering_quality`` is the best-permutation agreement between the
    attack-train cluster ids and the true labels.
    """
    if k < 2:
        raise InvalidArgument(f"k must be >= 2, got {k}", field="k")
    shadow_cfg = shadow_cfg or shadow_config(cfg.seed)
    train_emb, eval_emb, train_idx, train_mem, eval_idx, eval_mem = _embedding_partitions(target, ds, split, depth)
    assign, centroids = kmeans(train_emb, k, seed=cfg.seed)
    pseudo_train = np.asarray(assign)
    pseudo_eval = assign_to_centroids(eval_emb, centroids)
    quality = best_permutation_agreement(pseudo_train, ds.labels[train_idx])
    tr_loss, ev_loss = _shadow_losses(train_emb, pseudo_train, eval_emb, pseudo_eval, k, shadow_hidden, shadow_cfg)
    result = run_mia(AttackDataset(tr_loss, train_mem, ev_loss, eval_mem, "shadow-pseudolabels", int(depth)), cfg)
    result.clustering_quality = quality
    return result
