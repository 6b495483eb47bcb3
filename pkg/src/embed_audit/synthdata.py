"""Seeded synthetic datasets standing in for tabular, image-attribute and text corpora."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, ParseError
from .seeding import substream


@dataclass(eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    property_labels: dict = field(default_factory=dict)
    name: str = "dataset"
    seed: int = 0

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.features.shape[0]
        if self.labels.shape != (n,):
            raise InvalidArgument("need exactly one label per feature row", field="labels")
        if n and self.labels.min() < 0:
            raise InvalidArgument("labels must be non-negative", field="labels")
        props = {}
        for key, vec in self.property_labels.items():
            vec = np.asarray(vec, dtype=np.int64)
            if vec.shape != (n,) or not np.all((vec == 0) | (vec == 1)):
                raise InvalidArgument(f"property {key!r} must be a 0/1 vector of length {n}", field=key)
            props[key] = vec
        self.property_labels = props

    def __len__(self):
        return self.features.shape[0]

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and self.property_labels.keys() == other.property_labels.keys()
            and all(np.array_equal(v, other.property_labels[k]) for k, v in self.property_labels.items())
        )

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1 if len(self) else 0

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(
            self.features[idx],
            self.labels[idx],
            {k: v[idx] for k, v in self.property_labels.items()},
            name=self.name,
            seed=self.seed,
        )

    def token_set(self, i):
        """Token ids present in row ``i`` of a multi-hot corpus."""
        return frozenset(np.flatnonzero(self.features[i] > 0.5).tolist())


def _balanced_labels(n, classes, rng):
    return rng.permutation(np.arange(n) % classes)


def gen_purchase_like(n, d, classes, flip_prob=0.05, seed=0):
    """Binary purchase-record analogue: each row is its class prototype with
    independent bit flips."""
    if classes < 2 or n < classes:
        raise InvalidArgument("need n >= classes >= 2", field="classes")
    if d < 1:
        raise InvalidArgument("d must be >= 1", field="d")
    if not 0.0 <= flip_prob < 0.5:
        raise InvalidArgument("flip_prob must lie in [0, 0.5)", field="flip_prob")
    rng = substream(seed, "purchase")
    prototypes = rng.integers(0, 2, size=(classes, d))
    labels = _balanced_labels(n, classes, rng)
    flips = rng.random((n, d)) < flip_prob
    features = np.where(flips, 1 - prototypes[labels], prototypes[labels]).astype(np.float64)
    return LabeledDataset(features, labels, name="purchase", seed=seed)


def gen_property_blobs(
    n,
    d,
    classes,
    properties=(),
    spread=1.0,
    seed=0,
    center_scale=4.0,
    property_shift=4.0,
):
    """Gaussian class blobs with binary properties.

    Each property owns a unit direction orthogonal to the class centres
    (when the dimension allows). A hidden fair bit shifts the sample by
    ``+-property_shift / 2`` along that direction; the reported label equals
    the hidden bit with probability ``correlation`` and is an independent
    fair coin otherwise, giving a label/bit correlation of ``correlation``.
    """
    if d < 2:
        raise InvalidArgument("d must be >= 2", field="d")
    if classes < 1 or n < classes:
        raise InvalidArgument("need n >= classes >= 1", field="classes")
    if spread < 0:
        raise InvalidArgument("spread must be >= 0", field="spread")
    properties = list(properties)
    for name, corr in properties:
        if not 0.0 <= corr <= 1.0:
            raise InvalidArgument(f"correlation of {name!r} must lie in [0, 1]", field=name)
    rng = substream(seed, "blobs")
    centers = rng.normal(size=(classes, d))
    centers *= center_scale / np.linalg.norm(centers, axis=1, keepdims=True)
    labels = _balanced_labels(n, classes, rng)
    features = centers[labels] + spread * rng.normal(size=(n, d))

    basis = _orthonormalize(list(centers)) if classes + len(properties) <= d else []
    props = {}
    for name, corr in properties:
        prng = substream(seed, "blobs", "property", name)
        direction = prng.normal(size=d)
        for b in basis:
            direction -= (direction @ b) * b
        direction /= np.linalg.norm(direction)
        basis.append(direction)
        hidden = prng.integers(0, 2, size=n)
        features += np.outer((hidden - 0.5) * property_shift, direction)
        keep = prng.random(n) < corr
        props[name] = np.where(keep, hidden, prng.integers(0, 2, size=n))
    return LabeledDataset(features, labels, props, name="blobs", seed=seed)


def _orthonormalize(vectors):
    out = []
    for v in vectors:
        v = v.copy()
        for b in out:
            v -= (v @ b) * b
        norm = np.linalg.norm(v)
        if norm > 1e-10:
            out.append(v / norm)
    return out


def gen_bow_text(vocab_size, doc_len, n, classes, seed=0, bias=1.5):
    """Bag-of-words corpus: each document is ``doc_len`` distinct tokens drawn
    from a class-specific token distribution; features are multi-hot rows."""
    if doc_len > vocab_size:
        raise InvalidArgument("doc_len cannot exceed vocab_size", field="doc_len")
    if doc_len < 1:
        raise InvalidArgument("doc_len must be >= 1", field="doc_len")
    if classes < 2 or n < classes:
        raise InvalidArgument("need n >= classes >= 2", field="classes")
    rng = substream(seed, "bow")
    logits = bias * rng.normal(size=(classes, vocab_size))
    weights = np.exp(logits - logits.max(axis=1, keepdims=True))
    weights /= weights.sum(axis=1, keepdims=True)
    labels = _balanced_labels(n, classes, rng)
    features = np.zeros((n, vocab_size))
    for i, c in enumerate(labels):
        features[i, rng.choice(vocab_size, size=doc_len, replace=False, p=weights[c])] = 1.0
    return LabeledDataset(features, labels, name="bow", seed=seed)


@dataclass
class MembershipSplit:
    """Member/non-member partition plus balanced attacker train/eval subsets."""

    member_indices: np.ndarray
    nonmember_indices: np.ndarray
    attack_train_frac: float
    train_members: np.ndarray
    train_nonmembers: np.ndarray
    eval_members: np.ndarray
    eval_nonmembers: np.ndarray

    @property
    def attack_train(self):
        return self.train_members, self.train_nonmembers

    @property
    def attack_eval(self):
        return self.eval_members, self.eval_nonmembers


def split_membership(ds, member_frac=0.5, attack_train_frac=0.5, seed=0):
    """Randomly split ``ds`` (or a row count) into members and non-members.

    The attacker's train and eval partitions each hold equally many members
    and non-members; the larger side is truncated.
    """
    n = ds if isinstance(ds, (int, np.integer)) else len(ds)
    for name, frac in (("member_frac", member_frac), ("attack_train_frac", attack_train_frac)):
        if not 0.0 < frac < 1.0:
            raise InvalidArgument(f"{name} must lie in (0, 1)", field=name)
    rng = substream(seed, "membership-split")
    order = rng.permutation(n)
    n_mem = int(round(member_frac * n))
    members, nonmembers = np.sort(order[:n_mem]), np.sort(order[n_mem:])
    if len(members) == 0 or len(nonmembers) == 0:
        raise InvalidArgument("split leaves members or non-members empty", field="member_frac")

    mem = rng.permutation(members)
    non = rng.permutation(nonmembers)
    k_mem = int(round(attack_train_frac * len(mem)))
    k_non = int(round(attack_train_frac * len(non)))
    k = min(k_mem, k_non)
    e = min(len(mem) - k_mem, len(non) - k_non)
    if k == 0 or e == 0:
        raise InvalidArgument("attack partitions would be empty", field="attack_train_frac")
    return MembershipSplit(
        member_indices=members,
        nonmember_indices=nonmembers,
        attack_train_frac=attack_train_frac,
        train_members=np.sort(mem[:k]),
        train_nonmembers=np.sort(non[:k]),
        eval_members=np.sort(mem[k_mem : k_mem + e]),
        eval_nonmembers=np.sort(non[k_non : k_non + e]),
    )


def save_csv(ds, path):
    path = Path(path)
    d = ds.n_features
    header = [f"feature_{j}" for j in range(d)] + ["label"]
    props = sorted(ds.property_labels)
    header += [f"prop_{p}" for p in props]
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(ds)):
            row = ["%.17g" % v for v in ds.features[i]]
            row.append(str(int(ds.labels[i])))
            row += [str(int(ds.property_labels[p][i])) for p in props]
            writer.writerow(row)
    return path


def load_csv(path, name=None, seed=0):
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise ParseError("missing header", line=1)
    header = rows[0]
    n_feat = 0
    while n_feat < len(header) and header[n_feat] == f"feature_{n_feat}":
        n_feat += 1
    if n_feat == 0 or n_feat >= len(header) or header[n_feat] != "label":
        raise ParseError("header must be feature_0..feature_{d-1},label[,prop_<name>...]", line=1)
    props = header[n_feat + 1 :]
    for p in props:
        if not p.startswith("prop_") or len(p) == len("prop_"):
            raise ParseError(f"unexpected column {p!r}", line=1)
    width = len(header)
    features, labels, pvals = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", line=lineno)
        try:
            features.append([float(v) for v in row[:n_feat]])
            labels.append(int(row[n_feat]))
            pvals.append([int(v) for v in row[n_feat + 1 :]])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
    features = np.array(features, dtype=np.float64).reshape(len(labels), n_feat)
    pvals = np.array(pvals, dtype=np.int64).reshape(len(labels), len(props))
    try:
        return LabeledDataset(
            features,
            np.array(labels, dtype=np.int64),
            {p[len("prop_") :]: pvals[:, j] for j, p in enumerate(props)},
            name=name or path.stem,
            seed=seed,
        )
    except InvalidArgument as exc:
        raise ParseError(str(exc)) from None
