"""Property inference from hidden-layer embeddings.

The attacker feeds a labelled auxiliary set through the target, taps one
layer, and fits one binary MLP per property.
"""

from dataclasses import dataclass

import numpy as np

from .core.nn import softmax
from .errors import InvalidArgument
from .mia import _standardize, train_binary_attack
from .seeding import substream
from .target import embed


@dataclass
class PiaResult:
    property: str
    depth: int
    depth_tag: str
    attack_accuracy: float
    attack_train_accuracy: float
    target_train_acc: float = None
    target_test_acc: float = None

    def to_record(self):
        return {
            "property": self.property,
            "depth": self.depth_tag,
            "attack_accuracy": self.attack_accuracy,
            "target_train_acc": self.target_train_acc,
            "target_test_acc": self.target_test_acc,
        }


def depth_tag(target, depth):
    if depth == target.shallow_depth:
        return "shallow"
    if depth == target.deep_depth:
        return "deep"
    return f"depth-{depth}"


def run_pia(target, aux, prop, depth, cfg, fit=None, attack_train_frac=0.5):
    """Train a property classifier on aux embeddings at ``depth``; report held-out accuracy.

    ``fit`` (a FitReport of the target) only supplies context columns.
    """
    if prop not in aux.property_labels:
        raise InvalidArgument(f"auxiliary set has no property {prop!r}", field="property")
    if not isinstance(depth, (int, np.integer)) or not 0 <= depth <= target.depth:
        raise InvalidArgument(f"depth must lie in [0, {target.depth}], got {depth}", field="depth")
    n = len(aux)
    order = substream(cfg.seed, "pia-split", prop).permutation(n)
    cut = int(round(attack_train_frac * n))
    if cut == 0 or cut == n:
        raise InvalidArgument("auxiliary split leaves an empty partition", field="attack_train_frac")
    tr, ev = order[:cut], order[cut:]
    y = aux.property_labels[prop]
    emb = embed(target, aux.features, int(depth))
    train_x, eval_x = _standardize(emb[tr], emb[ev])
    net = train_binary_attack(train_x, y[tr], cfg, stream=f"pia-{prop}")
    eval_acc = float(np.mean(softmax(net(eval_x)).argmax(axis=1) == y[ev]))
    train_acc = float(np.mean(softmax(net(train_x)).argmax(axis=1) == y[tr]))
    return PiaResult(
        property=prop,
        depth=int(depth),
        depth_tag=depth_tag(target, depth),
        attack_accuracy=eval_acc,
        attack_train_accuracy=train_acc,
        target_train_acc=None if fit is None else fit.train_accuracy,
        target_test_acc=None if fit is None else fit.test_accuracy,
    )
