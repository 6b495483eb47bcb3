"""Noisy self-distillation and paired teacher/student attack re-evaluation."""

from dataclasses import dataclass, field

import numpy as np

from .core.metrics import set_precision_recall
from .core.nn import TrainConfig, soft_cross_entropy, softmax, train_network
from .errors import InvalidArgument
from .inversion import InversionConfig, invert_setup1, invert_setup2, make_problem, mapping_config, train_mapping
from .mia import attack_config, build_attack_features, run_mia
from .seeding import substream
from .target import FitReport, TargetModel, accuracy, logits


@dataclass
class DistillConfig:
    sigma: float = 0.1
    temperature: float = 1.0
    epochs: int = 10
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidArgument("sigma must be >= 0", field="sigma")
        if self.temperature <= 0:
            raise InvalidArgument("temperature must be positive", field="temperature")

    def train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )


def perturb_soft_labels(probs, sigma, rng):
    """Add N(0, sigma^2) noise, clamp at zero and renormalise each row.

    A row that clamps to all zeros becomes uniform.
    """
    noisy = np.maximum(probs + sigma * rng.normal(size=probs.shape), 0.0)
    total = noisy.sum(axis=1, keepdims=True)
    dead = total[:, 0] <= 0
    noisy[dead] = 1.0
    total[dead] = probs.shape[1]
    return noisy / total


def noisy_self_distill(teacher, ds, split, cfg):
    """Retrain the teacher's architecture on its own noise-perturbed soft labels.

    Each training row's soft label is perturbed once; the student then fits
    these fixed noisy targets. Returns the student and its FitReport on the
    split.
    """
    if hasattr(split, "member_indices"):
        train_idx, test_idx = split.member_indices, split.nonmember_indices
    else:
        train_idx, test_idx = (np.asarray(i, dtype=np.int64) for i in split)
    x = ds.features[train_idx]
    soft = softmax(logits(teacher, x) / cfg.temperature)
    noisy = perturb_soft_labels(soft, cfg.sigma, substream(cfg.seed, "distill-noise"))

    def loss(out, idx):
        return soft_cross_entropy(out, noisy[idx])

    student = TargetModel.build(
        teacher.layer_sizes, teacher.activation, seed=cfg.seed, embedding_layer=teacher.embedding_layer
    )
    curve = train_network(student.network, x, loss, cfg.train_config(), stream="distill-train")
    fit = FitReport(
        train_accuracy=accuracy(student, x, ds.labels[train_idx]),
        test_accuracy=accuracy(student, ds.features[test_idx], ds.labels[test_idx]),
        loss_curve=curve,
    )
    return student, fit


@dataclass
class AttackSuite:
    """Which attacks to rerun against teacher and student, and on what data.

    ``docs`` index the rows of ``ds`` to invert; ``aux`` trains the mapping
    model. ``mia_split`` (a MembershipSplit) enables the loss-based MIA.
    """

    ds: object
    test_idx: np.ndarray
    aux: object = None
    docs: tuple = ()
    doc_len: int = None
    from_depth: int = 2
    to_depth: int = 1
    mapping_hidden: tuple = (256,)
    mapping_epochs: int = 150
    attacks: tuple = ("setup2", "setup1", "mia-loss")
    mia_split: object = None
    inversion_steps: int = 3000
    seed: int = 0


def _attack_model(model, suite):
    """Metrics of every requested attack on one model, with fixed attack seeds."""
    out = {"accuracy": accuracy(model, suite.ds.features[suite.test_idx], suite.ds.labels[suite.test_idx])}
    inv_attacks = [a for a in suite.attacks if a in ("setup1", "setup2")]
    if inv_attacks:
        mcfg = mapping_config(suite.seed).replace(epochs=suite.mapping_epochs)
        mapping = train_mapping(model, suite.aux, suite.from_depth, suite.to_depth, mcfg, hidden=suite.mapping_hidden)
        out["mapping_mse"] = mapping.mse
        for setup in inv_attacks:
            icfg = InversionConfig(setup=setup, steps=suite.inversion_steps, seed=suite.seed)
            fn = invert_setup2 if setup == "setup2" else invert_setup1
            prec, rec, f1 = [], [], []
            for i in suite.docs:
                prob = make_problem(model, suite.ds.features[i], mapping=mapping, doc_len=suite.doc_len)
                pr = fn(prob, icfg)
                score = _score(pr.tokens, prob.truth)
                prec.append(score[0])
                rec.append(score[1])
                f1.append(score[2])
            out[f"{setup}_precision"] = float(np.mean(prec))
            out[f"{setup}_recall"] = float(np.mean(rec))
            out[f"{setup}_f1"] = float(np.mean(f1))
    if "mia-loss" in suite.attacks and suite.mia_split is not None:
        feats = build_attack_features(model, suite.ds, suite.mia_split, "loss")
        out["mia-loss_auc"] = run_mia(feats, attack_config(suite.seed)).auc
    return out


def _score(tokens, truth):
    pr = set_precision_recall(tokens, truth)
    return pr.precision, pr.recall, pr.f1


@dataclass
class DefenseReport:
    sigma: float
    teacher: dict
    student: dict
    deltas: dict = field(default_factory=dict)

    def to_record(self):
        return {
            "sigma": self.sigma,
            "teacher_acc": self.teacher["accuracy"],
            "student_acc": self.student["accuracy"],
            "teacher": self.teacher,
            "student": self.student,
            "deltas": self.deltas,
        }


def evaluate_defense(teacher, student, suite, sigma=None, teacher_metrics=None):
    """Rerun the suite's attacks on both models with identical seeds; report student minus teacher.

    ``teacher_metrics`` reuses an earlier teacher evaluation on the same suite.
    """
    if teacher.layer_sizes[0] != student.layer_sizes[0] or teacher.layer_sizes[-1] != student.layer_sizes[-1]:
        raise InvalidArgument("teacher and student must share input and output widths", field="student")
    if teacher.layer_sizes != student.layer_sizes or teacher.embedding_layer != student.embedding_layer:
        raise InvalidArgument("teacher and student architectures differ", field="student")
    t = _attack_model(teacher, suite) if teacher_metrics is None else dict(teacher_metrics)
    s = _attack_model(student, suite)
    deltas = {k: s[k] - t[k] for k in t}
    return DefenseReport(sigma=sigma, teacher=t, student=s, deltas=deltas)

