"""Whitebox inversion of embeddings back to inputs or bag-of-words token sets.

Three attacks are provided:

* ``invert_direct`` reconstructs a continuous input by matching the tapped
  representation at some depth.
* ``invert_setup1`` relaxes each token position to ``softmax(z / T)`` over
  the vocabulary and matches a representation computed through the model.
* ``invert_setup2`` solves a non-negative, L1-penalised linear fit of token
  weights against the token-embedding matrix and keeps weights above a
  threshold.

The representation the token attacks match is either tapped directly from
the target, or predicted from a deeper tap by a mapping model ``M`` fit on
auxiliary data.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .core.metrics import set_precision_recall
from .core.nn import Network, TrainConfig, mean_squared_error, softmax, train_network
from .core.optim import AdamState, adam_step
from .errors import InvalidArgument, NumericFailure
from .seeding import substream
from .target import embed

SETUPS = ("setup1", "setup2", "direct")


@dataclass
class InversionConfig:
    setup: str = "setup2"
    temperature: float = 0.05
    l1_weight: float = 0.1
    threshold: float = 0.01
    learning_rate: float = 1e-3
    steps: int = 3000
    seed: int = 0

    def __post_init__(self):
        if self.setup not in SETUPS:
            raise InvalidArgument(f"unknown setup {self.setup!r}; expected one of {SETUPS}", field="setup")
        if self.temperature <= 0:
            raise InvalidArgument("temperature must be positive", field="temperature")
        if self.l1_weight < 0:
            raise InvalidArgument("l1_weight must be >= 0", field="l1_weight")
        if self.threshold < 0:
            raise InvalidArgument("threshold must be >= 0", field="threshold")
        if self.learning_rate <= 0:
            raise InvalidArgument("learning_rate must be positive", field="learning_rate")
        if self.steps < 0:
            raise InvalidArgument("steps must be >= 0", field="steps")

    def to_dict(self):
        return asdict(self)


class MappingModel:
    """Regressor from the tap at ``from_depth`` to the tap at ``to_depth``.

    A least-squares affine map plus an MLP fit to its residual; the MLP's
    output layer starts at zero so training never begins worse than the
    affine fit.
    """

    def __init__(self, from_depth, to_depth, coef, intercept, residual, in_mean, in_scale):
        self.from_depth = from_depth
        self.to_depth = to_depth
        self.coef = coef
        self.intercept = intercept
        self.residual = residual
        self.in_mean = in_mean
        self.in_scale = in_scale
        self.mse = float("nan")

    def __call__(self, phi):
        phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
        out = phi @ self.coef + self.intercept
        if self.residual is not None:
            out = out + self.residual((phi - self.in_mean) / self.in_scale)
        return out


def train_mapping(target, aux, from_depth, to_depth, cfg, hidden=(128,)):
    """Fit ``M`` so that ``M(Phi_from(x)) ~ Phi_to(x)`` over the auxiliary rows."""
    for name, d in (("from_depth", from_depth), ("to_depth", to_depth)):
        if not isinstance(d, (int, np.integer)) or not 0 <= d <= target.depth:
            raise InvalidArgument(f"{name} must lie in [0, {target.depth}], got {d}", field=name)
    if to_depth > from_depth:
        raise InvalidArgument("to_depth must not exceed from_depth", field="to_depth")
    x = aux.features if hasattr(aux, "features") else np.asarray(aux, dtype=np.float64)
    phi = embed(target, x, int(from_depth))
    psi = embed(target, x, int(to_depth))

    design = np.hstack([phi, np.ones((len(phi), 1))])
    sol, *_ = np.linalg.lstsq(design, psi, rcond=None)
    coef, intercept = sol[:-1], sol[-1]
    residual = None
    in_mean = phi.mean(axis=0)
    in_scale = phi.std(axis=0)
    in_scale[in_scale < 1e-12] = 1.0
    if hidden and cfg.epochs > 0:
        residual = Network([phi.shape[1], *hidden, psi.shape[1]], "tanh", seed=cfg.seed, stream="mapping-init")
        residual.weights[-1][:] = 0.0
        z = (phi - in_mean) / in_scale
        target_res = psi - (phi @ coef + intercept)
        train_network(residual, z, lambda out, idx: mean_squared_error(out, target_res[idx]), cfg, stream="mapping")
    model = MappingModel(int(from_depth), int(to_depth), coef, intercept, residual, in_mean, in_scale)
    model.mse = mean_squared_error(model(phi), psi)[0] / psi.shape[1]
    return model


@dataclass
class InversionProblem:
    """Target representation plus the map from a (relaxed) input to it.

    ``vocab`` holds one token embedding per row; ``offset`` is added to
    ``z @ vocab``. When ``model`` is set, setup 1 evaluates the model's tap at
    ``depth`` on the relaxed input; otherwise the representation is the
    affine token mixture itself.
    """

    target_output: np.ndarray
    vocab: np.ndarray
    offset: np.ndarray = None
    model: object = None
    depth: int = 1
    truth: frozenset = None
    doc_len: int = None

    def __post_init__(self):
        self.vocab = np.atleast_2d(np.asarray(self.vocab, dtype=np.float64))
        if self.vocab.shape[0] < 1 or not np.all(np.isfinite(self.vocab)):
            raise InvalidArgument("vocabulary matrix must be finite and non-empty", field="vocab")
        if self.offset is None:
            self.offset = np.zeros(self.vocab.shape[1])
        self.target_output = np.asarray(self.target_output, dtype=np.float64).ravel()
        width = self._output_width()
        if self.target_output.shape[0] != width:
            raise InvalidArgument(
                f"target output width {self.target_output.shape[0]} does not match representation width {width}",
                field="target_output",
            )

    @property
    def vocab_size(self):
        return self.vocab.shape[0]

    def _output_width(self):
        if self.model is None:
            return self.vocab.shape[1]
        return self.model.layer_sizes[self.depth]

    def forward(self, xhat):
        """Representation of relaxed inputs ``xhat`` and a pull-back for its gradient."""
        xhat = np.atleast_2d(xhat)
        if self.model is None:
            out = xhat @ self.vocab + self.offset
            return out, lambda g: g @ self.vocab.T
        net = self.model.network
        acts = net.forward(xhat, stop=self.depth)
        return acts[-1], lambda g: net.backward(acts, g)[2]

    def is_linear(self):
        return self.model is None or (self.depth == 1 and self.model.embedding_layer)


def token_embeddings(target):
    """Token embedding matrix (vocab x width) and bias of the first layer."""
    return target.network.weights[0], target.network.biases[0]


def make_problem(target, x_star, mapping=None, depth=None, truth=None, doc_len=None):
    """Build the problem of recovering ``x_star`` from what the attacker observes.

    With ``mapping``, the attacker observes the tap at ``mapping.from_depth``
    and matches ``M`` of it at ``mapping.to_depth``; otherwise the tap at
    ``depth`` is matched directly.
    """
    x_star = np.atleast_2d(np.asarray(x_star, dtype=np.float64))
    vocab, offset = token_embeddings(target)
    if mapping is not None:
        observed = embed(target, x_star, mapping.from_depth)
        out, depth = mapping(observed)[0], mapping.to_depth
    else:
        depth = target.depth if depth is None else depth
        out = embed(target, x_star, depth)[0]
    if depth < 1:
        raise InvalidArgument("token inversion needs a representation at depth >= 1", field="depth")
    if truth is None:
        truth = frozenset(np.flatnonzero(x_star[0] > 0.5).tolist())
    return InversionProblem(out, vocab, offset, target, int(depth), frozenset(truth), doc_len)


@dataclass
class InversionOutcome:
    tokens: frozenset
    residual: float
    steps: int
    z: np.ndarray = field(repr=False, default=None)
    variants: dict = field(default_factory=dict)
    objective_trace: list = field(default_factory=list, repr=False)


def _check_finite(value, step):
    if not np.isfinite(value):
        raise NumericFailure("inversion objective became non-finite", step=step)


def invert_setup1(prob, cfg):
    """Softmax-relaxed token search.

    One row of logits per token position (``doc_len`` positions when known,
    else one). The primary rule keeps each position's argmax token; the
    ``topk`` variant keeps the ``doc_len`` heaviest tokens of the pooled
    relaxation.
    """
    positions = prob.doc_len or 1
    rng = substream(cfg.seed, "setup1-init")
    z = 0.01 * rng.normal(size=(positions, prob.vocab_size))
    state = AdamState.like(z, learning_rate=cfg.learning_rate)
    T = cfg.temperature
    value = np.inf
    for step in range(cfg.steps):
        s = softmax(z / T, axis=1)
        xhat = s.sum(axis=0, keepdims=True)
        out, pull = prob.forward(xhat)
        diff = out[0] - prob.target_output
        value = float(diff @ diff)
        _check_finite(value, step)
        g_x = pull(2.0 * diff[None, :])
        g_z = s * (g_x - (s * g_x).sum(axis=1, keepdims=True)) / T
        z = adam_step(z, g_z, state)
    s = softmax(z / T, axis=1)
    out, _ = prob.forward(s.sum(axis=0, keepdims=True))
    residual = float(((out[0] - prob.target_output) ** 2).sum())
    _check_finite(residual, cfg.steps)
    argmax = frozenset(z.argmax(axis=1).tolist())
    k = prob.doc_len or 1
    pooled = s.sum(axis=0)
    topk = frozenset(np.argsort(-pooled, kind="stable")[:k].tolist())
    return InversionOutcome(argmax, residual, cfg.steps, z, {"argmax": argmax, "topk": topk})


def setup2_objective(prob, z, l1_weight):
    r = z @ prob.vocab + prob.offset - prob.target_output
    return float(r @ r + l1_weight * z.sum())


def invert_setup2(prob, cfg):
    """Non-negative L1-penalised token weights, thresholded at ``cfg.threshold``.

    Adam steps followed by clamping at zero; a step that raises the
    objective is undone and the learning rate halved, so the recorded
    objective never increases.
    """
    if not prob.is_linear():
        raise InvalidArgument(
            "setup2 needs a representation linear in the token weights (depth 1 of an embedding-layer model)",
            field="depth",
        )
    rng = substream(cfg.seed, "setup2-init")
    z = np.maximum(0.01 * rng.normal(size=prob.vocab_size), 0.0)
    state = AdamState.like(z, learning_rate=cfg.learning_rate)
    lam = cfg.l1_weight
    value = setup2_objective(prob, z, lam)
    trace = [value]
    for step in range(cfg.steps):
        r = z @ prob.vocab + prob.offset - prob.target_output
        grad = 2.0 * (prob.vocab @ r) + lam
        cand = np.maximum(adam_step(z, grad, state), 0.0)
        new_value = setup2_objective(prob, cand, lam)
        _check_finite(new_value, step)
        if new_value > value:
            state.learning_rate *= 0.5
        else:
            z, value = cand, new_value
        trace.append(value)
    r = z @ prob.vocab + prob.offset - prob.target_output
    tokens = frozenset(np.flatnonzero(z > cfg.threshold).tolist())
    return InversionOutcome(tokens, float(r @ r), cfg.steps, z, {"threshold": tokens}, trace)


def invert_direct(target, x_star, depth, cfg):
    """Reconstruct a continuous input whose tap at ``depth`` matches ``x_star``'s.

    Gradient descent with a backtracking step from a small seeded random
    start. Returns ``(x_hat, residual)``.
    """
    if not isinstance(depth, (int, np.integer)) or not 0 <= depth <= target.depth:
        raise InvalidArgument(f"depth must lie in [0, {target.depth}], got {depth}", field="depth")
    x_star = np.atleast_2d(np.asarray(x_star, dtype=np.float64))
    goal = embed(target, x_star, depth)
    net = target.network
    rng = substream(cfg.seed, "direct-init")
    x = 0.01 * rng.normal(size=x_star.shape)

    def objective(x):
        acts = net.forward(x, stop=depth)
        diff = acts[-1] - goal
        return float((diff * diff).sum()), acts, diff

    value, acts, diff = objective(x)
    step_size = 1.0
    for step in range(cfg.steps):
        _check_finite(value, step)
        if value == 0.0:
            break
        grad = net.backward(acts, 2.0 * diff)[2] if depth > 0 else 2.0 * diff
        gnorm2 = float((grad * grad).sum())
        if gnorm2 == 0.0:
            break
        # backtracking line search with Armijo condition; grow again after success
        t = step_size
        while True:
            cand = x - t * grad
            cand_value, cand_acts, cand_diff = objective(cand)
            if cand_value <= value - 0.5 * t * gnorm2 or t < 1e-12:
                break
            t *= 0.5
        if cand_value > value:
            break
        x, value, acts, diff = cand, cand_value, cand_acts, cand_diff
        step_size = min(2.0 * t, 1e6)
    return x[0] if x.shape[0] == 1 else x, value


def score_inversion(recovered, truth):
    return set_precision_recall(recovered, truth)


def run_record(outcome, cfg, truth):
    pr = score_inversion(outcome.tokens, truth)
    rec = {"setup": cfg.setup, "steps": cfg.steps, "seed": cfg.seed}
    if cfg.setup == "setup1":
        rec["T"] = cfg.temperature
    if cfg.setup == "setup2":
        rec["lambda"] = cfg.l1_weight
        rec["tau"] = cfg.threshold
    rec.update(precision=pr.precision, recall=pr.recall, residual=outcome.residual)
    return rec


def mapping_config(seed=0):
    return TrainConfig(epochs=150, batch_size=64, learning_rate=1e-3, seed=seed)
