"""First-order optimizers operating on plain numpy arrays."""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument


@dataclass
class AdamState:
    """Moment estimates and hyper-parameters for one parameter array."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise InvalidArgument("beta1 and beta2 must lie in (0, 1)", field="beta")
        if self.epsilon <= 0:
            raise InvalidArgument("epsilon must be positive", field="epsilon")
        if self.learning_rate <= 0:
            raise InvalidArgument("learning rate must be positive", field="learning_rate")
        if self.first_moment.shape != self.second_moment.shape:
            raise InvalidArgument("moment shapes differ", field="state")

    @classmethod
    def zeros(cls, shape, learning_rate=1e-3, **kwargs):
        return cls(np.zeros(shape), np.zeros(shape), learning_rate=learning_rate, **kwargs)

    @classmethod
    def like(cls, params, learning_rate=1e-3, **kwargs):
        params = np.asarray(params, dtype=np.float64)
        return cls(np.zeros_like(params), np.zeros_like(params), learning_rate=learning_rate, **kwargs)


def adam_step(params, grads, state):
    """Apply one bias-corrected Adam update and return the new parameters.

    ``state`` is advanced in place.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise InvalidArgument(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.first_moment.shape}",
            field="grads",
        )
    state.step_count += 1
    t = state.step_count
    state.first_moment *= state.beta1
    state.first_moment += (1.0 - state.beta1) * grads
    state.second_moment *= state.beta2
    state.second_moment += (1.0 - state.beta2) * grads * grads
    m_hat = state.first_moment / (1.0 - state.beta1**t)
    v_hat = state.second_moment / (1.0 - state.beta2**t)
    return params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


@dataclass
class SGDState:
    learning_rate: float = 1e-2
    step_count: int = 0


def sgd_step(params, grads, state):
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise InvalidArgument("params and grads must share one shape", field="grads")
    state.step_count += 1
    return params - state.learning_rate * grads


def make_state(optimizer, params, learning_rate):
    if optimizer == "adam":
        return AdamState.like(params, learning_rate=learning_rate)
    if optimizer == "sgd":
        return SGDState(learning_rate=learning_rate)
    raise InvalidArgument(f"unknown optimizer {optimizer!r}", field="optimizer")


def step(params, grads, state):
    if isinstance(state, AdamState):
        return adam_step(params, grads, state)
    return sgd_step(params, grads, state)
