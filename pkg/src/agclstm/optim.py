"""Adam optimizer and a finite-difference check for tape gradients."""

import numpy as np

from .autodiff import zero_grads


class AdamState:
    """First/second moment buffers for one parameter."""

    __slots__ = ("m", "v")

    def __init__(self, shape):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)


class Adam:
    """Adam with bias correction; epsilon added outside the square root.

    update: theta -= lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        params = list(params)
        if not params:
            raise ValueError("Adam needs at least one parameter")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.state = [AdamState(p.data.shape) for p in params]

    def step(self):
        """Apply one update from current grads; grads are left untouched."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, s in zip(self.params, self.state):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            s.m = b1 * s.m + (1.0 - b1) * g
            s.v = b2 * s.v + (1.0 - b2) * (g * g)
            m_hat = s.m / bc1
            v_hat = s.v / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        zero_grads(self.params)


def finite_difference_check(loss_fn, params, probes, h=1e-5, rng=None):
    """Compare tape gradients against central differences.

    `loss_fn()` evaluates the loss as a Tensor from the current parameter
    values; it must be deterministic. `probes` entries are either ints (that
    many random coordinates per parameter, drawn from `rng`) or explicit
    (param_index, flat_index) pairs. Returns the worst relative error
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    params = list(params)
    l0 = loss_fn()
    l1 = loss_fn()
    if l0.item() != l1.item():
        raise ValueError("loss_fn is not deterministic; gradient check is meaningless")

    zero_grads(params)
    l1.backward()
    analytic = [p.grad.copy() for p in params]

    if isinstance(probes, int):
        if probes <= 0:
            return 0.0
        if rng is None:
            rng = np.random.default_rng(0)
        pairs = []
        for i, p in enumerate(params):
            k = min(probes, p.data.size)
            for j in rng.choice(p.data.size, size=k, replace=False):
                pairs.append((i, int(j)))
    else:
        pairs = list(probes)
    if not pairs:
        return 0.0

    worst = 0.0
    for i, j in pairs:
        flat = params[i].data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + h
        lp = loss_fn().item()
        flat[j] = orig - h
        lm = loss_fn().item()
        flat[j] = orig
        numeric = (lp - lm) / (2.0 * h)
        a = analytic[i].reshape(-1)[j]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
