"""Graph convolution over node features: Y = sum_k A_hat_k @ X @ W_k.

One weight matrix per adjacency subset; no bias (callers add per-gate
biases themselves). Implemented as a single fused tape node so each call
costs one backward closure instead of a chain of matmul/add nodes.
"""

import numpy as np

from .autodiff import Parameter, ShapeError, Tensor, custom_op
from .graph import NUM_SUBSETS


class GraphConvWeights:
    """K weight matrices of shape (in_dim, out_dim), one per subset."""

    def __init__(self, in_dim, out_dim, rng, name):
        bound = 1.0 / np.sqrt(in_dim)
        self.w = [
            Parameter(rng.uniform(-bound, bound, size=(in_dim, out_dim)),
                      name=f"{name}.w{k}")
            for k in range(NUM_SUBSETS)
        ]
        self.in_dim = in_dim
        self.out_dim = out_dim

    def params(self):
        return list(self.w)


def graph_conv(stack, x, weights):
    """Apply the stack's normalized adjacencies to node features x (N, C_in).

    Forward caches A_hat_k @ X per subset; backward pushes
    dX += A_hat_k^T @ G @ W_k^T and dW_k += (A_hat_k @ X)^T @ G.
    """
    if not isinstance(x, Tensor):
        x = Tensor(x)
    mats = stack.matrices
    n = mats.shape[1]
    if x.ndim != 2 or x.shape[0] != n:
        raise ShapeError(f"graph_conv: features {x.shape} do not match {n} nodes")
    if x.shape[1] != weights.in_dim:
        raise ShapeError(f"graph_conv: feature width {x.shape[1]} != weight "
                         f"in_dim {weights.in_dim}")

    ax = [mats[k] @ x.data for k in range(NUM_SUBSETS)]
    y = np.zeros((n, weights.out_dim))
    for k in range(NUM_SUBSETS):
        y += ax[k] @ weights.w[k].data

    parents = (x, *weights.w)

    def bwd(g):
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            for k in range(NUM_SUBSETS):
                dx += mats[k].T @ (g @ weights.w[k].data.T)
            x.accumulate_grad(dx)
        for k in range(NUM_SUBSETS):
            weights.w[k].accumulate_grad(ax[k].T @ g)

    return custom_op(y, parents, bwd)
