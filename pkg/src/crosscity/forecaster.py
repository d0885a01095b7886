"""Embedding-augmented GRU forecaster with a direct multi-horizon head.

The recurrent update is the classical gated cell except that the blended
state u*h + (1-u)*c is concatenated with the node embedding and passed
through a shared affine map to produce the next hidden state. A single
affine output layer maps the final hidden state to all H horizon steps.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .gin import glorot


class ForecasterParams:
    """All trainable state of the temporal forecaster.

    theta_u/r/c are (hidden, n_features + hidden) as in the gate equations;
    the embedding mix layer consumes [f_v; blended state] and the output
    head maps hidden -> horizon * n_features.
    """

    def __init__(self, n_features=1, hidden_dim=64, embed_dim=64, horizon=12, rng=None):
        rng = rng or np.random.default_rng(0)
        self.n_features = n_features
        self.hidden_dim = hidden_dim
        self.embed_dim = embed_dim
        self.horizon = horizon
        gate_in = n_features + hidden_dim

        def gate():
            return Tensor(glorot(rng, hidden_dim, gate_in), requires_grad=True)

        self.theta_u, self.theta_r, self.theta_c = gate(), gate(), gate()
        self.b_u = Tensor(np.zeros(hidden_dim), requires_grad=True)
        self.b_r = Tensor(np.zeros(hidden_dim), requires_grad=True)
        self.b_c = Tensor(np.zeros(hidden_dim), requires_grad=True)
        self.mix_w = Tensor(glorot(rng, embed_dim + hidden_dim, hidden_dim),
                            requires_grad=True)
        self.mix_b = Tensor(np.zeros(hidden_dim), requires_grad=True)
        self.head_w = Tensor(glorot(rng, hidden_dim, horizon * n_features),
                             requires_grad=True)
        self.head_b = Tensor(np.zeros(horizon * n_features), requires_grad=True)

    def params(self, prefix="forecaster"):
        return {
            f"{prefix}.theta_u": self.theta_u,
            f"{prefix}.theta_r": self.theta_r,
            f"{prefix}.theta_c": self.theta_c,
            f"{prefix}.b_u": self.b_u,
            f"{prefix}.b_r": self.b_r,
            f"{prefix}.b_c": self.b_c,
            f"{prefix}.mix.w": self.mix_w,
            f"{prefix}.mix.b": self.mix_b,
            f"{prefix}.head.w": self.head_w,
            f"{prefix}.head.b": self.head_b,
        }


def gru_step(params, x_t, h_prev, f_v):
    """One recurrent update on a batch: x_t (B, N_f), h_prev (B, hidden),
    f_v (B, D_f); returns (B, hidden)."""
    xh = ad.concat(x_t, h_prev, axis=1)
    u = ad.sigmoid(ad.add_rowvec(ad.matmul(xh, ad.transpose(params.theta_u)), params.b_u))
    r = ad.sigmoid(ad.add_rowvec(ad.matmul(xh, ad.transpose(params.theta_r)), params.b_r))
    xrh = ad.concat(x_t, ad.mul(r, h_prev), axis=1)
    c = ad.tanh(ad.add_rowvec(ad.matmul(xrh, ad.transpose(params.theta_c)), params.b_c))
    blended = ad.add(ad.mul(u, h_prev),
                     ad.mul(ad.sub(Tensor(1.0), u), c))
    fe = ad.concat(f_v, blended, axis=1)
    return ad.add_rowvec(ad.matmul(fe, params.mix_w), params.mix_b)


def forecast(params, inputs, f_v):
    """Roll the cell over a window and apply the output head.

    inputs: (B, H', N_f) Tensor/ndarray; f_v: (B, D_f). Returns a
    (B, H, N_f) prediction Tensor on the normalized scale. h_0 = 0.
    """
    x = inputs if isinstance(inputs, Tensor) else Tensor(inputs)
    if x.data.ndim != 3:
        raise ad.ShapeError(f"forecast: inputs must be (B, H', N_f), got {x.shape}")
    fv = f_v if isinstance(f_v, Tensor) else Tensor(f_v)
    batch, hist, _ = x.shape
    h = Tensor(np.zeros((batch, params.hidden_dim)))
    for t in range(hist):
        h = gru_step(params, _slice_time(x, t), h, fv)
    out = ad.add_rowvec(ad.matmul(h, params.head_w), params.head_b)
    return _reshape_pred(out, batch, params.horizon, params.n_features)


def _slice_time(x, t):
    """Pick time step t from a (B, H', N_f) tensor."""
    def bwd(g):
        buf = np.zeros_like(x.data)
        buf[:, t, :] = g
        x._accum(buf)
    return Tensor._result(x.data[:, t, :].copy(), (x,), bwd)


def _reshape_pred(out, batch, horizon, n_features):
    def bwd(g):
        out._accum(g.reshape(batch, horizon * n_features))
    return Tensor._result(out.data.reshape(batch, horizon, n_features), (out,), bwd)


def source_loss(predictions, targets):
    """Mean absolute error over horizon steps and batch entries (Eq.-style
    L1 average); differentiable with subgradient 0 at exact ties."""
    t = targets if isinstance(targets, Tensor) else Tensor(targets)
    if predictions.shape != t.shape:
        raise ad.ShapeError(
            f"source_loss: shapes {predictions.shape} vs {t.shape}")
    return ad.tmean(ad.absolute(ad.sub(predictions, t)))
