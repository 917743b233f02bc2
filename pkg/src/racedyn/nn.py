"""From-scratch network primitives with hand-written reverse-mode passes.

Everything operates on plain float64 numpy arrays, batch-first.  Each
forward function returns its output together with a cache; the matching
backward function consumes the cache and an upstream gradient and returns
gradients for inputs and parameters.  No tape: the estimator's computation
graph is a fixed chain, so the composition is spelled out explicitly in
`estimator` and `training`.

Conventions follow the common GRU/linear formulations: gates are ordered
(reset, update, candidate), each gate carries separate input and recurrent
bias vectors, and the candidate's recurrent contribution is gated by reset
before the bias-inclusive sum enters tanh.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    ez = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def mish(x):
    """x * tanh(softplus(x)); smooth, non-monotone, unbounded above."""
    return np.asarray(x, dtype=float) * np.tanh(softplus(x))


def mish_forward(x):
    x = np.asarray(x, dtype=float)
    t = np.tanh(softplus(x))
    return x * t, (x, t)


def mish_backward(g, cache):
    x, t = cache
    return g * (t + x * (1.0 - t * t) * sigmoid(x))


def dense_forward(x, w, b):
    """y = x @ w.T + b with w shaped (out, in)."""
    return x @ w.T + b, (x, w)


def dense_backward(g, cache):
    x, w = cache
    gx = g @ w
    gw = g.T @ x
    gb = g.sum(axis=0)
    return gx, gw, gb


def batchnorm_forward(x, gamma, beta, run_mean, run_var, momentum=0.1,
                      eps=1e-5, train=True):
    """Per-feature normalization over the batch axis.

    Training mode normalizes with biased batch statistics and blends the
    running estimates as (1 - momentum) * old + momentum * new, using the
    unbiased variance for the running estimate when the batch allows it.
    Returns (y, cache, new_run_mean, new_run_var); eval mode returns the
    running stats unchanged.
    """
    x = np.asarray(x, dtype=float)
    if train:
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu) * inv
        n = x.shape[0]
        var_run = var * n / (n - 1) if n > 1 else var
        new_mean = (1.0 - momentum) * run_mean + momentum * mu
        new_var = (1.0 - momentum) * run_var + momentum * var_run
    else:
        inv = 1.0 / np.sqrt(run_var + eps)
        xhat = (x - run_mean) * inv
        new_mean, new_var = run_mean, run_var
    y = gamma * xhat + beta
    cache = (xhat, inv, gamma, train, x.shape[0])
    return y, cache, new_mean, new_var


def batchnorm_backward(g, cache):
    xhat, inv, gamma, train, n = cache
    ggamma = (g * xhat).sum(axis=0)
    gbeta = g.sum(axis=0)
    gxhat = g * gamma
    if train:
        # batch statistics depend on x, so the mean/variance paths feed back
        gx = inv / n * (n * gxhat - gxhat.sum(axis=0)
                        - xhat * (gxhat * xhat).sum(axis=0))
    else:
        gx = gxhat * inv
    return gx, ggamma, gbeta


def gru_cell_forward(x, h, w_ih, w_hh, b_ih, b_hh):
    """One GRU step for a batch; weights are (3H, in) and (3H, H).

    Gate rows are ordered (reset, update, candidate) in all stacked
    parameters.
    """
    hsize = h.shape[-1]
    gi = x @ w_ih.T + b_ih
    gh = h @ w_hh.T + b_hh
    ir, iu, ic = gi[..., :hsize], gi[..., hsize:2 * hsize], gi[..., 2 * hsize:]
    hr, hu, hc = gh[..., :hsize], gh[..., hsize:2 * hsize], gh[..., 2 * hsize:]
    r = sigmoid(ir + hr)
    u = sigmoid(iu + hu)
    c = np.tanh(ic + r * hc)
    h_new = (1.0 - u) * c + u * h
    cache = (x, h, r, u, c, hc, w_ih, w_hh)
    return h_new, cache


def gru_cell_backward(g, cache):
    x, h, r, u, c, hc, w_ih, w_hh = cache
    gu = g * (h - c)
    gc = g * (1.0 - u)
    gh = g * u

    gac = gc * (1.0 - c * c)             # pre-tanh candidate
    gr = gac * hc
    g_hc = gac * r
    gau = gu * u * (1.0 - u)             # pre-sigmoid update
    gar = gr * r * (1.0 - r)             # pre-sigmoid reset

    ggi = np.concatenate([gar, gau, gac], axis=-1)
    ggh = np.concatenate([gar, gau, g_hc], axis=-1)
    gx = ggi @ w_ih
    gh = gh + ggh @ w_hh
    gw_ih = ggi.T @ x
    gw_hh = ggh.T @ h
    gb_ih = ggi.sum(axis=0)
    gb_hh = ggh.sum(axis=0)
    return gx, gh, gw_ih, gw_hh, gb_ih, gb_hh


def gru_sequence_forward(xs, w_ih, w_hh, b_ih, b_hh, h0=None):
    """Run one GRU layer over a (B, T, in) sequence from h0 (default zeros).

    Returns the (B, T, H) hidden sequence and the per-step caches.
    """
    b, t, _ = xs.shape
    hsize = w_hh.shape[1]
    h = np.zeros((b, hsize)) if h0 is None else h0
    hs = np.empty((b, t, hsize))
    caches = []
    for k in range(t):
        h, cache = gru_cell_forward(xs[:, k, :], h, w_ih, w_hh, b_ih, b_hh)
        hs[:, k, :] = h
        caches.append(cache)
    return hs, caches


def gru_sequence_backward(g_hs, caches):
    """Backpropagate through time given gradients on every hidden output.

    g_hs is (B, T, H); zero-fill it when only some steps receive gradient.
    Returns (g_xs, gw_ih, gw_hh, gb_ih, gb_hh).
    """
    t = len(caches)
    gw_ih = gw_hh = gb_ih = gb_hh = None
    gh = np.zeros_like(g_hs[:, 0, :])
    g_xs = np.empty((g_hs.shape[0], t, caches[0][0].shape[-1]))
    for k in reversed(range(t)):
        gx, gh, gwi, gwh, gbi, gbh = gru_cell_backward(g_hs[:, k, :] + gh,
                                                       caches[k])
        g_xs[:, k, :] = gx
        if gw_ih is None:
            gw_ih, gw_hh, gb_ih, gb_hh = gwi, gwh, gbi, gbh
        else:
            gw_ih += gwi
            gw_hh += gwh
            gb_ih += gbi
            gb_hh += gbh
    return g_xs, gw_ih, gw_hh, gb_ih, gb_hh


def uniform_init(rng, shape, fan_in):
    """U(-k, k) with k = 1/sqrt(fan_in); the usual recurrent-net default."""
    k = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-k, k, size=shape)


def gru_param_count(input_size: int, hidden_size: int) -> int:
    """Trainable scalars in one GRU layer: three gates, input and recurrent
    weights, and two bias vectors per gate."""
    return 3 * ((input_size + hidden_size) * hidden_size + 2 * hidden_size)
