"""Network layers with hand-written forward and backward passes.

Every layer follows the same protocol: ``forward`` returns the output
plus an opaque cache holding the intermediates the backward pass needs,
and ``backward(cache, upstream)`` returns ``(grads, d_input)`` where
``grads`` maps the layer's parameter names to arrays of matching shape.
Parameters live in ``self.params`` so models can expose one flat dict
for the optimizers to update in place.

Conventions: batch-major row vectors, so a dense map is ``x @ W + b``
with ``W`` of shape [in, out]. Masks mark valid (True) vs padded (False)
steps; masked steps must neither influence any valid output nor receive
gradient, which each recurrent/attention layer enforces explicitly.
"""

from __future__ import annotations

import numpy as np

from .arrays import as_mask, as_matrix, as_tensor3, sigmoid
from .exceptions import ConfigError, ShapeError


def xavier_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def rnn_cell_forward(
    w_x: np.ndarray,
    w_h: np.ndarray,
    b_h: np.ndarray,
    w_y: np.ndarray,
    b_y: np.ndarray,
    x_seq: np.ndarray,
    h0: np.ndarray | None = None,
    activation: str = "tanh",
) -> tuple[np.ndarray, np.ndarray]:
    """Reference vanilla RNN recursion.

    Hidden states follow h_next = f(x_t @ w_x + h_t @ w_h + b_h) and each
    produced state emits y = f(h @ w_y + b_y). Weights are [in, hidden],
    [hidden, hidden] and [hidden, out]. Returns the T produced hidden
    states and their outputs, given inputs x_seq of shape [T, in].
    """
    if activation == "tanh":
        f = np.tanh
    elif activation == "identity":
        f = lambda v: v
    else:
        raise ConfigError(f"unknown activation {activation!r}")
    x_seq = as_matrix(x_seq, "x_seq")
    w_x = as_matrix(w_x, "w_x")
    w_h = as_matrix(w_h, "w_h")
    if w_h.shape[0] != w_h.shape[1]:
        raise ShapeError(f"w_h must be square, got {w_h.shape}")
    if x_seq.shape[1] != w_x.shape[0] or w_x.shape[1] != w_h.shape[0]:
        raise ShapeError(f"shapes do not chain: x {x_seq.shape}, w_x {w_x.shape}, w_h {w_h.shape}")
    hidden = w_h.shape[0]
    h = np.zeros(hidden) if h0 is None else np.asarray(h0, dtype=np.float64)
    h_seq = np.zeros((x_seq.shape[0], hidden))
    for t in range(x_seq.shape[0]):
        h = f(x_seq[t] @ w_x + h @ w_h + b_h)
        h_seq[t] = h
    y_seq = f(h_seq @ as_matrix(w_y, "w_y") + b_y)
    return h_seq, y_seq


class Dense:
    """Affine map with optional activation, over the last axis."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "identity", rng=None):
        if activation not in ("identity", "relu", "sigmoid"):
            raise ConfigError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.params = {
            "w": xavier_uniform(rng, (in_dim, out_dim), in_dim, out_dim),
            "b": np.zeros(out_dim),
        }

    def forward(self, x: np.ndarray):
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"dense expects width {self.in_dim}, got {x.shape}")
        flat = x.reshape(-1, self.in_dim)
        z = flat @ self.params["w"] + self.params["b"]
        if self.activation == "relu":
            out = np.maximum(z, 0.0)
        elif self.activation == "sigmoid":
            out = sigmoid(z)
        else:
            out = z
        y = out.reshape(x.shape[:-1] + (self.out_dim,))
        return y, (flat, z, out)

    def backward(self, cache, dy: np.ndarray):
        flat, z, out = cache
        dyf = dy.reshape(-1, self.out_dim)
        if self.activation == "relu":
            dz = dyf * (z > 0)
        elif self.activation == "sigmoid":
            dz = dyf * out * (1.0 - out)
        else:
            dz = dyf
        grads = {"w": flat.T @ dz, "b": dz.sum(axis=0)}
        dx = (dz @ self.params["w"].T).reshape(dy.shape[:-1] + (self.in_dim,))
        return grads, dx


class LayerNorm:
    """Per-position normalization across the feature axis."""

    def __init__(self, dim: int, eps: float = 1e-5):
        self.dim = dim
        self.eps = eps
        self.params = {"gamma": np.ones(dim), "beta": np.zeros(dim)}

    def forward(self, x: np.ndarray):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        y = self.params["gamma"] * xhat + self.params["beta"]
        return y, (xhat, inv)

    def backward(self, cache, dy: np.ndarray):
        xhat, inv = cache
        axes = tuple(range(dy.ndim - 1))
        grads = {"gamma": (dy * xhat).sum(axis=axes), "beta": dy.sum(axis=axes)}
        dxhat = dy * self.params["gamma"]
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return grads, dx


def dropout_forward(x: np.ndarray, rate: float, training: bool, rng: np.random.Generator):
    """Inverted dropout: survivors scaled by 1/(1-rate); identity in eval."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    return x * keep * scale, (keep, scale)


def dropout_backward(cache, dy: np.ndarray) -> np.ndarray:
    if cache is None:
        return dy
    keep, scale = cache
    return dy * keep * scale


class LstmLayer:
    """Single LSTM layer over [batch, time, feature] with step masking.

    Gate math is the standard formulation: i, f, o = sigmoid(affine),
    g = tanh(affine), c = f*c_prev + i*g, h = o*tanh(c), with the gates
    fused into one [in, 4H] / [H, 4H] pair of weight matrices (order
    i, f, g, o). The forget-gate bias starts at 1.0. At masked steps the
    carried (h, c) pass through unchanged and the step's output is zero,
    so padded positions can never leak into real ones.
    """

    def __init__(self, in_dim: int, hidden: int, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.hidden = hidden
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        self.params = {
            "wx": xavier_uniform(rng, (in_dim, 4 * hidden), in_dim, 4 * hidden),
            "wh": xavier_uniform(rng, (hidden, 4 * hidden), hidden, 4 * hidden),
            "b": b,
        }

    def forward(self, x: np.ndarray, mask: np.ndarray, h0=None, c0=None):
        x = as_tensor3(x, "lstm input")
        b, t, f = x.shape
        if f != self.in_dim:
            raise ShapeError(f"lstm expects width {self.in_dim}, got {f}")
        mask = as_mask(mask, b, t)
        hh = self.hidden
        h = np.zeros((b, hh)) if h0 is None else np.array(h0, dtype=np.float64)
        c = np.zeros((b, hh)) if c0 is None else np.array(c0, dtype=np.float64)

        h_out = np.zeros((b, t, hh))
        gates_i = np.zeros((b, t, hh))
        gates_f = np.zeros((b, t, hh))
        gates_g = np.zeros((b, t, hh))
        gates_o = np.zeros((b, t, hh))
        h_prevs = np.zeros((b, t, hh))
        c_prevs = np.zeros((b, t, hh))
        tanh_cs = np.zeros((b, t, hh))

        wx, wh, bias = self.params["wx"], self.params["wh"], self.params["b"]
        for step in range(t):
            m = mask[:, step : step + 1].astype(np.float64)
            h_prevs[:, step] = h
            c_prevs[:, step] = c
            z = x[:, step] @ wx + h @ wh + bias
            gi = sigmoid(z[:, :hh])
            gf = sigmoid(z[:, hh : 2 * hh])
            gg = np.tanh(z[:, 2 * hh : 3 * hh])
            go = sigmoid(z[:, 3 * hh :])
            c_new = gf * c + gi * gg
            tc = np.tanh(c_new)
            h_new = go * tc
            gates_i[:, step] = gi
            gates_f[:, step] = gf
            gates_g[:, step] = gg
            gates_o[:, step] = go
            tanh_cs[:, step] = tc
            h = m * h_new + (1.0 - m) * h
            c = m * c_new + (1.0 - m) * c
            h_out[:, step] = m * h_new

        cache = (x, mask, h_prevs, c_prevs, gates_i, gates_f, gates_g, gates_o, tanh_cs)
        return h_out, (h, c), cache

    def backward(self, cache, d_out: np.ndarray):
        x, mask, h_prevs, c_prevs, gi, gf, gg, go, tanh_cs = cache
        b, t, f = x.shape
        hh = self.hidden
        wx, wh = self.params["wx"], self.params["wh"]

        dwx = np.zeros_like(wx)
        dwh = np.zeros_like(wh)
        db = np.zeros(4 * hh)
        dx = np.zeros_like(x)
        dh = np.zeros((b, hh))
        dc = np.zeros((b, hh))

        for step in range(t - 1, -1, -1):
            m = mask[:, step : step + 1].astype(np.float64)
            dh_pass = (1.0 - m) * dh
            dc_pass = (1.0 - m) * dc
            dhnew = m * (dh + d_out[:, step])
            i_, f_, g_, o_, tc = gi[:, step], gf[:, step], gg[:, step], go[:, step], tanh_cs[:, step]
            do = dhnew * tc
            dcnew = dhnew * o_ * (1.0 - tc * tc) + m * dc
            df = dcnew * c_prevs[:, step]
            di = dcnew * g_
            dg = dcnew * i_
            dz = np.concatenate(
                [
                    di * i_ * (1.0 - i_),
                    df * f_ * (1.0 - f_),
                    dg * (1.0 - g_ * g_),
                    do * o_ * (1.0 - o_),
                ],
                axis=1,
            )
            dwx += x[:, step].T @ dz
            dwh += h_prevs[:, step].T @ dz
            db += dz.sum(axis=0)
            dx[:, step] = dz @ wx.T
            dh = dz @ wh.T + dh_pass
            dc = dcnew * f_ + dc_pass

        return {"wx": dwx, "wh": dwh, "b": db}, dx


class MultiHeadAttention:
    """Scaled dot-product self-attention with per-head projections.

    The model width stays the input width: each head projects to its own
    key dimension, the concatenated head outputs project back. Padded key
    positions are excluded from the softmax (score -inf) and padded query
    positions emit zeros. The key projection carries no bias: a constant
    added to every key shifts all scores of a query equally, which the
    softmax cancels, so the parameter could never receive gradient.
    """

    def __init__(self, width: int, heads: int, head_size: int, rng=None):
        if heads < 1:
            raise ConfigError(f"heads must be >= 1, got {heads}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.width = width
        self.heads = heads
        self.head_size = head_size
        shape = (heads, width, head_size)
        self.params = {
            "wq": xavier_uniform(rng, shape, width, head_size),
            "wk": xavier_uniform(rng, shape, width, head_size),
            "wv": xavier_uniform(rng, shape, width, head_size),
            "bq": np.zeros((heads, head_size)),
            "bv": np.zeros((heads, head_size)),
            "wo": xavier_uniform(rng, (heads * head_size, width), heads * head_size, width),
            "bo": np.zeros(width),
        }

    def forward(self, x: np.ndarray, mask: np.ndarray):
        x = as_tensor3(x, "attention input")
        b, t, d = x.shape
        if d != self.width:
            raise ShapeError(f"attention expects width {self.width}, got {d}")
        mask = as_mask(mask, b, t)
        p = self.params
        q = np.einsum("btd,hds->bhts", x, p["wq"]) + p["bq"][None, :, None, :]
        k = np.einsum("btd,hds->bhts", x, p["wk"])
        v = np.einsum("btd,hds->bhts", x, p["wv"]) + p["bv"][None, :, None, :]

        scores = np.einsum("bhis,bhjs->bhij", q, k) / np.sqrt(self.head_size)
        scores = np.where(mask[:, None, None, :], scores, -np.inf)
        shifted = scores - scores.max(axis=-1, keepdims=True)
        weights = np.exp(shifted)
        attn = weights / weights.sum(axis=-1, keepdims=True)

        ctx = np.einsum("bhij,bhjs->bhis", attn, v)
        concat = ctx.transpose(0, 2, 1, 3).reshape(b, t, self.heads * self.head_size)
        out = (concat @ p["wo"] + p["bo"]) * mask[:, :, None]
        return out, (x, mask, q, k, v, attn, concat)

    def backward(self, cache, dy: np.ndarray):
        x, mask, q, k, v, attn, concat = cache
        b, t, d = x.shape
        p = self.params
        dy = dy * mask[:, :, None]

        flat = concat.reshape(b * t, -1)
        dyf = dy.reshape(b * t, d)
        dwo = flat.T @ dyf
        dbo = dyf.sum(axis=0)
        dctx = (dyf @ p["wo"].T).reshape(b, t, self.heads, self.head_size).transpose(0, 2, 1, 3)

        dattn = np.einsum("bhis,bhjs->bhij", dctx, v)
        dv = np.einsum("bhij,bhis->bhjs", attn, dctx)
        ds = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        ds /= np.sqrt(self.head_size)
        dq = np.einsum("bhij,bhjs->bhis", ds, k)
        dk = np.einsum("bhij,bhis->bhjs", ds, q)

        grads = {
            "wq": np.einsum("btd,bhts->hds", x, dq),
            "wk": np.einsum("btd,bhts->hds", x, dk),
            "wv": np.einsum("btd,bhts->hds", x, dv),
            "bq": dq.sum(axis=(0, 2)),
            "bv": dv.sum(axis=(0, 2)),
            "wo": dwo,
            "bo": dbo,
        }
        dx = (
            np.einsum("bhts,hds->btd", dq, p["wq"])
            + np.einsum("bhts,hds->btd", dk, p["wk"])
            + np.einsum("bhts,hds->btd", dv, p["wv"])
        )
        return grads, dx


class EncoderBlock:
    """Self-attention sublayer plus feedforward sublayer, post-norm residuals.

    y1 = norm(x + dropout(attention(x))), y2 = norm(y1 + dropout(ff(y1)))
    with ff = expand-to-ff_dim relu followed by a contraction back to the
    model width. Masked positions are re-zeroed after every sublayer
    (normalizing a zero row would otherwise introduce the norm bias).
    """

    def __init__(self, width: int, heads: int, head_size: int, ff_dim: int, dropout: float, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.width = width
        self.dropout = dropout
        self.mha = MultiHeadAttention(width, heads, head_size, rng)
        self.ln1 = LayerNorm(width)
        self.ff1 = Dense(width, ff_dim, "relu", rng)
        self.ff2 = Dense(ff_dim, width, "identity", rng)
        self.ln2 = LayerNorm(width)

    @property
    def sublayers(self) -> dict[str, object]:
        return {"mha": self.mha, "ln1": self.ln1, "ff1": self.ff1, "ff2": self.ff2, "ln2": self.ln2}

    def forward(self, x: np.ndarray, mask: np.ndarray, training: bool, rng: np.random.Generator):
        m3 = mask[:, :, None]
        a, c_mha = self.mha.forward(x, mask)
        a, c_d1 = dropout_forward(a, self.dropout, training, rng)
        y1, c_ln1 = self.ln1.forward(x + a)
        y1 = y1 * m3
        f1, c_f1 = self.ff1.forward(y1)
        f2, c_f2 = self.ff2.forward(f1)
        f2, c_d2 = dropout_forward(f2, self.dropout, training, rng)
        y2, c_ln2 = self.ln2.forward(y1 + f2)
        y2 = y2 * m3
        return y2, (mask, c_mha, c_d1, c_ln1, c_f1, c_f2, c_d2, c_ln2)

    def backward(self, cache, dy: np.ndarray):
        mask, c_mha, c_d1, c_ln1, c_f1, c_f2, c_d2, c_ln2 = cache
        m3 = mask[:, :, None]
        g_ln2, ds2 = self.ln2.backward(c_ln2, dy * m3)
        df2 = dropout_backward(c_d2, ds2)
        g_ff2, df1 = self.ff2.backward(c_f2, df2)
        g_ff1, dy1_ff = self.ff1.backward(c_f1, df1)
        dy1 = (ds2 + dy1_ff) * m3
        g_ln1, ds1 = self.ln1.backward(c_ln1, dy1)
        da = dropout_backward(c_d1, ds1)
        g_mha, dx_mha = self.mha.backward(c_mha, da)
        dx = ds1 + dx_mha
        grads = {}
        for prefix, layer_grads in (
            ("mha", g_mha),
            ("ln1", g_ln1),
            ("ff1", g_ff1),
            ("ff2", g_ff2),
            ("ln2", g_ln2),
        ):
            for name, grad in layer_grads.items():
                grads[f"{prefix}.{name}"] = grad
        return grads, dx
