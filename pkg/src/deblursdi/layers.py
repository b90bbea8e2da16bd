"""Network building blocks with explicit forward/backward passes.

All layers operate on channels-last float64 arrays. Each layer caches what
its backward pass needs during forward, accumulates parameter gradients
into its own grad buffers, and returns the gradient w.r.t. its input. A
layer instance therefore belongs to exactly one optimization run at a
time; calls are cheap to repeat for forward-only evaluation.

Hot inner loops (convolution, bilinear resampling) are delegated to the
active kernel backend.
"""

import numpy as np

from .backend import kernels
from .errors import ValidationError


def fan_in_uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv2d:
    """Same-size 2D convolution (cross-correlation), zero padding, stride 1 or 2."""

    def __init__(self, in_channels, out_channels, ksize, rng, stride=1):
        fan_in = in_channels * ksize * ksize
        self.w = fan_in_uniform(rng, fan_in, (ksize, ksize, in_channels, out_channels))
        self.b = fan_in_uniform(rng, fan_in, (out_channels,))
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self.stride = stride
        self.ksize = ksize
        self._xp = None
        self._in_hw = None

    def forward(self, x):
        h, w, _ = x.shape
        p = self.ksize // 2
        if p:
            xp = np.zeros((h + 2 * p, w + 2 * p, x.shape[2]))
            xp[p:p + h, p:p + w] = x
        else:
            xp = np.ascontiguousarray(x)
        out_h = -(-h // self.stride)
        out_w = -(-w // self.stride)
        self._xp = xp
        self._in_hw = (h, w)
        return kernels().conv2d_forward(xp, self.w, self.b, self.stride, out_h, out_w)

    def backward(self, dy):
        dy = np.ascontiguousarray(dy)
        dw, db = kernels().conv2d_backward_dw(self._xp, dy, self.stride, self.ksize, self.ksize)
        self.dw += dw
        self.db += db
        h, w = self._in_hw
        return kernels().conv2d_backward_dx(dy, self.w, self.stride, h, w)

    def param_items(self):
        return [("w", self.w, self.dw), ("b", self.b, self.db)]


class ChannelNorm:
    """Per-channel spatial normalization with learned scale and shift."""

    EPS = 1e-5

    def __init__(self, channels):
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self._xhat = None
        self._scale = None

    def forward(self, x):
        mean = x.mean(axis=(0, 1))
        var = x.var(axis=(0, 1))
        scale = np.sqrt(var + self.EPS)
        xhat = (x - mean) / scale
        self._xhat = xhat
        self._scale = scale
        return xhat * self.gamma + self.beta

    def backward(self, dy):
        xhat = self._xhat
        self.dgamma += (dy * xhat).sum(axis=(0, 1))
        self.dbeta += dy.sum(axis=(0, 1))
        dxhat = dy * self.gamma
        m1 = dxhat.mean(axis=(0, 1))
        m2 = (dxhat * xhat).mean(axis=(0, 1))
        return (dxhat - m1 - xhat * m2) / self._scale

    def param_items(self):
        return [("gamma", self.gamma, self.dgamma), ("beta", self.beta, self.dbeta)]


class LeakyReLU:
    def __init__(self, slope=0.1):
        self.slope = slope
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, self.slope * x)

    def backward(self, dy):
        return np.where(self._mask, dy, self.slope * dy)

    def param_items(self):
        return []


class Sigmoid:
    def __init__(self):
        self._y = None

    def forward(self, x):
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        self._y = y
        return y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)

    def param_items(self):
        return []


class BilinearResize:
    """Two-tap separable resize to an arbitrary target size (half-pixel centers)."""

    def __init__(self):
        self._plan = None

    @staticmethod
    def _axis_plan(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    def forward(self, x, out_hw):
        in_h, in_w, _ = x.shape
        i0, i1, wi = self._axis_plan(in_h, out_hw[0])
        j0, j1, wj = self._axis_plan(in_w, out_hw[1])
        self._plan = (i0, i1, wi, j0, j1, wj, in_h, in_w)
        return kernels().bilinear_forward(np.ascontiguousarray(x), i0, i1, wi, j0, j1, wj)

    def backward(self, dy):
        i0, i1, wi, j0, j1, wj, in_h, in_w = self._plan
        return kernels().bilinear_backward(
            np.ascontiguousarray(dy), i0, i1, wi, j0, j1, wj, in_h, in_w
        )

    def param_items(self):
        return []


class NonLocalBlock:
    """Residual self-attention over all spatial positions (embedded-Gaussian).

    Embedding width is half the channel count; the output projection starts
    at zero so the block is the identity at initialization.
    """

    def __init__(self, channels, rng):
        if channels < 2:
            raise ValidationError("non-local block needs at least 2 channels")
        emb = channels // 2
        self.wt = fan_in_uniform(rng, channels, (channels, emb))
        self.bt = fan_in_uniform(rng, channels, (emb,))
        self.wp = fan_in_uniform(rng, channels, (channels, emb))
        self.bp = fan_in_uniform(rng, channels, (emb,))
        self.wg = fan_in_uniform(rng, channels, (channels, emb))
        self.bg = fan_in_uniform(rng, channels, (emb,))
        self.wo = np.zeros((emb, channels))
        self.bo = np.zeros(channels)
        for name in ("wt", "bt", "wp", "bp", "wg", "bg", "wo", "bo"):
            setattr(self, "d" + name, np.zeros_like(getattr(self, name)))
        self._cache = None

    def forward(self, x):
        h, w, c = x.shape
        m = x.reshape(h * w, c)
        theta = m @ self.wt + self.bt
        phi = m @ self.wp + self.bp
        g = m @ self.wg + self.bg
        scores = theta @ phi.T
        scores -= scores.max(axis=1, keepdims=True)
        ex = np.exp(scores)
        attn = ex / ex.sum(axis=1, keepdims=True)
        y = attn @ g
        out = m + (y @ self.wo + self.bo)
        self._cache = (m, theta, phi, g, attn, y, (h, w, c))
        return out.reshape(h, w, c)

    def backward(self, dy):
        m, theta, phi, g, attn, y, (h, w, c) = self._cache
        dout = dy.reshape(h * w, c)
        self.dwo += y.T @ dout
        self.dbo += dout.sum(axis=0)
        dyv = dout @ self.wo.T
        dattn = dyv @ g.T
        dg = attn.T @ dyv
        dscores = attn * (dattn - (dattn * attn).sum(axis=1, keepdims=True))
        dtheta = dscores @ phi
        dphi = dscores.T @ theta
        self.dwt += m.T @ dtheta
        self.dbt += dtheta.sum(axis=0)
        self.dwp += m.T @ dphi
        self.dbp += dphi.sum(axis=0)
        self.dwg += m.T @ dg
        self.dbg += dg.sum(axis=0)
        dm = dout + dtheta @ self.wt.T + dphi @ self.wp.T + dg @ self.wg.T
        return dm.reshape(h, w, c)

    def param_items(self):
        return [
            (name, getattr(self, name), getattr(self, "d" + name))
            for name in ("wt", "bt", "wp", "bp", "wg", "bg", "wo", "bo")
        ]


class Linear:
    def __init__(self, in_dim, out_dim, rng):
        self.w = fan_in_uniform(rng, in_dim, (in_dim, out_dim))
        self.b = fan_in_uniform(rng, in_dim, (out_dim,))
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x):
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy):
        self.dw += np.outer(self._x, dy)
        self.db += dy
        return dy @ self.w.T

    def param_items(self):
        return [("w", self.w, self.dw), ("b", self.b, self.db)]


def collect_params(named_layers):
    """Flatten [(prefix, layer)] into an ordered {name: (param, grad)} dict."""
    out = {}
    for prefix, layer in named_layers:
        for name, param, grad in layer.param_items():
            out[f"{prefix}.{name}"] = (param, grad)
    return out
