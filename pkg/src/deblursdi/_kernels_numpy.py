"""Pure-numpy implementations of the hot numeric kernels.

These are the fallback versions of the loops in `_kernels_numba`; both
backends must agree to float64 rounding noise. Inputs arrive pre-padded
and C-contiguous, shapes are channels-last.
"""

import numpy as np


def conv2d_forward(xp, w, b, stride, out_h, out_w):
    # xp: (Hp, Wp, Cin) already zero-padded, w: (kh, kw, Cin, Cout)
    kh, kw, cin, cout = w.shape
    cols = _im2col(xp, kh, kw, cin, stride, out_h, out_w)
    y = cols @ w.reshape(kh * kw * cin, cout)
    y += b
    return y.reshape(out_h, out_w, cout)


def conv2d_backward_dx(dy, w, stride, in_h, in_w):
    # Gradient w.r.t. the unpadded input; dy: (Ho, Wo, Cout).
    kh, kw, cin, cout = w.shape
    ph, pw = kh // 2, kw // 2
    out_h, out_w = dy.shape[:2]
    dxp = np.zeros((in_h + 2 * ph, in_w + 2 * pw, cin))
    dcols = dy.reshape(out_h * out_w, cout) @ w.reshape(kh * kw * cin, cout).T
    dcols = dcols.reshape(out_h, out_w, kh * kw, cin)
    for u in range(kh):
        for v in range(kw):
            dxp[u:u + stride * (out_h - 1) + 1:stride,
                v:v + stride * (out_w - 1) + 1:stride] += dcols[:, :, u * kw + v]
    return np.ascontiguousarray(dxp[ph:ph + in_h, pw:pw + in_w])


def conv2d_backward_dw(xp, dy, stride, kh, kw):
    out_h, out_w, cout = dy.shape
    cin = xp.shape[2]
    cols = _im2col(xp, kh, kw, cin, stride, out_h, out_w)
    dw = cols.T @ dy.reshape(out_h * out_w, cout)
    db = dy.sum(axis=(0, 1))
    return dw.reshape(kh, kw, cin, cout), db


def _im2col(xp, kh, kw, cin, stride, out_h, out_w):
    cols = np.empty((out_h, out_w, kh * kw, cin))
    for u in range(kh):
        for v in range(kw):
            cols[:, :, u * kw + v] = xp[u:u + stride * (out_h - 1) + 1:stride,
                                        v:v + stride * (out_w - 1) + 1:stride]
    return cols.reshape(out_h * out_w, kh * kw * cin)


def psf_correlate(xp, w):
    # Valid cross-correlation of a padded image stack with one 2D window.
    # xp: (Hp, Wp, C), w: (kh, kw) -> (Hp-kh+1, Wp-kw+1, C)
    kh, kw = w.shape
    out_h = xp.shape[0] - kh + 1
    out_w = xp.shape[1] - kw + 1
    out = np.zeros((out_h, out_w, xp.shape[2]))
    for u in range(kh):
        for v in range(kw):
            out += w[u, v] * xp[u:u + out_h, v:v + out_w]
    return out


def psf_grad_kernel(xp, g):
    # d(correlation)/d(window): full per-offset inner products, summed over channels.
    gh, gw = g.shape[:2]
    kh = xp.shape[0] - gh + 1
    kw = xp.shape[1] - gw + 1
    dk = np.empty((kh, kw))
    for u in range(kh):
        for v in range(kw):
            dk[u, v] = np.sum(xp[u:u + gh, v:v + gw] * g)
    return dk


def bilinear_forward(x, i0, i1, wi, j0, j1, wj):
    # Separable two-tap resample; index/weight vectors are precomputed per axis.
    rows = x[i0] * (1.0 - wi)[:, None, None] + x[i1] * wi[:, None, None]
    return rows[:, j0] * (1.0 - wj)[None, :, None] + rows[:, j1] * wj[None, :, None]


def bilinear_backward(dy, i0, i1, wi, j0, j1, wj, in_h, in_w):
    out_h, out_w, c = dy.shape
    drows = np.zeros((out_h, in_w, c))
    np.add.at(drows, (slice(None), j0), dy * (1.0 - wj)[None, :, None])
    np.add.at(drows, (slice(None), j1), dy * wj[None, :, None])
    dx = np.zeros((in_h, in_w, c))
    np.add.at(dx, i0, drows * (1.0 - wi)[:, None, None])
    np.add.at(dx, i1, drows * wi[:, None, None])
    return dx


def grads_finite(g):
    return bool(np.isfinite(g).all())


def adam_update(p, g, m, v, lr, beta1, beta2, c1, c2, eps):
    # fused in-place update on flat views; op order mirrors the compiled twin
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    denom = np.sqrt(v / c2)
    denom += eps
    upd = m / c1
    upd *= lr
    upd /= denom
    p -= upd
