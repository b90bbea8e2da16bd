"""Numba-jitted hot kernels.

Loop twins of `_kernels_numpy`. Every parallel loop writes disjoint output
elements with a sequential inner reduction, so results are bitwise
reproducible for any thread count. fastmath stays off for the same reason.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def conv2d_forward(xp, w, b, stride, out_h, out_w):
    kh, kw, cin, cout = w.shape
    out = np.empty((out_h, out_w, cout))
    for i in prange(out_h):
        acc = np.empty(cout)
        for j in range(out_w):
            acc[:] = b
            for u in range(kh):
                for v in range(kw):
                    for c in range(cin):
                        xv = xp[i * stride + u, j * stride + v, c]
                        for o in range(cout):
                            acc[o] += xv * w[u, v, c, o]
            out[i, j] = acc
    return out


@njit(cache=True, parallel=True)
def conv2d_backward_dx(dy, w, stride, in_h, in_w):
    kh, kw, cin, cout = w.shape
    ph, pw = kh // 2, kw // 2
    out_h, out_w = dy.shape[0], dy.shape[1]
    dx = np.zeros((in_h, in_w, cin))
    for p in prange(in_h):
        for q in range(in_w):
            for u in range(kh):
                ii = p + ph - u
                if ii % stride != 0:
                    continue
                i = ii // stride
                if i < 0 or i >= out_h:
                    continue
                for v in range(kw):
                    jj = q + pw - v
                    if jj % stride != 0:
                        continue
                    j = jj // stride
                    if j < 0 or j >= out_w:
                        continue
                    for c in range(cin):
                        s = 0.0
                        for o in range(cout):
                            s += dy[i, j, o] * w[u, v, c, o]
                        dx[p, q, c] += s
    return dx


@njit(cache=True, parallel=True)
def conv2d_backward_dw(xp, dy, stride, kh, kw):
    out_h, out_w, cout = dy.shape
    cin = xp.shape[2]
    dw = np.zeros((kh, kw, cin, cout))
    db = np.zeros(cout)
    for t in prange(kh * kw):
        u = t // kw
        v = t % kw
        for i in range(out_h):
            for j in range(out_w):
                for c in range(cin):
                    xv = xp[i * stride + u, j * stride + v, c]
                    for o in range(cout):
                        dw[u, v, c, o] += xv * dy[i, j, o]
    for o in range(cout):
        s = 0.0
        for i in range(out_h):
            for j in range(out_w):
                s += dy[i, j, o]
        db[o] = s
    return dw, db


@njit(cache=True, parallel=True)
def psf_correlate(xp, w):
    kh, kw = w.shape
    out_h = xp.shape[0] - kh + 1
    out_w = xp.shape[1] - kw + 1
    nc = xp.shape[2]
    out = np.zeros((out_h, out_w, nc))
    for i in prange(out_h):
        for j in range(out_w):
            for u in range(kh):
                for v in range(kw):
                    wv = w[u, v]
                    for c in range(nc):
                        out[i, j, c] += wv * xp[i + u, j + v, c]
    return out


@njit(cache=True, parallel=True)
def psf_grad_kernel(xp, g):
    gh, gw, nc = g.shape
    kh = xp.shape[0] - gh + 1
    kw = xp.shape[1] - gw + 1
    dk = np.empty((kh, kw))
    for t in prange(kh * kw):
        u = t // kw
        v = t % kw
        s = 0.0
        for i in range(gh):
            for j in range(gw):
                for c in range(nc):
                    s += xp[u + i, v + j, c] * g[i, j, c]
        dk[u, v] = s
    return dk


@njit(cache=True, parallel=True)
def bilinear_forward(x, i0, i1, wi, j0, j1, wj):
    out_h = i0.shape[0]
    out_w = j0.shape[0]
    nc = x.shape[2]
    out = np.empty((out_h, out_w, nc))
    for i in prange(out_h):
        a, bidx, fi = i0[i], i1[i], wi[i]
        for j in range(out_w):
            ca, cb, fj = j0[j], j1[j], wj[j]
            for c in range(nc):
                top = x[a, ca, c] * (1.0 - fj) + x[a, cb, c] * fj
                bot = x[bidx, ca, c] * (1.0 - fj) + x[bidx, cb, c] * fj
                out[i, j, c] = top * (1.0 - fi) + bot * fi
    return out


@njit(cache=True)
def bilinear_backward(dy, i0, i1, wi, j0, j1, wj, in_h, in_w):
    # Scatter-add transpose; sequential because output rows collide.
    out_h, out_w, nc = dy.shape
    dx = np.zeros((in_h, in_w, nc))
    for i in range(out_h):
        a, bidx, fi = i0[i], i1[i], wi[i]
        for j in range(out_w):
            ca, cb, fj = j0[j], j1[j], wj[j]
            for c in range(nc):
                d = dy[i, j, c]
                dx[a, ca, c] += d * (1.0 - fi) * (1.0 - fj)
                dx[a, cb, c] += d * (1.0 - fi) * fj
                dx[bidx, ca, c] += d * fi * (1.0 - fj)
                dx[bidx, cb, c] += d * fi * fj
    return dx


@njit(cache=True)
def grads_finite(g):
    for i in range(g.size):
        if not np.isfinite(g[i]):
            return False
    return True


@njit(cache=True, parallel=True)
def adam_update(p, g, m, v, lr, beta1, beta2, c1, c2, eps):
    # elementwise, no cross-lane reductions: deterministic for any thread count
    for i in prange(p.size):
        gi = g[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * (gi * gi)
        m[i] = mi
        v[i] = vi
        p[i] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)
