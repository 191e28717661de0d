"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled backend in ``_core.pyx``; used as the
fallback when the extension is unavailable (or when
``FREQPATCH_FORCE_NUMPY=1``). All arrays are float64, channels-last.
"""

import numpy as np


# ---------------------------------------------------------------------------
# conv2d, NHWC layout, weights (KH, KW, Cin, Cout), zero padding
# ---------------------------------------------------------------------------

def _window_view(x, kh, kw, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    # (B, H', W', Cin, KH, KW) -> subsample by stride
    win = win[:, ::stride, ::stride]
    return x, win


def conv2d_forward(x, w, b, stride, pad):
    kh, kw, cin, cout = w.shape
    _, win = _window_view(x, kh, kw, stride, pad)
    n, oh, ow = win.shape[:3]
    # reorder to (..., KH, KW, Cin) to match the weight layout
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, kh * kw * cin)
    y = cols @ w.reshape(kh * kw * cin, cout)
    y += b
    return np.ascontiguousarray(y.reshape(n, oh, ow, cout))


def conv2d_backward_input(gy, w, stride, pad, in_h, in_w):
    n, oh, ow, cout = gy.shape
    kh, kw, cin, _ = w.shape
    gcols = gy.reshape(-1, cout) @ w.reshape(kh * kw * cin, cout).T
    gcols = gcols.reshape(n, oh, ow, kh, kw, cin)
    gx = np.zeros((n, in_h + 2 * pad, in_w + 2 * pad, cin))
    for i in range(kh):
        for j in range(kw):
            gx[:, i:i + stride * oh:stride, j:j + stride * ow:stride] += gcols[:, :, :, i, j]
    if pad:
        gx = gx[:, pad:-pad, pad:-pad]
    return np.ascontiguousarray(gx)


def conv2d_backward_weights(x, gy, stride, pad, kh, kw):
    n, oh, ow, cout = gy.shape
    cin = x.shape[3]
    _, win = _window_view(x, kh, kw, stride, pad)
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, kh * kw * cin)
    gw = cols.T @ gy.reshape(-1, cout)
    gb = gy.sum(axis=(0, 1, 2))
    return np.ascontiguousarray(gw.reshape(kh, kw, cin, cout)), gb


# ---------------------------------------------------------------------------
# bilinear resize (half-pixel centers, edge clamp); coords precomputed by caller
# ---------------------------------------------------------------------------

def resize_forward(x, y0, y1, wy, x0, x1, wx):
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = x[y0][:, x0] * (1.0 - wx) + x[y0][:, x1] * wx
    bot = x[y1][:, x0] * (1.0 - wx) + x[y1][:, x1] * wx
    return top * (1.0 - wy) + bot * wy


def resize_adjoint(gy, y0, y1, wy, x0, x1, wx, in_h, in_w):
    gx = np.zeros((in_h, in_w, gy.shape[2]))
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    r0 = y0[:, None]
    r1 = y1[:, None]
    np.add.at(gx, (r0, x0[None, :]), gy * (1.0 - wy) * (1.0 - wx))
    np.add.at(gx, (r0, x1[None, :]), gy * (1.0 - wy) * wx)
    np.add.at(gx, (r1, x0[None, :]), gy * wy * (1.0 - wx))
    np.add.at(gx, (r1, x1[None, :]), gy * wy * wx)
    return gx


# ---------------------------------------------------------------------------
# total-variation losses; delta sits inside every sqrt, pixels without any
# in-range neighbor term contribute nothing
# ---------------------------------------------------------------------------

def tv_loss_and_grad(x, delta):
    h, w, _ = x.shape
    dh = x[:-1] - x[1:]          # (i,j) - (i+1,j)
    dw = x[:, :-1] - x[:, 1:]    # (i,j) - (i,j+1)
    sq = np.zeros_like(x)
    has = np.zeros(x.shape, dtype=bool)
    if h > 1:
        sq[:-1] += dh * dh
        has[:-1] = True
    if w > 1:
        sq[:, :-1] += dw * dw
        has[:, :-1] = True
    t = np.where(has, np.sqrt(sq + delta), 0.0)
    loss = float(t.sum())
    r = np.where(has, 1.0 / np.maximum(t, np.sqrt(delta)), 0.0)
    g = np.zeros_like(x)
    if h > 1:
        g[:-1] += dh * r[:-1]
        g[1:] -= dh * r[:-1]
    if w > 1:
        g[:, :-1] += dw * r[:, :-1]
        g[:, 1:] -= dw * r[:, :-1]
    return loss, g


_OFFSETS8 = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]


def _shift_slices(n, d):
    # source range for pixels whose neighbor at offset d stays in range
    if d < 0:
        return slice(-d, n), slice(0, n + d)
    if d > 0:
        return slice(0, n - d), slice(d, n)
    return slice(0, n), slice(0, n)


def tv_r_loss_and_grad(x, delta):
    h, w, _ = x.shape
    sq = np.zeros_like(x)
    has = np.zeros(x.shape, dtype=bool)
    for di, dj in _OFFSETS8:
        si, ni = _shift_slices(h, di)
        sj, nj = _shift_slices(w, dj)
        d = x[si, sj] - x[ni, nj]
        sq[si, sj] += d * d
        has[si, sj] = True
    t = np.where(has, np.sqrt(sq + delta), 0.0)
    loss = float(t.sum())
    r = np.where(has, 1.0 / np.maximum(t, np.sqrt(delta)), 0.0)
    g = np.zeros_like(x)
    for di, dj in _OFFSETS8:
        si, ni = _shift_slices(h, di)
        sj, nj = _shift_slices(w, dj)
        d = x[si, sj] - x[ni, nj]
        # own term plus the mirrored appearance in the neighbor's term
        g[si, sj] += d * (r[si, sj] + r[ni, nj])
    return loss, g
