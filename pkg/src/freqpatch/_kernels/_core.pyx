# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Contracts match numpy_backend exactly; see there for
the reference semantics."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def conv2d_forward(double[:, :, :, ::1] x not None,
                   double[:, :, :, ::1] w not None,
                   double[::1] b not None,
                   Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], wd = x.shape[2], cin = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], cout = w.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (wd + 2 * pad - kw) // stride + 1
    y_arr = np.empty((n, oh, ow, cout))
    cdef double[:, :, :, ::1] y = y_arr
    cdef Py_ssize_t bi, i, j, ki, kj, ci, co, ih, iw
    cdef double xv

    for bi in range(n):
        for i in range(oh):
            for j in range(ow):
                for co in range(cout):
                    y[bi, i, j, co] = b[co]
                for ki in range(kh):
                    ih = i * stride + ki - pad
                    if ih < 0 or ih >= h:
                        continue
                    for kj in range(kw):
                        iw = j * stride + kj - pad
                        if iw < 0 or iw >= wd:
                            continue
                        for ci in range(cin):
                            xv = x[bi, ih, iw, ci]
                            for co in range(cout):
                                y[bi, i, j, co] += xv * w[ki, kj, ci, co]
    return y_arr


def conv2d_backward_input(double[:, :, :, ::1] gy not None,
                          double[:, :, :, ::1] w not None,
                          Py_ssize_t stride, Py_ssize_t pad,
                          Py_ssize_t in_h, Py_ssize_t in_w):
    cdef Py_ssize_t n = gy.shape[0], oh = gy.shape[1], ow = gy.shape[2], cout = gy.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], cin = w.shape[2]
    gx_arr = np.zeros((n, in_h, in_w, cin))
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t bi, i, j, ki, kj, ci, co, ih, iw
    cdef double acc

    for bi in range(n):
        for i in range(oh):
            for j in range(ow):
                for ki in range(kh):
                    ih = i * stride + ki - pad
                    if ih < 0 or ih >= in_h:
                        continue
                    for kj in range(kw):
                        iw = j * stride + kj - pad
                        if iw < 0 or iw >= in_w:
                            continue
                        for ci in range(cin):
                            acc = 0.0
                            for co in range(cout):
                                acc += gy[bi, i, j, co] * w[ki, kj, ci, co]
                            gx[bi, ih, iw, ci] += acc
    return gx_arr


def conv2d_backward_weights(double[:, :, :, ::1] x not None,
                            double[:, :, :, ::1] gy not None,
                            Py_ssize_t stride, Py_ssize_t pad,
                            Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t n = gy.shape[0], oh = gy.shape[1], ow = gy.shape[2], cout = gy.shape[3]
    cdef Py_ssize_t h = x.shape[1], wd = x.shape[2], cin = x.shape[3]
    gw_arr = np.zeros((kh, kw, cin, cout))
    gb_arr = np.zeros(cout)
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t bi, i, j, ki, kj, ci, co, ih, iw
    cdef double xv

    for bi in range(n):
        for i in range(oh):
            for j in range(ow):
                for co in range(cout):
                    gb[co] += gy[bi, i, j, co]
                for ki in range(kh):
                    ih = i * stride + ki - pad
                    if ih < 0 or ih >= h:
                        continue
                    for kj in range(kw):
                        iw = j * stride + kj - pad
                        if iw < 0 or iw >= wd:
                            continue
                        for ci in range(cin):
                            xv = x[bi, ih, iw, ci]
                            for co in range(cout):
                                gw[ki, kj, ci, co] += xv * gy[bi, i, j, co]
    return gw_arr, gb_arr


def resize_forward(double[:, :, ::1] x not None,
                   cnp.int64_t[::1] y0, cnp.int64_t[::1] y1, double[::1] wy,
                   cnp.int64_t[::1] x0, cnp.int64_t[::1] x1, double[::1] wx):
    cdef Py_ssize_t oh = y0.shape[0], ow = x0.shape[0], c = x.shape[2]
    y_arr = np.empty((oh, ow, c))
    cdef double[:, :, ::1] y = y_arr
    cdef Py_ssize_t i, j, k, r0, r1, c0, c1
    cdef double a, bw

    for i in range(oh):
        r0 = y0[i]; r1 = y1[i]; a = wy[i]
        for j in range(ow):
            c0 = x0[j]; c1 = x1[j]; bw = wx[j]
            for k in range(c):
                y[i, j, k] = ((x[r0, c0, k] * (1.0 - bw) + x[r0, c1, k] * bw) * (1.0 - a)
                              + (x[r1, c0, k] * (1.0 - bw) + x[r1, c1, k] * bw) * a)
    return y_arr


def resize_adjoint(double[:, :, ::1] gy not None,
                   cnp.int64_t[::1] y0, cnp.int64_t[::1] y1, double[::1] wy,
                   cnp.int64_t[::1] x0, cnp.int64_t[::1] x1, double[::1] wx,
                   Py_ssize_t in_h, Py_ssize_t in_w):
    cdef Py_ssize_t oh = gy.shape[0], ow = gy.shape[1], c = gy.shape[2]
    gx_arr = np.zeros((in_h, in_w, c))
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t i, j, k, r0, r1, c0, c1
    cdef double a, bw, g

    for i in range(oh):
        r0 = y0[i]; r1 = y1[i]; a = wy[i]
        for j in range(ow):
            c0 = x0[j]; c1 = x1[j]; bw = wx[j]
            for k in range(c):
                g = gy[i, j, k]
                gx[r0, c0, k] += g * (1.0 - a) * (1.0 - bw)
                gx[r0, c1, k] += g * (1.0 - a) * bw
                gx[r1, c0, k] += g * a * (1.0 - bw)
                gx[r1, c1, k] += g * a * bw
    return gx_arr


def tv_loss_and_grad(double[:, :, ::1] x not None, double delta):
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], c = x.shape[2]
    g_arr = np.zeros((h, w, c))
    r_arr = np.zeros((h, w, c))
    cdef double[:, :, ::1] g = g_arr
    cdef double[:, :, ::1] r = r_arr
    cdef Py_ssize_t i, j, k
    cdef double loss = 0.0, sq, dh, dw, t, rv

    for i in range(h):
        for j in range(w):
            for k in range(c):
                if i == h - 1 and j == w - 1:
                    continue
                sq = delta
                if i < h - 1:
                    dh = x[i, j, k] - x[i + 1, j, k]
                    sq += dh * dh
                if j < w - 1:
                    dw = x[i, j, k] - x[i, j + 1, k]
                    sq += dw * dw
                t = sqrt(sq)
                loss += t
                r[i, j, k] = 1.0 / t

    for i in range(h):
        for j in range(w):
            for k in range(c):
                rv = r[i, j, k]
                if rv == 0.0:
                    continue
                if i < h - 1:
                    dh = (x[i, j, k] - x[i + 1, j, k]) * rv
                    g[i, j, k] += dh
                    g[i + 1, j, k] -= dh
                if j < w - 1:
                    dw = (x[i, j, k] - x[i, j + 1, k]) * rv
                    g[i, j, k] += dw
                    g[i, j + 1, k] -= dw
    return loss, g_arr


def tv_r_loss_and_grad(double[:, :, ::1] x not None, double delta):
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], c = x.shape[2]
    g_arr = np.zeros((h, w, c))
    r_arr = np.zeros((h, w, c))
    cdef double[:, :, ::1] g = g_arr
    cdef double[:, :, ::1] r = r_arr
    cdef Py_ssize_t i, j, k, di, dj, ni, nj
    cdef double loss = 0.0, sq, d, t
    cdef bint any_n

    if h == 1 and w == 1:
        return 0.0, g_arr

    for i in range(h):
        for j in range(w):
            for k in range(c):
                sq = delta
                any_n = False
                for di in range(-1, 2):
                    ni = i + di
                    if ni < 0 or ni >= h:
                        continue
                    for dj in range(-1, 2):
                        if di == 0 and dj == 0:
                            continue
                        nj = j + dj
                        if nj < 0 or nj >= w:
                            continue
                        any_n = True
                        d = x[i, j, k] - x[ni, nj, k]
                        sq += d * d
                if any_n:
                    t = sqrt(sq)
                    loss += t
                    r[i, j, k] = 1.0 / t

    for i in range(h):
        for j in range(w):
            for k in range(c):
                for di in range(-1, 2):
                    ni = i + di
                    if ni < 0 or ni >= h:
                        continue
                    for dj in range(-1, 2):
                        if di == 0 and dj == 0:
                            continue
                        nj = j + dj
                        if nj < 0 or nj >= w:
                            continue
                        d = x[i, j, k] - x[ni, nj, k]
                        g[i, j, k] += d * (r[i, j, k] + r[ni, nj, k])
    return loss, g_arr
