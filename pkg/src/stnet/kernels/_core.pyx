# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: conv/pool forward, separable Gaussian, box votes.

Mirrors stnet.kernels._fallback exactly: float32 (c,h,w) tensors, float64
accumulation, reflect padding for the blur (border pixel not duplicated).
"""

from libc.math cimport ceil, exp

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


def conv2d(cnp.ndarray x_in, cnp.ndarray w_in, cnp.ndarray b_in, int stride, int padding):
    cdef const cnp.float32_t[:, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float32)
    cdef const cnp.float32_t[:, :, :, ::1] w = np.ascontiguousarray(w_in, dtype=np.float32)
    cdef const cnp.float32_t[::1] b = np.ascontiguousarray(b_in, dtype=np.float32)
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], wid = x.shape[2]
    cdef Py_ssize_t cout = w.shape[0], k = w.shape[2]
    if w.shape[1] != cin:
        raise ValueError(f"input has {cin} channels, kernel expects {w.shape[1]}")
    cdef Py_ssize_t oh = (h + 2 * padding - k) // stride + 1
    cdef Py_ssize_t ow = (wid + 2 * padding - k) // stride + 1
    acc_arr = np.zeros((cout, oh, ow), dtype=np.float64)
    cdef cnp.float64_t[:, :, ::1] acc = acc_arr
    cdef Py_ssize_t co, ci, oy, ox, ky, kx, iy
    cdef Py_ssize_t oy0, oy1, ox0, ox1, xoff
    cdef double wv
    # per-tap sweeps: hoist the kernel scalar, clamp the output range so the
    # inner loop runs branch-free over contiguous rows
    with nogil:
        for co in range(cout):
            for ci in range(cin):
                for ky in range(k):
                    oy0 = 0
                    while oy0 * stride - padding + ky < 0:
                        oy0 += 1
                    oy1 = oh
                    while oy1 > oy0 and (oy1 - 1) * stride - padding + ky >= h:
                        oy1 -= 1
                    for kx in range(k):
                        wv = w[co, ci, ky, kx]
                        if wv == 0.0:
                            continue
                        ox0 = 0
                        while ox0 * stride - padding + kx < 0:
                            ox0 += 1
                        ox1 = ow
                        while ox1 > ox0 and (ox1 - 1) * stride - padding + kx >= wid:
                            ox1 -= 1
                        xoff = kx - padding
                        if stride == 1:
                            for oy in range(oy0, oy1):
                                iy = oy - padding + ky
                                for ox in range(ox0, ox1):
                                    acc[co, oy, ox] += <double> x[ci, iy, ox + xoff] * wv
                        else:
                            for oy in range(oy0, oy1):
                                iy = oy * stride - padding + ky
                                for ox in range(ox0, ox1):
                                    acc[co, oy, ox] += <double> x[ci, iy, ox * stride + xoff] * wv
    out_arr = np.empty((cout, oh, ow), dtype=np.float32)
    cdef cnp.float32_t[:, :, ::1] out = out_arr
    cdef double bias
    for co in range(cout):
        bias = b[co]
        for oy in range(oh):
            for ox in range(ow):
                out[co, oy, ox] = <float> (acc[co, oy, ox] + bias)
    return out_arr


def maxpool2d(cnp.ndarray x_in, int k, int stride, int padding):
    cdef const cnp.float32_t[:, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float32)
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t oh = (h + 2 * padding - k) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * padding - k) // stride + 1
    out_arr = np.empty((c, oh, ow), dtype=np.float32)
    cdef cnp.float32_t[:, :, ::1] out = out_arr
    cdef Py_ssize_t ci, oy, ox, ky, kx, iy, ix
    cdef float best, v
    cdef bint seen
    for ci in range(c):
        for oy in range(oh):
            for ox in range(ow):
                seen = False
                best = 0.0
                for ky in range(k):
                    iy = oy * stride - padding + ky
                    if iy < 0 or iy >= h:
                        continue
                    for kx in range(k):
                        ix = ox * stride - padding + kx
                        if ix < 0 or ix >= w:
                            continue
                        v = x[ci, iy, ix]
                        if not seen or v > best:
                            best = v
                            seen = True
                out[ci, oy, ox] = best if seen else -np.inf
    return out_arr


def avgpool2d(cnp.ndarray x_in, int k, int stride, int padding):
    cdef const cnp.float32_t[:, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float32)
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t oh = (h + 2 * padding - k) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * padding - k) // stride + 1
    out_arr = np.empty((c, oh, ow), dtype=np.float32)
    cdef cnp.float32_t[:, :, ::1] out = out_arr
    cdef Py_ssize_t ci, oy, ox, ky, kx, iy, ix
    cdef double acc
    cdef double denom = <double> (k * k)
    for ci in range(c):
        for oy in range(oh):
            for ox in range(ow):
                acc = 0.0
                for ky in range(k):
                    iy = oy * stride - padding + ky
                    if iy < 0 or iy >= h:
                        continue
                    for kx in range(k):
                        ix = ox * stride - padding + kx
                        if ix < 0 or ix >= w:
                            continue
                        acc += <double> x[ci, iy, ix]
                out[ci, oy, ox] = <float> (acc / denom)
    return out_arr


def gaussian_kernel(double sigma):
    cdef Py_ssize_t radius = <Py_ssize_t> ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-0.5 * (xs / sigma) ** 2)
    return kern / kern.sum()


cdef inline Py_ssize_t _reflect(Py_ssize_t i, Py_ssize_t n) nogil:
    # mirror about the border pixel without duplicating it: -1 -> 1, n -> n-2
    while i < 0 or i >= n:
        if i < 0:
            i = -i
        if i >= n:
            i = 2 * (n - 1) - i
    return i


def gaussian_blur(cnp.ndarray img_in, double sigma):
    cdef const cnp.float64_t[:, ::1] img = np.ascontiguousarray(img_in, dtype=np.float64)
    cdef const cnp.float64_t[::1] kern = gaussian_kernel(sigma)
    cdef Py_ssize_t radius = (kern.shape[0] - 1) // 2
    cdef Py_ssize_t taps = kern.shape[0]
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    tmp_arr = np.empty((h, w), dtype=np.float64)
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] tmp = tmp_arr
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef cnp.float64_t[::1] buf = np.empty(max(h, w) + 2 * radius, dtype=np.float64)
    cdef Py_ssize_t r, c, t
    cdef double acc
    with nogil:
        # columns first (axis 0): lift each column into a reflected buffer
        for c in range(w):
            for r in range(h):
                buf[radius + r] = img[r, c]
            for t in range(radius):
                buf[radius - 1 - t] = img[_reflect(-1 - t, h) if h > 1 else 0, c]
                buf[radius + h + t] = img[_reflect(h + t, h) if h > 1 else 0, c]
            for r in range(h):
                acc = 0.0
                for t in range(taps):
                    acc += buf[r + t] * kern[t]
                tmp[r, c] = acc
        # rows (axis 1)
        for r in range(h):
            for c in range(w):
                buf[radius + c] = tmp[r, c]
            for t in range(radius):
                buf[radius - 1 - t] = tmp[r, _reflect(-1 - t, w) if w > 1 else 0]
                buf[radius + w + t] = tmp[r, _reflect(w + t, w) if w > 1 else 0]
            for c in range(w):
                acc = 0.0
                for t in range(taps):
                    acc += buf[c + t] * kern[t]
                out[r, c] = acc
    return out_arr


def box_votes(int height, int width, cnp.ndarray anchors_in, int rf):
    cdef const cnp.int64_t[:, ::1] anchors = np.ascontiguousarray(anchors_in, dtype=np.int64)
    counts_arr = np.zeros((height, width), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] counts = counts_arr
    cdef Py_ssize_t i, r, c, r0, c0, r1, c1, rr, cc
    cdef Py_ssize_t half = rf // 2
    for i in range(anchors.shape[0]):
        r = anchors[i, 0]
        c = anchors[i, 1]
        r0 = r - half
        c0 = c - half
        r1 = r0 + rf
        c1 = c0 + rf
        if r0 < 0: r0 = 0
        if c0 < 0: c0 = 0
        if r1 > height: r1 = height
        if c1 > width: c1 = width
        for rr in range(r0, r1):
            for cc in range(c0, c1):
                counts[rr, cc] += 1.0
    return counts_arr
