"""Numba @njit implementations of the hot kernels.

Mirrors numpy_ops.py operation-for-operation; per output element the
floating-point accumulation order is identical, so the two backends
produce bit-identical results.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def warp_bilinear_gray(img, u, v):
    h, w = img.shape
    out = np.empty((h, w), dtype=np.float64)
    valid = np.empty((h, w), dtype=np.bool_)
    for yy in prange(h):
        for xx in range(w):
            x = xx + u[yy, xx]
            y = yy + v[yy, xx]
            valid[yy, xx] = (x >= 0.0 and x <= w - 1.0
                             and y >= 0.0 and y <= h - 1.0)
            x0 = int(np.floor(x))
            y0 = int(np.floor(y))
            fx = x - x0
            fy = y - y0
            x0c = min(max(x0, 0), w - 1)
            y0c = min(max(y0, 0), h - 1)
            x1c = min(max(x0 + 1, 0), w - 1)
            y1c = min(max(y0 + 1, 0), h - 1)
            w00 = (1.0 - fx) * (1.0 - fy)
            w01 = fx * (1.0 - fy)
            w10 = (1.0 - fx) * fy
            w11 = fx * fy
            out[yy, xx] = (w00 * img[y0c, x0c] + w01 * img[y0c, x1c]
                           + w10 * img[y1c, x0c] + w11 * img[y1c, x1c])
    return out, valid


@njit(cache=True, parallel=True)
def warp_bilinear_color(img, u, v):
    h, w, c = img.shape
    out = np.empty((h, w, c), dtype=np.float64)
    valid = np.empty((h, w), dtype=np.bool_)
    for yy in prange(h):
        for xx in range(w):
            x = xx + u[yy, xx]
            y = yy + v[yy, xx]
            valid[yy, xx] = (x >= 0.0 and x <= w - 1.0
                             and y >= 0.0 and y <= h - 1.0)
            x0 = int(np.floor(x))
            y0 = int(np.floor(y))
            fx = x - x0
            fy = y - y0
            x0c = min(max(x0, 0), w - 1)
            y0c = min(max(y0, 0), h - 1)
            x1c = min(max(x0 + 1, 0), w - 1)
            y1c = min(max(y0 + 1, 0), h - 1)
            w00 = (1.0 - fx) * (1.0 - fy)
            w01 = fx * (1.0 - fy)
            w10 = (1.0 - fx) * fy
            w11 = fx * fy
            for ch in range(c):
                out[yy, xx, ch] = (w00 * img[y0c, x0c, ch]
                                   + w01 * img[y0c, x1c, ch]
                                   + w10 * img[y1c, x0c, ch]
                                   + w11 * img[y1c, x1c, ch])
    return out, valid


@njit(cache=True)
def edge_diffusion_fill(u, v, hole, adm_n, adm_s, adm_w, adm_e,
                        tol, max_iters):
    h, w = u.shape
    history = np.zeros(max_iters, dtype=np.float64)
    n = 0
    for it in range(max_iters):
        n = it + 1
        delta = 0.0
        for color in range(2):
            for yy in range(h):
                for xx in range(w):
                    if not hole[yy, xx] or (yy + xx) % 2 != color:
                        continue
                    deg = 0.0
                    su = 0.0
                    sv = 0.0
                    if adm_n[yy, xx]:
                        su += u[yy - 1, xx]
                        sv += v[yy - 1, xx]
                        deg += 1.0
                    if adm_s[yy, xx]:
                        su += u[yy + 1, xx]
                        sv += v[yy + 1, xx]
                        deg += 1.0
                    if adm_w[yy, xx]:
                        su += u[yy, xx - 1]
                        sv += v[yy, xx - 1]
                        deg += 1.0
                    if adm_e[yy, xx]:
                        su += u[yy, xx + 1]
                        sv += v[yy, xx + 1]
                        deg += 1.0
                    if deg == 0.0:
                        continue
                    nu = su / deg
                    nv = sv / deg
                    du = abs(nu - u[yy, xx])
                    dv = abs(nv - v[yy, xx])
                    if du > delta:
                        delta = du
                    if dv > delta:
                        delta = dv
                    u[yy, xx] = nu
                    v[yy, xx] = nv
        history[it] = delta
        if delta < tol:
            break
    return n, history[:n]


@njit(cache=True)
def poisson_sor(f, rhs, region, link_n, link_s, link_w, link_e,
                omega, tol, max_iters):
    h, w = f.shape
    history = np.zeros(max_iters, dtype=np.float64)
    n = 0
    for it in range(max_iters):
        n = it + 1
        for color in range(2):
            for yy in range(h):
                for xx in range(w):
                    if not region[yy, xx] or (yy + xx) % 2 != color:
                        continue
                    deg = 0.0
                    s = 0.0
                    if link_n[yy, xx]:
                        s += f[yy - 1, xx]
                        deg += 1.0
                    if link_s[yy, xx]:
                        s += f[yy + 1, xx]
                        deg += 1.0
                    if link_w[yy, xx]:
                        s += f[yy, xx - 1]
                        deg += 1.0
                    if link_e[yy, xx]:
                        s += f[yy, xx + 1]
                        deg += 1.0
                    if deg == 0.0:
                        continue
                    gs = (s - rhs[yy, xx]) / deg
                    f[yy, xx] = (1.0 - omega) * f[yy, xx] + omega * gs
        residual = 0.0
        for yy in range(h):
            for xx in range(w):
                if not region[yy, xx]:
                    continue
                deg = 0.0
                s = 0.0
                if link_n[yy, xx]:
                    s += f[yy - 1, xx]
                    deg += 1.0
                if link_s[yy, xx]:
                    s += f[yy + 1, xx]
                    deg += 1.0
                if link_w[yy, xx]:
                    s += f[yy, xx - 1]
                    deg += 1.0
                if link_e[yy, xx]:
                    s += f[yy, xx + 1]
                    deg += 1.0
                if deg == 0.0:
                    continue
                r = abs(s - deg * f[yy, xx] - rhs[yy, xx])
                if r > residual:
                    residual = r
        history[it] = residual
        if residual <= tol:
            break
    return n, history[:n]


@njit(cache=True, parallel=True)
def conv2d(x, weight, bias):
    ci, h, w = x.shape
    co = weight.shape[0]
    kh = weight.shape[2]
    kw = weight.shape[3]
    ph, pw = kh // 2, kw // 2
    xpad = np.zeros((ci, h + 2 * ph, w + 2 * pw), dtype=np.float32)
    xpad[:, ph:ph + h, pw:pw + w] = x
    out = np.empty((co, h, w), dtype=np.float32)
    for oc in prange(co):
        for yy in range(h):
            for xx in range(w):
                acc = bias[oc]
                for ky in range(kh):
                    for kx in range(kw):
                        for c in range(ci):
                            acc += (weight[oc, c, ky, kx]
                                    * xpad[c, yy + ky, xx + kx])
                out[oc, yy, xx] = acc
    return out


@njit(cache=True, parallel=True)
def upconv2(x, weight, bias):
    ci, h, w = x.shape
    co = weight.shape[1]
    kh = weight.shape[2]
    kw = weight.shape[3]
    oh, ow = 2 * h, 2 * w
    out = np.empty((co, oh, ow), dtype=np.float32)
    for oc in prange(co):
        for oy in range(oh):
            for ox in range(ow):
                acc = bias[oc]
                for ky in range(kh):
                    ty = oy + 1 - ky
                    if ty % 2 != 0 or ty < 0 or ty >= 2 * h:
                        continue
                    iy = ty // 2
                    for kx in range(kw):
                        tx = ox + 1 - kx
                        if tx % 2 != 0 or tx < 0 or tx >= 2 * w:
                            continue
                        ix = tx // 2
                        for c in range(ci):
                            acc += weight[c, oc, ky, kx] * x[c, iy, ix]
                out[oc, oy, ox] = acc
    return out
