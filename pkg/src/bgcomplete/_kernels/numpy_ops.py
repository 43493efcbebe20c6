"""Pure-numpy implementations of the hot kernels.

Reference semantics for the numba twins in numba_ops.py: per output
element both backends execute the same floating-point operations in the
same order, so results agree bit-for-bit (checked in tests).
"""

import numpy as np


def _clamped_taps(h, w, x, y):
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    x0c = np.clip(x0, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    return x0c, y0c, x1c, y1c, fx, fy


def warp_bilinear_gray(img, u, v):
    """Backward-warp a (H, W) float image: out(p) = img(p + flow(p)).

    Returns (out, valid); valid is False where the sample point leaves
    the image rectangle. Out-of-range taps are clamped so `out` is
    defined (and deterministic) everywhere.
    """
    h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w]
    x = xs + u
    y = ys + v
    valid = (x >= 0.0) & (x <= w - 1.0) & (y >= 0.0) & (y <= h - 1.0)
    x0, y0, x1, y1, fx, fy = _clamped_taps(h, w, x, y)
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    out = (w00 * img[y0, x0] + w01 * img[y0, x1]
           + w10 * img[y1, x0] + w11 * img[y1, x1])
    return out, valid


def warp_bilinear_color(img, u, v):
    """Backward-warp a (H, W, C) float image; see warp_bilinear_gray."""
    h, w, c = img.shape
    ys, xs = np.mgrid[0:h, 0:w]
    x = xs + u
    y = ys + v
    valid = (x >= 0.0) & (x <= w - 1.0) & (y >= 0.0) & (y <= h - 1.0)
    x0, y0, x1, y1, fx, fy = _clamped_taps(h, w, x, y)
    w00 = ((1.0 - fx) * (1.0 - fy))[..., None]
    w01 = (fx * (1.0 - fy))[..., None]
    w10 = ((1.0 - fx) * fy)[..., None]
    w11 = (fx * fy)[..., None]
    out = (w00 * img[y0, x0] + w01 * img[y0, x1]
           + w10 * img[y1, x0] + w11 * img[y1, x1])
    return out, valid


def edge_diffusion_fill(u, v, hole, adm_n, adm_s, adm_w, adm_e,
                        tol, max_iters):
    """Checkerboard Gauss-Seidel diffusion of (u, v) inside `hole`.

    adm_* mark the admissible neighbor links per pixel (already
    restricted to in-bounds neighbors). Updates u and v in place.
    Returns (sweeps_run, per-sweep max-update history).
    """
    h, w = u.shape
    ys, xs = np.mgrid[0:h, 0:w]
    parity = (ys + xs) % 2
    deg = (adm_n.astype(np.float64) + adm_s + adm_w + adm_e)
    history = np.zeros(max_iters, dtype=np.float64)
    cells = [hole & (parity == c) & (deg > 0) for c in (0, 1)]
    n = 0
    for n in range(1, max_iters + 1):
        delta = 0.0
        for cell in cells:
            for field in (u, v):
                s = np.zeros_like(field)
                np.add(s, np.where(adm_n, np.roll(field, 1, axis=0), 0.0),
                       out=s)
                np.add(s, np.where(adm_s, np.roll(field, -1, axis=0), 0.0),
                       out=s)
                np.add(s, np.where(adm_w, np.roll(field, 1, axis=1), 0.0),
                       out=s)
                np.add(s, np.where(adm_e, np.roll(field, -1, axis=1), 0.0),
                       out=s)
                new = s[cell] / deg[cell]
                d = np.abs(new - field[cell])
                if d.size:
                    delta = max(delta, float(d.max()))
                field[cell] = new
        history[n - 1] = delta
        if delta < tol:
            break
    return n, history[:n]


def poisson_sor(f, rhs, region, link_n, link_s, link_w, link_e,
                omega, tol, max_iters):
    """Checkerboard SOR for the 5-point Poisson stencil inside `region`.

    Solves deg*f[p] - sum_links f[q] = -rhs[p] per region pixel;
    converged when max |sum_links f[q] - deg*f[p] - rhs[p]| <= tol.
    """
    h, w = f.shape
    ys, xs = np.mgrid[0:h, 0:w]
    parity = (ys + xs) % 2
    deg = (link_n.astype(np.float64) + link_s + link_w + link_e)
    cells = [region & (parity == c) & (deg > 0) for c in (0, 1)]
    active = region & (deg > 0)
    history = np.zeros(max_iters, dtype=np.float64)
    n = 0
    for n in range(1, max_iters + 1):
        for cell in cells:
            s = np.zeros_like(f)
            np.add(s, np.where(link_n, np.roll(f, 1, axis=0), 0.0), out=s)
            np.add(s, np.where(link_s, np.roll(f, -1, axis=0), 0.0), out=s)
            np.add(s, np.where(link_w, np.roll(f, 1, axis=1), 0.0), out=s)
            np.add(s, np.where(link_e, np.roll(f, -1, axis=1), 0.0), out=s)
            gs = (s[cell] - rhs[cell]) / deg[cell]
            f[cell] = (1.0 - omega) * f[cell] + omega * gs
        s = np.zeros_like(f)
        np.add(s, np.where(link_n, np.roll(f, 1, axis=0), 0.0), out=s)
        np.add(s, np.where(link_s, np.roll(f, -1, axis=0), 0.0), out=s)
        np.add(s, np.where(link_w, np.roll(f, 1, axis=1), 0.0), out=s)
        np.add(s, np.where(link_e, np.roll(f, -1, axis=1), 0.0), out=s)
        res = s[active] - deg[active] * f[active] - rhs[active]
        residual = float(np.abs(res).max()) if res.size else 0.0
        history[n - 1] = residual
        if residual <= tol:
            break
    return n, history[:n]


def conv2d(x, weight, bias):
    """Same-padded cross-correlation: x (CI,H,W) f32, weight (CO,CI,KH,KW).

    Accumulation order per output element is bias first, then kernel
    row-major, then input channel (matches the numba twin).
    """
    ci, h, w = x.shape
    co, ci2, kh, kw = weight.shape
    ph, pw = kh // 2, kw // 2
    xpad = np.zeros((ci, h + 2 * ph, w + 2 * pw), dtype=np.float32)
    xpad[:, ph:ph + h, pw:pw + w] = x
    out = np.empty((co, h, w), dtype=np.float32)
    out[:] = bias[:, None, None]
    for ky in range(kh):
        for kx in range(kw):
            for c in range(ci):
                win = xpad[c, ky:ky + h, kx:kx + w]
                out += weight[:, c, ky, kx][:, None, None] * win[None, :, :]
    return out


def upconv2(x, weight, bias):
    """Stride-2 transposed 3x3 convolution doubling spatial dims.

    x (CI,H,W) f32, weight (CI,CO,3,3), output (CO,2H,2W). Uses pad 1 /
    output-padding 1 index arithmetic: out[oy,ox] gathers x[iy,ix] with
    oy = 2*iy + ky - 1, ox = 2*ix + kx - 1.
    """
    ci, h, w = x.shape
    ci2, co, kh, kw = weight.shape
    oh, ow = 2 * h, 2 * w
    out = np.empty((co, oh, ow), dtype=np.float32)
    out[:] = bias[:, None, None]
    for ky in range(kh):
        for kx in range(kw):
            for c in range(ci):
                oy = np.arange(oh)
                ty = oy + 1 - ky
                sel_y = (ty % 2 == 0) & (ty >= 0) & (ty < 2 * h)
                ox = np.arange(ow)
                tx = ox + 1 - kx
                sel_x = (tx % 2 == 0) & (tx >= 0) & (tx < 2 * w)
                oy_idx = oy[sel_y]
                ox_idx = ox[sel_x]
                iy = (oy_idx + 1 - ky) // 2
                ix = (ox_idx + 1 - kx) // 2
                patch = x[c][np.ix_(iy, ix)]
                out[:, oy_idx[:, None], ox_idx[None, :]] += (
                    weight[c, :, ky, kx][:, None, None] * patch[None, :, :])
    return out
