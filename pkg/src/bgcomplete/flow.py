"""Dense motion estimation between frame pairs plus warping utilities.

The estimator is a classical coarse-to-fine scheme: at every pyramid
level it repeats warp -> local least-squares (7x7 window sums of the
gradient normal equations, Tikhonov-damped) -> flow update -> small box
smoothing. Intensities are kept on the native 0..255 scale so the
damping weight is expressed in squared gray-levels per pixel.
"""

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import DimensionMismatch, TooSmallForPyramid
from .imaging import quantize, resize_bilinear_float

FLO_MAGIC = 202021.25


@dataclass
class FlowParams:
    levels: int = 4
    iterations: int = 10
    regularization: float = 15.0
    window_radius: int = 3
    smooth_radius: int = 1


@dataclass
class FlowField:
    """Per-pixel displacement (u right, v down) with a validity mask."""
    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    @property
    def shape(self):
        return self.u.shape

    def copy(self):
        return FlowField(self.u.copy(), self.v.copy(), self.valid.copy())


def _as_gray_float(frame):
    arr = np.asarray(frame)
    if arr.ndim != 2:
        raise DimensionMismatch(f"flow expects gray frames, got {arr.shape}")
    return arr.astype(np.float64)


def _central_diff(arr, axis):
    """Central differences with replicate padding at the borders."""
    fwd = np.roll(arr, -1, axis=axis)
    bwd = np.roll(arr, 1, axis=axis)
    sl_first = [slice(None)] * arr.ndim
    sl_last = [slice(None)] * arr.ndim
    sl_first[axis] = 0
    sl_last[axis] = -1
    fwd[tuple(sl_last)] = arr[tuple(sl_last)]
    bwd[tuple(sl_first)] = arr[tuple(sl_first)]
    return (fwd - bwd) / 2.0


def _binomial_blur(arr):
    k = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    out = ndimage.correlate1d(arr, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def _box_sum(arr, radius):
    size = 2 * radius + 1
    return ndimage.uniform_filter(arr, size=size, mode="nearest") * (size * size)


def _box_mean(arr, radius):
    return ndimage.uniform_filter(arr, size=2 * radius + 1, mode="nearest")


def estimate_flow(a, b, params: FlowParams | None = None) -> FlowField:
    """Dense flow from frame a to frame b (gray uint8 or float, 0..255)."""
    params = params or FlowParams()
    fa = _as_gray_float(a)
    fb = _as_gray_float(b)
    if fa.shape != fb.shape:
        raise DimensionMismatch(f"{fa.shape} vs {fb.shape}")
    h, w = fa.shape
    need = (1 << (params.levels - 1)) * 8
    if min(h, w) < need:
        raise TooSmallForPyramid(
            f"min dim {min(h, w)} < {need} for {params.levels} levels")

    pyr_a = [fa]
    pyr_b = [fb]
    for _ in range(params.levels - 1):
        pa, pb = pyr_a[-1], pyr_b[-1]
        nh, nw = pa.shape[0] // 2, pa.shape[1] // 2
        pyr_a.append(resize_bilinear_float(_binomial_blur(pa), nw, nh))
        pyr_b.append(resize_bilinear_float(_binomial_blur(pb), nw, nh))

    lam = max(float(params.regularization), 1e-9)
    u = np.zeros_like(pyr_a[-1])
    v = np.zeros_like(pyr_a[-1])
    for level in range(params.levels - 1, -1, -1):
        la, lb = pyr_a[level], pyr_b[level]
        lh, lw = la.shape
        if u.shape != la.shape:
            u = resize_bilinear_float(u, lw, lh) * 2.0
            v = resize_bilinear_float(v, lw, lh) * 2.0
        for _ in range(params.iterations):
            wb, ok = _kernels.warp_bilinear_gray(lb, u, v)
            it = np.where(ok, wb - la, 0.0)
            avg = (la + wb) / 2.0
            ix = _central_diff(avg, axis=1)
            iy = _central_diff(avg, axis=0)
            r = params.window_radius
            sxx = _box_sum(ix * ix, r)
            sxy = _box_sum(ix * iy, r)
            syy = _box_sum(iy * iy, r)
            sxt = _box_sum(ix * it, r)
            syt = _box_sum(iy * it, r)
            det = (sxx + lam) * (syy + lam) - sxy * sxy
            du = -((syy + lam) * sxt - sxy * syt) / det
            dv = -((sxx + lam) * syt - sxy * sxt) / det
            u = _box_mean(u + du, params.smooth_radius)
            v = _box_mean(v + dv, params.smooth_radius)
    return FlowField(u=u, v=v, valid=np.ones((h, w), dtype=bool))


def plan_flow_pairs(window_length: int, stride: int = 5):
    """All adjacent (i, i+1)/(i+1, i) pairs plus in-range (i, i+stride)
    jumps in both directions."""
    if window_length < 2:
        raise DimensionMismatch("window must hold at least 2 frames")
    if stride < 2:
        raise DimensionMismatch("stride must be >= 2")
    pairs = []
    for i in range(window_length - 1):
        pairs.append((i, i + 1))
        pairs.append((i + 1, i))
    for i in range(window_length - stride):
        pairs.append((i, i + stride))
        pairs.append((i + stride, i))
    return pairs


def warp_frame(frame, flow: FlowField):
    """Backward-warp a frame through a flow field.

    Returns (warped uint8 frame, bool validity mask). A pixel is invalid
    when its sample point leaves the frame or its flow is invalid.
    """
    arr = np.asarray(frame)
    if arr.shape[:2] != flow.shape:
        raise DimensionMismatch(f"{arr.shape[:2]} vs flow {flow.shape}")
    if arr.ndim == 3:
        out, ok = _kernels.warp_bilinear_color(arr.astype(np.float64),
                                               flow.u, flow.v)
    else:
        out, ok = _kernels.warp_bilinear_gray(arr.astype(np.float64),
                                              flow.u, flow.v)
    return quantize(out), ok & flow.valid


def write_flo(path, flow: FlowField):
    """Dump a flow field in the standard .flo binary layout."""
    h, w = flow.shape
    data = np.empty((h, w, 2), dtype=np.float32)
    data[:, :, 0] = flow.u
    data[:, :, 1] = flow.v
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(data.tobytes())


def read_flo(path):
    with open(path, "rb") as fh:
        magic, w, h = struct.unpack("<fii", fh.read(12))
        if abs(magic - FLO_MAGIC) > 1e-3:
            raise DimensionMismatch(f"{path}: bad flo magic {magic}")
        data = np.frombuffer(fh.read(w * h * 8), dtype=np.float32)
    data = data.reshape(h, w, 2)
    return FlowField(u=data[:, :, 0].astype(np.float64),
                     v=data[:, :, 1].astype(np.float64),
                     valid=np.ones((h, w), dtype=bool))
