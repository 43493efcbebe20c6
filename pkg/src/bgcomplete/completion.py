"""Background completion over a frame window.

For the last frame of the window, every masked pixel is chased through
the completed flow fields (frame by frame, with long strided jumps used
to skip occluded stretches) until an unoccluded color is found. The
candidate colors are fused, the masked region is rebuilt in the
gradient domain, and anything never observed anywhere falls back to
onion-peel inpainting.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import AllPixelsMissing, DimensionMismatch
from .flow import FlowParams, estimate_flow, plan_flow_pairs
from .flow_completion import (CompletedFlow, SolverStats, complete_flow,
                              extract_flow_edges, onion_fill)
from .imaging import frame_to_float, quantize, to_gray_float

FILL_OBSERVED = 0
FILL_FLOW = 1
FILL_POISSON = 2
FILL_DIFFUSION = 3

DIR_FORWARD = 0
DIR_BACKWARD = 1

_W_EPS = 1e-6  # bilinear taps below this weight are ignored in mask tests


@dataclass
class CompletionConfig:
    flow: FlowParams = field(default_factory=FlowParams)
    stride: int = 5
    edge_threshold: float = 1.0
    diffusion_tol: float = 1e-4
    diffusion_max_iters: int = 2000
    poisson_tol: float = 1e-6
    poisson_max_iters: int = 5000
    poisson_omega: float = 1.9
    max_hops: int | None = None  # None: window length


@dataclass
class CandidateSet:
    """Per missing pixel: up to one terminal color per chase direction."""
    ys: np.ndarray                # (K,) row of each missing pixel
    xs: np.ndarray                # (K,)
    colors: np.ndarray            # (K, 2, C); slot 0 forward, 1 backward
    lengths: np.ndarray           # (K, 2) chain length in hops; 0 = empty
    frames: np.ndarray            # (K, 2) source frame index; -1 = empty
    shape: tuple                  # (H, W)


@dataclass
class CompletedFrame:
    frame: np.ndarray             # uint8, no missing pixels
    filled: np.ndarray            # per-pixel FILL_* provenance code
    warnings: list = field(default_factory=list)


class FlowProvider:
    """Lazily estimates + completes flow for pairs of a flow plan."""

    def __init__(self, gray_frames, masks, pairs, config: CompletionConfig):
        self._gray = gray_frames
        self._masks = masks
        self._pairs = set(pairs)
        self._cfg = config
        self._cache = {}
        self.warnings = []

    def has(self, pair):
        return tuple(pair) in self._pairs

    def get(self, pair) -> CompletedFlow:
        pair = tuple(pair)
        if pair not in self._pairs:
            raise KeyError(f"pair {pair} not in the flow plan")
        if pair not in self._cache:
            i, j = pair
            fl = estimate_flow(self._gray[i], self._gray[j], self._cfg.flow)
            fl.valid &= ~self._masks[i]
            edges = extract_flow_edges(fl, self._cfg.edge_threshold)
            done = complete_flow(fl, self._masks[i], edges,
                                 tol=self._cfg.diffusion_tol,
                                 max_iters=self._cfg.diffusion_max_iters)
            if done.stats.warned:
                self.warnings.append(
                    f"flow completion {pair}: residual "
                    f"{done.stats.residual:.2e} after {done.stats.iterations}"
                    " sweeps")
            self._cache[pair] = done
        return self._cache[pair]


class _DictFlows:
    """Adapter exposing a plain {(i, j): CompletedFlow} dict."""

    def __init__(self, flows):
        self._flows = dict(flows)

    def has(self, pair):
        return tuple(pair) in self._flows

    def get(self, pair):
        return self._flows[tuple(pair)]


def _gather_bilinear(img, xs, ys):
    """Sample img (H, W) or (H, W, C) at float positions with clamping."""
    h, w = img.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    w00 = (1 - fx) * (1 - fy)
    w01 = fx * (1 - fy)
    w10 = (1 - fx) * fy
    w11 = fx * fy
    if img.ndim == 3:
        w00, w01, w10, w11 = (w[:, None] for w in (w00, w01, w10, w11))
    return (w00 * img[y0c, x0c] + w01 * img[y0c, x1c]
            + w10 * img[y1c, x0c] + w11 * img[y1c, x1c])


def _gather_masked(mask, xs, ys):
    """True where any bilinear tap with non-negligible weight is masked."""
    h, w = mask.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    hit = np.zeros(xs.shape, dtype=bool)
    for wt, yy, xx in (((1 - fx) * (1 - fy), y0c, x0c),
                       (fx * (1 - fy), y0c, x1c),
                       ((1 - fx) * fy, y1c, x0c),
                       (fx * fy, y1c, x1c)):
        hit |= (wt > _W_EPS) & mask[yy, xx]
    return hit


def _chase(frames_f, masks, flows, target, sign, max_hops, stride,
           xs, ys):
    """Follow flow in one temporal direction until unoccluded pixels are
    reached; returns (colors, lengths, source frame indices)."""
    n, h, w = masks.shape
    c = frames_f.shape[3]
    k = xs.size
    colors = np.zeros((k, c), dtype=np.float64)
    lengths = np.zeros(k, dtype=np.int64)
    src = np.full(k, -1, dtype=np.int64)
    px = xs.astype(np.float64)
    py = ys.astype(np.float64)
    active = np.ones(k, dtype=bool)
    cur = target
    hops = 0
    while active.any() and hops < max_hops:
        nxt = cur + sign
        if nxt < 0 or nxt >= n or not flows.has((cur, nxt)):
            break
        hops += 1
        cf = flows.get((cur, nxt)).flow
        lx = px + _gather_bilinear(cf.u, px, py)
        ly = py + _gather_bilinear(cf.v, px, py)
        inb = (lx >= 0) & (lx <= w - 1) & (ly >= 0) & (ly <= h - 1)
        occluded = np.zeros(k, dtype=bool)
        occluded[inb] = _gather_masked(masks[nxt], lx[inb], ly[inb])
        term = active & inb & ~occluded
        if term.any():
            colors[term] = _gather_bilinear(frames_f[nxt], lx[term], ly[term])
            lengths[term] = hops
            src[term] = nxt
        still = active & inb & occluded
        far = cur + sign * stride
        if still.any() and 0 <= far < n and flows.has((cur, far)):
            sf = flows.get((cur, far)).flow
            sx = px + _gather_bilinear(sf.u, px, py)
            sy = py + _gather_bilinear(sf.v, px, py)
            sinb = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
            socc = np.zeros(k, dtype=bool)
            socc[sinb] = _gather_masked(masks[far], sx[sinb], sy[sinb])
            hit = still & sinb & ~socc
            if hit.any():
                colors[hit] = _gather_bilinear(frames_f[far], sx[hit],
                                               sy[hit])
                lengths[hit] = hops
                src[hit] = far
                still &= ~hit
        px = np.where(still, lx, px)
        py = np.where(still, ly, py)
        active = still
        cur = nxt
    return colors, lengths, src


def chain_candidates(frames, masks, flows, target, max_hops=None,
                     stride=5) -> CandidateSet:
    """Collect candidate colors for every masked pixel of the target
    frame by chasing completed flow forward and backward in time.

    `flows` is a FlowProvider or a {(i, j): CompletedFlow} mapping.
    Adjacent hops advance one frame; when the adjacent landing is still
    occluded, an available (i, i±stride) field is probed as a shortcut
    (counting as a single hop). Empty candidate lists are legal.
    """
    frames = np.asarray(frames)
    masks = np.asarray(masks, dtype=bool)
    if isinstance(flows, dict):
        flows = _DictFlows(flows)
    n, h, w = masks.shape
    if max_hops is None:
        max_hops = n
    frames_f = frame_to_float(frames)
    ys, xs = np.nonzero(masks[target])
    k = ys.size
    c = frames.shape[3]
    colors = np.zeros((k, 2, c), dtype=np.float64)
    lengths = np.zeros((k, 2), dtype=np.int64)
    srcs = np.full((k, 2), -1, dtype=np.int64)
    for slot, sign in ((DIR_FORWARD, +1), (DIR_BACKWARD, -1)):
        col, ln, sr = _chase(frames_f, masks, flows, target, sign,
                             max_hops, stride, xs, ys)
        colors[:, slot] = col
        lengths[:, slot] = ln
        srcs[:, slot] = sr
    return CandidateSet(ys=ys, xs=xs, colors=colors, lengths=lengths,
                        frames=srcs, shape=(h, w))


def fuse_candidates(cands: CandidateSet):
    """Weighted mean of candidate colors, weight 1 / (1 + chain length).

    Returns (partial float frame in [0, 1], residual mask of pixels with
    zero candidates).
    """
    h, w = cands.shape
    c = cands.colors.shape[2]
    partial = np.zeros((h, w, c), dtype=np.float64)
    residual = np.zeros((h, w), dtype=bool)
    have = cands.lengths > 0
    wts = np.where(have, 1.0 / (1.0 + cands.lengths), 0.0)
    wsum = wts.sum(axis=1)
    got = wsum > 0
    mixed = np.zeros((cands.ys.size, c), dtype=np.float64)
    mixed[got] = ((wts[:, :, None] * cands.colors).sum(axis=1)[got]
                  / wsum[got, None])
    partial[cands.ys[got], cands.xs[got]] = mixed[got]
    residual[cands.ys[~got], cands.xs[~got]] = True
    return partial, residual


def _poisson_links(region, known):
    """Stencil links: neighbor in-image and carrying a value."""
    h, w = region.shape
    usable = region | known
    link_n = np.zeros((h, w), dtype=bool)
    link_n[1:, :] = usable[:-1, :]
    link_s = np.zeros((h, w), dtype=bool)
    link_s[:-1, :] = usable[1:, :]
    link_w = np.zeros((h, w), dtype=bool)
    link_w[:, 1:] = usable[:, :-1]
    link_e = np.zeros((h, w), dtype=bool)
    link_e[:, :-1] = usable[:, 1:]
    return link_n, link_s, link_w, link_e


def _poisson_channel(f, region, gx, gy, known, tol, max_iters, omega):
    link_n, link_s, link_w, link_e = _poisson_links(region, known)
    gx_w = np.roll(gx, 1, axis=1)
    gx_w[:, 0] = 0.0
    gy_n = np.roll(gy, 1, axis=0)
    gy_n[0, :] = 0.0
    rhs = (np.where(link_e, gx, 0.0) - np.where(link_w, gx_w, 0.0)
           + np.where(link_s, gy, 0.0) - np.where(link_n, gy_n, 0.0))
    onion_fill(f, known)
    iters, history = _kernels.poisson_sor(
        f, rhs, region, link_n, link_s, link_w, link_e,
        float(omega), float(tol), int(max_iters))
    residual = float(history[-1]) if len(history) else 0.0
    converged = residual <= tol
    return SolverStats(iterations=int(iters), residual=residual,
                       converged=converged,
                       warned=(not converged and residual > 10 * tol),
                       history=np.asarray(history))


def poisson_reconstruct(partial, region, gx, gy, tol=1e-6, max_iters=5000,
                        omega=1.9, known=None):
    """Solve the discrete Poisson equation lap(f) = div(g) inside
    `region` with Dirichlet boundary taken from the surrounding values.

    partial/gx/gy are float arrays (H, W) or (H, W, C) on a common
    scale; pixels outside the region are returned untouched exactly.
    `known` optionally restricts which outside pixels are trusted as
    boundary (default: all of them). Returns (frame, stats list).
    """
    arr = np.asarray(partial, dtype=np.float64)
    region = np.asarray(region, dtype=bool)
    if region.shape != arr.shape[:2]:
        raise DimensionMismatch(f"region {region.shape} vs {arr.shape}")
    if known is None:
        known = ~region
    out = arr.copy()
    stats = []
    if not region.any():
        return out, stats
    planes = 1 if arr.ndim == 2 else arr.shape[2]
    for ch in range(planes):
        f = out if arr.ndim == 2 else out[:, :, ch]
        cgx = gx if arr.ndim == 2 else gx[:, :, ch]
        cgy = gy if arr.ndim == 2 else gy[:, :, ch]
        st = _poisson_channel(f, region, np.asarray(cgx, dtype=np.float64),
                              np.asarray(cgy, dtype=np.float64), known,
                              tol, max_iters, omega)
        stats.append(st)
    out[~region] = arr[~region]
    return out, stats


def diffusion_inpaint(frame, residual, max_rounds=None):
    """Onion-peel fill: per round, every residual pixel touching a known
    pixel takes the mean of its known 8-neighbors. Returns (frame,
    rounds). Raises AllPixelsMissing when nothing is known."""
    arr = np.asarray(frame, dtype=np.float64).copy()
    residual = np.asarray(residual, dtype=bool)
    if residual.shape != arr.shape[:2]:
        raise DimensionMismatch(f"{residual.shape} vs {arr.shape}")
    known = ~residual
    if not known.any():
        raise AllPixelsMissing("no observed pixel to inpaint from")
    if not residual.any():
        return arr, 0
    planes = ([arr] if arr.ndim == 2
              else [arr[:, :, ch] for ch in range(arr.shape[2])])
    rounds = onion_fill(planes, known, rounds=max_rounds)
    return arr, rounds


def _nearest_observed(masks, target):
    """Per pixel: index of the temporally closest frame where the pixel
    is unmasked (-1 when it never is)."""
    n = masks.shape[0]
    unmasked = ~masks
    best = np.full(masks.shape[1:], -1, dtype=np.int64)
    bestd = np.full(masks.shape[1:], n + 1, dtype=np.int64)
    for j in range(n):
        d = abs(j - target)
        better = unmasked[j] & (d < bestd)
        best[better] = j
        bestd[better] = d
    return best


def complete_background(frames, masks, config: CompletionConfig | None = None
                        ) -> CompletedFrame:
    """Complete the last frame of the window behind its mask.

    frames: uint8 (N, H, W, 3); masks: bool (N, H, W) marking the
    regions to synthesize. Unmasked pixels of the last frame pass
    through bit-exactly.
    """
    config = config or CompletionConfig()
    frames = np.asarray(frames, dtype=np.uint8)
    masks = np.asarray(masks, dtype=bool)
    n = frames.shape[0]
    if n < 2:
        raise DimensionMismatch("completion needs a window of >= 2 frames")
    if masks.shape != frames.shape[:3]:
        raise DimensionMismatch(
            f"masks {masks.shape} vs frames {frames.shape[:3]}")
    target = n - 1
    tmask = masks[target]
    h, w = tmask.shape
    filled = np.zeros((h, w), dtype=np.uint8)
    if not tmask.any():
        return CompletedFrame(frame=frames[target].copy(), filled=filled)
    if masks.all():
        raise AllPixelsMissing("every pixel masked in every frame")

    grays = [to_gray_float(frames[i]) for i in range(n)]
    pairs = plan_flow_pairs(n, config.stride)
    provider = FlowProvider(grays, masks, pairs, config)
    max_hops = config.max_hops or n

    cands = chain_candidates(frames, masks, provider, target,
                             max_hops=max_hops, stride=config.stride)
    partial, residual = fuse_candidates(cands)
    fused = tmask & ~residual

    nearest = _nearest_observed(masks, target)
    temporal = residual & (nearest >= 0)
    region = fused | temporal

    composite = frame_to_float(frames[target])
    composite[fused] = partial[fused]
    ty, tx = np.nonzero(temporal)
    if ty.size:
        frames_f = frame_to_float(frames)
        composite[ty, tx] = frames_f[nearest[ty, tx], ty, tx]

    gx = np.zeros_like(composite)
    gx[:, :-1] = composite[:, 1:] - composite[:, :-1]
    gy = np.zeros_like(composite)
    gy[:-1, :] = composite[1:, :] - composite[:-1, :]

    solved, stats = poisson_reconstruct(
        composite, region, gx, gy, tol=config.poisson_tol,
        max_iters=config.poisson_max_iters, omega=config.poisson_omega,
        known=~tmask)
    warnings = list(provider.warnings)
    for st in stats:
        if st.warned:
            warnings.append(f"poisson: residual {st.residual:.2e} after "
                            f"{st.iterations} sweeps")

    leftover = tmask & ~region
    if leftover.any():
        solved, _ = diffusion_inpaint(solved, leftover)

    out = frames[target].copy()
    out[tmask] = quantize(solved[tmask] * 255.0)
    filled[fused] = FILL_FLOW
    filled[temporal] = FILL_POISSON
    filled[leftover] = FILL_DIFFUSION
    return CompletedFrame(frame=out, filled=filled, warnings=warnings)
