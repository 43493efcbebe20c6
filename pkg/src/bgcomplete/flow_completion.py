"""Flow-edge extraction and edge-aware completion of masked flow.

Masked flow values are synthesized by harmonic diffusion from the
observed surroundings, with diffusion links severed wherever they cross
the boundary of the edge set (a link survives only between two edge
pixels or two non-edge pixels). Observed pixels are never touched. Only
observed edges participate; edges are not extended across the hole.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionMismatch
from .flow import FlowField, _central_diff


@dataclass
class SolverStats:
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    warned: bool = False
    history: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class CompletedFlow:
    """All-valid flow plus per-pixel provenance (True = synthesized)."""
    flow: FlowField
    synthesized: np.ndarray
    stats: SolverStats = field(default_factory=SolverStats)


def extract_flow_edges(flow: FlowField, threshold: float = 1.0):
    """Mark pixels whose largest per-channel flow-gradient magnitude
    exceeds the threshold. Invalid pixels are never edges."""
    mag = np.zeros(flow.shape, dtype=np.float64)
    for comp in (flow.u, flow.v):
        gx = _central_diff(comp, axis=1)
        gy = _central_diff(comp, axis=0)
        mag = np.maximum(mag, np.hypot(gx, gy))
    return (mag > threshold) & flow.valid


def _shift_bool(mask, dy, dx):
    out = np.zeros_like(mask)
    h, w = mask.shape
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
    out[ys, xs] = mask[ys_src, xs_src]
    return out


def _neighbor_links(edges):
    """Admissible 4-neighbor links: in-bounds and not crossing the edge-set
    boundary. Returns (north, south, west, east) bool planes."""
    h, w = edges.shape
    inb_n = np.zeros((h, w), dtype=bool)
    inb_n[1:, :] = True
    inb_s = np.zeros((h, w), dtype=bool)
    inb_s[:-1, :] = True
    inb_w = np.zeros((h, w), dtype=bool)
    inb_w[:, 1:] = True
    inb_e = np.zeros((h, w), dtype=bool)
    inb_e[:, :-1] = True
    same_n = edges == _shift_bool(edges, 1, 0)
    same_s = edges == _shift_bool(edges, -1, 0)
    same_w = edges == _shift_bool(edges, 0, 1)
    same_e = edges == _shift_bool(edges, 0, -1)
    return (inb_n & same_n, inb_s & same_s, inb_w & same_w, inb_e & same_e)


def onion_fill(values, known, rounds=None):
    """Fill unknown pixels layer by layer with the mean of their known
    8-neighbors (values from the previous round). Returns rounds run."""
    vals = values if isinstance(values, list) else [values]
    known = known.copy()
    n = 0
    while not known.all():
        if rounds is not None and n >= rounds:
            break
        ksum = np.zeros(known.shape, dtype=np.float64)
        vsums = [np.zeros(known.shape, dtype=np.float64) for _ in vals]
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                kn = _shift_bool(known, dy, dx)
                ksum += kn
                for i, v in enumerate(vals):
                    shifted = np.zeros_like(v)
                    h, w = known.shape
                    ys = slice(max(dy, 0), h + min(dy, 0))
                    xs = slice(max(dx, 0), w + min(dx, 0))
                    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
                    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
                    shifted[ys, xs] = v[ys_src, xs_src]
                    vsums[i] += np.where(kn, shifted, 0.0)
        ring = ~known & (ksum > 0)
        if not ring.any():
            break
        for i, v in enumerate(vals):
            v[ring] = vsums[i][ring] / ksum[ring]
        known |= ring
        n += 1
    return n


def complete_flow(flow: FlowField, mask, edges, tol: float = 1e-4,
                  max_iters: int = 2000) -> CompletedFlow:
    """Synthesize flow inside `mask` by edge-masked harmonic diffusion.

    Convergence: max per-sweep update < tol. Hitting max_iters with a
    residual above 10*tol is recorded as a warning in the stats, never
    raised.
    """
    hole = np.asarray(mask, dtype=bool)
    if hole.shape != flow.shape:
        raise DimensionMismatch(f"mask {hole.shape} vs flow {flow.shape}")
    edges = np.asarray(edges, dtype=bool)
    if edges.shape != flow.shape:
        raise DimensionMismatch(f"edges {edges.shape} vs flow {flow.shape}")
    u = flow.u.astype(np.float64).copy()
    v = flow.v.astype(np.float64).copy()
    if not hole.any():
        return CompletedFlow(
            flow=FlowField(u, v, np.ones_like(hole, dtype=bool)),
            synthesized=np.zeros_like(hole))

    adm = _neighbor_links(edges)
    # Pixels whose every admissible link is severed fall back to plain
    # in-bounds adjacency so the fill always covers the hole.
    inb = _neighbor_links(np.zeros_like(edges))
    deg = sum(a.astype(np.int64) for a in adm)
    isolated = hole & (deg == 0)
    adm = tuple(np.where(isolated, i, a) for a, i in zip(adm, inb))

    onion_fill([u, v], ~hole)
    iters, history = _kernels.edge_diffusion_fill(
        u, v, hole, adm[0], adm[1], adm[2], adm[3],
        float(tol), int(max_iters))
    residual = float(history[-1]) if len(history) else 0.0
    converged = residual < tol
    stats = SolverStats(iterations=int(iters), residual=residual,
                        converged=converged,
                        warned=(not converged and residual > 10 * tol),
                        history=np.asarray(history))
    out = FlowField(u, v, np.ones_like(hole, dtype=bool))
    return CompletedFlow(flow=out, synthesized=hole.copy(), stats=stats)
