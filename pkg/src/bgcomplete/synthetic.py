"""Deterministic synthetic scenes with exact ground truth.

Each scene provides, per frame: the rendered frame, the foreground
ground-truth mask, and the clean background plate in that frame's
camera coordinates. Textures are smooth and low-contrast (span below
typical differencing thresholds) while keeping enough gradient energy
for flow estimation; the foreground box is far brighter than any
background value, so synthetic detections are unambiguous.
"""

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import PreconditionError
from .imaging import save_frame, save_mask

SCENES = ("static", "pan", "static-ghost")

TEXTURE_LO = 100
TEXTURE_HI = 160
TEXTURE_SIGMA = 8.0
BOX_VALUE = 250


@dataclass
class SyntheticScene:
    kind: str
    frames: np.ndarray   # (N, H, W, 3) uint8
    masks: np.ndarray    # (N, H, W) bool
    plates: np.ndarray   # (N, H, W, 3) uint8
    params: dict


def _texture(rng, height, width):
    """Smooth per-channel texture in [TEXTURE_LO, TEXTURE_HI]."""
    chans = []
    for _ in range(3):
        noise = rng.uniform(0.0, 1.0, (height, width))
        smooth = ndimage.gaussian_filter(noise, TEXTURE_SIGMA,
                                         mode="reflect")
        lo, hi = smooth.min(), smooth.max()
        unit = (smooth - lo) / max(hi - lo, 1e-12)
        chans.append(TEXTURE_LO + unit * (TEXTURE_HI - TEXTURE_LO))
    return np.clip(np.rint(np.stack(chans, axis=-1)), 0,
                   255).astype(np.uint8)


def _pingpong(t, lo, hi, step):
    """Integer triangle wave: bounce between lo and hi with given step."""
    span = hi - lo
    if span <= 0:
        return lo
    phase = (t * step) % (2 * span)
    return lo + (phase if phase <= span else 2 * span - phase)


def generate_scene(kind, length, width=320, height=240, seed=7, speed=1,
                   box_size=20) -> SyntheticScene:
    """Render a deterministic scene.

    static       fixed camera, box bouncing around the view;
    pan          camera translating `speed` px/frame, bouncing box;
    static-ghost fixed camera, box parked at one spot for the first 80%
                 of the frames and absent afterwards.
    """
    if kind not in SCENES:
        raise PreconditionError(f"unknown scene {kind!r}; "
                                f"choose from {SCENES}")
    if length < 2:
        raise PreconditionError("scene length must be >= 2")
    rng = np.random.default_rng(seed)
    pan = speed if kind == "pan" else 0
    world_w = width + pan * (length - 1)
    world = _texture(rng, height, world_w)

    frames = np.empty((length, height, width, 3), dtype=np.uint8)
    masks = np.zeros((length, height, width), dtype=bool)
    plates = np.empty_like(frames)

    margin = max(box_size + 10, 30)
    park_x = width // 3
    park_y = height // 3
    present_until = int(round(length * 0.8))

    for t in range(length):
        x0 = t * pan
        plate = world[:, x0:x0 + width]
        plates[t] = plate
        frame = plate.copy()
        if kind == "static-ghost":
            drawn = t < present_until
            bx, by = park_x, park_y
        else:
            drawn = True
            bx = _pingpong(t, margin, width - margin - box_size, 3)
            by = _pingpong(t, margin, height - margin - box_size, 2)
        if drawn:
            frame[by:by + box_size, bx:bx + box_size] = BOX_VALUE
            masks[t, by:by + box_size, bx:bx + box_size] = True
        frames[t] = frame

    params = {"kind": kind, "length": length, "width": width,
              "height": height, "seed": seed, "speed": speed,
              "box_size": box_size, "texture_range":
              [TEXTURE_LO, TEXTURE_HI], "box_value": BOX_VALUE}
    return SyntheticScene(kind=kind, frames=frames, masks=masks,
                          plates=plates, params=params)


def write_scene(scene: SyntheticScene, out_dir, first_index=1):
    """Write in%06d.png / gt%06d.png / bg%06d.png plus scene.json."""
    os.makedirs(out_dir, exist_ok=True)
    for t in range(scene.frames.shape[0]):
        idx = first_index + t
        save_frame(os.path.join(out_dir, f"in{idx:06d}.png"),
                   scene.frames[t])
        save_mask(os.path.join(out_dir, f"gt{idx:06d}.png"),
                  scene.masks[t])
        save_frame(os.path.join(out_dir, f"bg{idx:06d}.png"),
                   scene.plates[t])
    with open(os.path.join(out_dir, "scene.json"), "w") as fh:
        json.dump(scene.params | {"first_index": first_index}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
