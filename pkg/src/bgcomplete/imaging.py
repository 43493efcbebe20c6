"""Raster fundamentals: frame I/O, resizing, temporal median, masks.

Conventions used everywhere downstream:
  * color frames are uint8 numpy arrays of shape (H, W, 3), gray frames
    (H, W); binary masks are bool arrays (H, W), stored on disk as
    single-channel PNG with values {0, 255};
  * solvers work on explicit float copies; conversion back to uint8
    uses round-half-up with clamping so results are platform-stable;
  * frame files follow the in%06d.jpg / gt%06d.png naming convention
    unless an explicit pattern is given.
"""

import os
import re
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import (DimensionMismatch, MissingFrame, UnreadableFile,
                     WindowTooLarge, WrongChannelCount)

DEFAULT_FRAME_PATTERN = "in%06d.jpg"
DEFAULT_GT_PATTERN = "gt%06d.png"

BT601_WEIGHTS = (0.299, 0.587, 0.114)


def quantize(values):
    """Float (0..255 scale) -> uint8 with round-half-up clamping."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5),
                   0.0, 255.0).astype(np.uint8)


def frame_to_float(frame):
    """uint8 frame -> normalized float64 copy in [0, 1]."""
    return np.asarray(frame, dtype=np.float64) / 255.0


def float_to_frame(values):
    """Normalized float [0, 1] -> uint8 with round-half-up clamping."""
    return quantize(np.asarray(values, dtype=np.float64) * 255.0)


def _check_frame(frame):
    arr = np.asarray(frame)
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
        raise DimensionMismatch(f"not a frame: shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"degenerate frame: shape {arr.shape}")
    return arr


@dataclass
class FrameSequence:
    """Ordered, dimension-uniform stack of frames from one source."""
    frames: np.ndarray            # (N, H, W) or (N, H, W, 3) uint8
    first_index: int = 0          # numeric index of frames[0] in the source
    frame_rate: float | None = None
    source_id: str = ""

    def __len__(self):
        return self.frames.shape[0]

    @property
    def indices(self):
        return range(self.first_index, self.first_index + len(self))


def load_frame(path):
    """Read one image file as a uint8 frame (gray or RGB)."""
    try:
        with Image.open(path) as im:
            if im.mode in ("RGB", "RGBA"):
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
            else:
                arr = np.asarray(im.convert("L"), dtype=np.uint8)
    except OSError as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    return arr


def save_frame(path, frame):
    arr = np.asarray(frame, dtype=np.uint8)
    Image.fromarray(arr).save(path)


def load_mask(path):
    """Read a binary mask PNG; any value outside {0, 255} is an error."""
    arr = load_frame(path)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    bad = ~np.isin(arr, (0, 255))
    if bad.any():
        values = sorted(np.unique(arr[bad]).tolist())
        raise UnreadableFile(f"{path}: non-binary mask values {values}")
    return arr == 255


def save_mask(path, mask):
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr).save(path)


def _index_of(path, pattern):
    """Extract the numeric index of `path` according to a %0Nd pattern."""
    rx = re.escape(os.path.basename(pattern))
    rx = re.sub(r"%0?(\d*)d", r"(\\d+)", rx.replace("\\%", "%"))
    m = re.fullmatch(rx, os.path.basename(path))
    return int(m.group(1)) if m else None


def list_frame_files(directory, pattern=DEFAULT_FRAME_PATTERN):
    """Map numeric index -> path for files matching the pattern."""
    if not os.path.isdir(directory):
        raise UnreadableFile(f"not a directory: {directory}")
    out = {}
    for name in os.listdir(directory):
        idx = _index_of(name, pattern)
        if idx is not None:
            out[idx] = os.path.join(directory, name)
    return out


def load_sequence(directory, pattern=DEFAULT_FRAME_PATTERN,
                  frame_range=None):
    """Load a contiguous, dimension-uniform frame sequence.

    frame_range is an inclusive (first, last) index interval; omitted
    means every matching file. Gaps raise MissingFrame, zero matches
    UnreadableFile, inconsistent shapes DimensionMismatch.
    """
    files = list_frame_files(directory, pattern)
    if not files:
        raise UnreadableFile(
            f"no files matching {pattern!r} in {directory}")
    if frame_range is None:
        first, last = min(files), max(files)
    else:
        first, last = int(frame_range[0]), int(frame_range[1])
    frames = []
    for idx in range(first, last + 1):
        if idx not in files:
            raise MissingFrame(f"missing index {idx} for {pattern!r} "
                               f"in {directory}")
        arr = load_frame(files[idx])
        if frames and arr.shape != frames[0].shape:
            raise DimensionMismatch(
                f"frame {idx} shape {arr.shape} != {frames[0].shape}")
        frames.append(arr)
    return FrameSequence(frames=np.stack(frames), first_index=first,
                         source_id=os.path.basename(os.path.abspath(directory)))


def resize_bilinear(frame, width, height):
    """Bilinear resample to width x height (half-pixel-center convention).

    Channel count is preserved; uint8 in, uint8 out (round-half-up).
    A same-size target returns a bit-identical copy.
    """
    arr = _check_frame(frame)
    if width < 1 or height < 1:
        raise DimensionMismatch(f"bad target {width}x{height}")
    h, w = arr.shape[:2]
    if (w, h) == (width, height):
        return arr.copy()
    out = resize_bilinear_float(arr.astype(np.float64), width, height)
    return quantize(out)


def resize_bilinear_float(arr, width, height):
    """Float variant of resize_bilinear (no quantization)."""
    h, w = arr.shape[:2]
    xs = (np.arange(width, dtype=np.float64) + 0.5) * (w / width) - 0.5
    ys = (np.arange(height, dtype=np.float64) + 0.5) * (h / height) - 0.5
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    if arr.ndim == 3:
        fx = fx[None, :, None]
        fy = fy[:, None, None]
        top = arr[y0c][:, x0c] * (1 - fx) + arr[y0c][:, x1c] * fx
        bot = arr[y1c][:, x0c] * (1 - fx) + arr[y1c][:, x1c] * fx
    else:
        fx = fx[None, :]
        fy = fy[:, None]
        top = arr[y0c][:, x0c] * (1 - fx) + arr[y0c][:, x1c] * fx
        bot = arr[y1c][:, x0c] * (1 - fx) + arr[y1c][:, x1c] * fx
    return top * (1 - fy) + bot * fy


def temporal_median(seq, window):
    """Per-pixel median over the last `window` frames of the sequence.

    Even windows take the lower of the two central values, so the output
    never contains an intensity absent from the inputs.
    """
    frames = seq.frames if isinstance(seq, FrameSequence) else np.asarray(seq)
    n = frames.shape[0]
    if window < 1 or window > n:
        raise WindowTooLarge(f"window {window} vs {n} frames")
    tail = frames[n - window:]
    k = (window - 1) // 2  # lower median
    part = np.partition(tail, k, axis=0)
    return part[k]


def to_gray(frame):
    """BT.601 luminance of an RGB frame, rounded half-up to uint8."""
    arr = _check_frame(frame)
    if arr.ndim != 3:
        raise WrongChannelCount("to_gray expects a 3-channel frame")
    return quantize(to_gray_float(arr))


def to_gray_float(frame):
    """BT.601 luminance as float64 on the 0..255 scale (no rounding)."""
    arr = np.asarray(frame, dtype=np.float64)
    r, g, b = BT601_WEIGHTS
    return arr[:, :, 0] * r + arr[:, :, 1] * g + arr[:, :, 2] * b


def disk_element(radius):
    """Boolean Euclidean disk: offsets with dx^2 + dy^2 <= radius^2."""
    r = int(radius)
    ys, xs = np.mgrid[-r:r + 1, -r:r + 1]
    return (xs * xs + ys * ys) <= radius * radius


def dilate_mask(mask, radius):
    """Grow the foreground by a Euclidean disk of the given radius."""
    m = np.asarray(mask, dtype=bool)
    if radius < 0:
        raise DimensionMismatch("negative dilation radius")
    if radius == 0 or not m.any():
        return m.copy()
    return ndimage.binary_dilation(m, structure=disk_element(radius))
