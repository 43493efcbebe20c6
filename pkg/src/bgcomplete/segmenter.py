"""Background/foreground segmentation.

Two interchangeable classifiers:

  * an inference engine for the fixed 12-channel encoder-decoder stack
    (five conv blocks down, four up, skip concatenations, sigmoid head)
    with loadable weights in a simple binary container;
  * a classical differencing fallback (max-channel absolute difference
    plus small-blob removal) so the pipeline runs without any weights.

Inference conventions: batch normalization follows every convolution
and transposed convolution (eps 1e-5 unless overridden), ReLU follows
batch norm on every layer except the final 1-channel convolution, and
spatial dropout is the identity. Convolution accumulates kernel
row-major then input channel, so repeated runs are bit-identical.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import (DimensionMismatch, ShapeMismatch, UnreadableFile,
                     WeightsMissing)

KIND_CONV = "conv_bn"
KIND_POOL = "dropout_pool"
KIND_UPCONV = "upconv_bn"
KIND_SIGMOID = "sigmoid"

BN_EPS = 1e-5

_WEIGHTS_MAGIC = b"BGCW"
_PARAM_SUFFIXES = ("weight", "bias", "bn_scale", "bn_shift",
                   "bn_mean", "bn_var")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    kernel: int
    skip_save: int | None = None    # encoder stage id stored after this layer
    skip_concat: int | None = None  # stage id concatenated before this layer
    skip_channels: int = 0          # channels contributed by the skip
    relu: bool = True


@dataclass
class NetworkSpec:
    layers: list
    input_channels: int = 12
    output_channels: int = 1

    def __post_init__(self):
        validate_network_spec(self)


def default_network_spec() -> NetworkSpec:
    """The fixed layer stack used by the foreground segmenter."""
    def conv(cin, cout, save=None, concat=None, skip_ch=0, relu=True):
        return LayerSpec(KIND_CONV, cin, cout, 3, skip_save=save,
                         skip_concat=concat, skip_channels=skip_ch,
                         relu=relu)

    def pool(ch):
        return LayerSpec(KIND_POOL, ch, ch, 2, relu=False)

    def up(cin, cout):
        return LayerSpec(KIND_UPCONV, cin, cout, 3)

    layers = [
        conv(12, 64),
        conv(64, 64, save=1),
        pool(64),
        conv(64, 128),
        conv(128, 128, save=2),
        pool(128),
        conv(128, 256),
        conv(256, 256),
        conv(256, 256, save=3),
        pool(256),
        conv(256, 512),
        conv(512, 512),
        conv(512, 512, save=4),
        pool(512),
        conv(512, 512),
        conv(512, 512),
        conv(512, 512),
        up(512, 512),
        conv(1024, 512, concat=4, skip_ch=512),
        conv(512, 512),
        up(512, 512),
        conv(768, 256, concat=3, skip_ch=256),
        conv(256, 256),
        up(256, 256),
        conv(384, 128, concat=2, skip_ch=128),
        conv(128, 128),
        up(128, 128),
        conv(192, 64, concat=1, skip_ch=64),
        conv(64, 64),
        conv(64, 1, relu=False),
        LayerSpec(KIND_SIGMOID, 1, 1, 0, relu=False),
    ]
    return NetworkSpec(layers=layers)


def validate_network_spec(spec: NetworkSpec):
    """Channel arithmetic, block counts, and the 16x-downsampling trace."""
    layers = spec.layers
    cur = spec.input_channels
    saved = {}
    pools = ups = 0
    for i, ly in enumerate(layers):
        expect = cur
        if ly.skip_concat is not None:
            if ly.skip_concat not in saved:
                raise ShapeMismatch(f"layer {i}: unknown skip {ly.skip_concat}")
            if saved[ly.skip_concat] != ly.skip_channels:
                raise ShapeMismatch(
                    f"layer {i}: skip carries {saved[ly.skip_concat]} ch, "
                    f"spec says {ly.skip_channels}")
            expect = cur + ly.skip_channels
        if ly.in_channels != expect:
            raise ShapeMismatch(
                f"layer {i}: in_channels {ly.in_channels} != {expect}")
        if ly.kind == KIND_CONV and ly.kernel != 3:
            raise ShapeMismatch(f"layer {i}: conv kernel must be 3")
        if ly.kind == KIND_POOL:
            if ly.kernel != 2 or ly.in_channels != ly.out_channels:
                raise ShapeMismatch(f"layer {i}: bad pool row")
            pools += 1
        if ly.kind == KIND_UPCONV:
            if ly.kernel != 3:
                raise ShapeMismatch(f"layer {i}: up-conv kernel must be 3")
            ups += 1
        cur = ly.out_channels
        if ly.skip_save is not None:
            saved[ly.skip_save] = ly.out_channels
    if pools != 4 or ups != 4:
        raise ShapeMismatch(f"expected 4 pools / 4 up-convs, "
                            f"got {pools} / {ups}")
    if cur != spec.output_channels:
        raise ShapeMismatch(f"stack ends at {cur} channels")
    if layers[-1].kind != KIND_SIGMOID:
        raise ShapeMismatch("stack must end with sigmoid")


# --- primitive tensor ops (Tensor3 = float32 array, channel-major) ---


def conv2d(x, weight, bias):
    """Same-padded 3x3 (or generic odd) cross-correlation."""
    x = np.ascontiguousarray(x, dtype=np.float32)
    weight = np.ascontiguousarray(weight, dtype=np.float32)
    bias = np.ascontiguousarray(bias, dtype=np.float32)
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"conv2d: x {x.shape} vs weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeMismatch(f"conv2d: bias {bias.shape}")
    return _kernels.conv2d(x, weight, bias)


def batchnorm_infer(x, scale, shift, running_mean, running_var, eps=BN_EPS):
    """Per-channel (x - mean) / sqrt(var + eps) * scale + shift."""
    x = np.asarray(x, dtype=np.float32)
    params = [np.asarray(p, dtype=np.float32).reshape(-1)
              for p in (scale, shift, running_mean, running_var)]
    for p in params:
        if p.shape != (x.shape[0],):
            raise ShapeMismatch(f"batchnorm: param {p.shape} vs "
                                f"{x.shape[0]} channels")
    scale, shift, mean, var = params
    inv = (scale / np.sqrt(var + np.float32(eps)))[:, None, None]
    return (x - mean[:, None, None]) * inv + shift[:, None, None]


def maxpool2(x):
    """2x2 max pooling with stride 2."""
    x = np.asarray(x, dtype=np.float32)
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionMismatch(f"maxpool2 needs even dims, got {h}x{w}")
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def upconv2(x, weight, bias):
    """Stride-2 transposed 3x3 convolution; spatial dims exactly double."""
    x = np.ascontiguousarray(x, dtype=np.float32)
    weight = np.ascontiguousarray(weight, dtype=np.float32)
    bias = np.ascontiguousarray(bias, dtype=np.float32)
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"upconv2: x {x.shape} vs weight {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise ShapeMismatch(f"upconv2: bias {bias.shape}")
    return _kernels.upconv2(x, weight, bias)


def relu(x):
    return np.maximum(x, np.float32(0.0))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# --- weights ---


@dataclass
class WeightStore:
    """Named float32 parameter blocks keyed '<layer ordinal>.<param>'."""
    blocks: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.blocks[name]


def parameter_shapes(spec: NetworkSpec):
    """Expected block name -> shape for every parameterized layer."""
    shapes = {}
    for i, ly in enumerate(spec.layers):
        if ly.kind == KIND_CONV:
            shapes[f"{i}.weight"] = (ly.out_channels, ly.in_channels, 3, 3)
        elif ly.kind == KIND_UPCONV:
            shapes[f"{i}.weight"] = (ly.in_channels, ly.out_channels, 3, 3)
        else:
            continue
        n = ly.out_channels
        shapes[f"{i}.bias"] = (n,)
        shapes[f"{i}.bn_scale"] = (n,)
        shapes[f"{i}.bn_shift"] = (n,)
        shapes[f"{i}.bn_mean"] = (n,)
        shapes[f"{i}.bn_var"] = (n,)
    return shapes


def validate_weights(store: WeightStore, spec: NetworkSpec):
    expected = parameter_shapes(spec)
    missing = sorted(set(expected) - set(store.blocks))
    extra = sorted(set(store.blocks) - set(expected))
    if missing:
        raise WeightsMissing(f"missing blocks: {missing[:5]}"
                             + ("..." if len(missing) > 5 else ""))
    if extra:
        raise WeightsMissing(f"unexpected blocks: {extra[:5]}"
                             + ("..." if len(extra) > 5 else ""))
    for name, shape in expected.items():
        if tuple(store.blocks[name].shape) != shape:
            raise ShapeMismatch(
                f"{name}: shape {store.blocks[name].shape} != {shape}")


def random_weights(spec: NetworkSpec, seed=0) -> WeightStore:
    """Finite random parameters with sane scales (tests, smoke runs)."""
    rng = np.random.default_rng(seed)
    blocks = {}
    for name, shape in parameter_shapes(spec).items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            std = np.sqrt(2.0 / max(fan_in, 1))
            blocks[name] = rng.normal(0.0, std, shape).astype(np.float32)
        elif name.endswith(".bn_var"):
            blocks[name] = rng.uniform(0.5, 1.5, shape).astype(np.float32)
        elif name.endswith(".bn_scale"):
            blocks[name] = rng.uniform(0.5, 1.5, shape).astype(np.float32)
        else:
            blocks[name] = rng.uniform(-0.5, 0.5, shape).astype(np.float32)
    return WeightStore(blocks=blocks)


def write_weights(path, store: WeightStore):
    """Container layout: 4-byte magic, little-endian uint64 header size,
    JSON header (name -> shape/dtype/offset), then raw float32 blocks."""
    records = []
    offset = 0
    order = sorted(store.blocks)
    for name in order:
        arr = np.ascontiguousarray(store.blocks[name], dtype="<f4")
        records.append({"name": name, "shape": list(arr.shape),
                        "dtype": "float32", "offset": offset})
        offset += arr.nbytes
    header = json.dumps({"format": "bgcomplete-weights", "version": 1,
                         "records": records}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_WEIGHTS_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for name in order:
            fh.write(np.ascontiguousarray(store.blocks[name],
                                          dtype="<f4").tobytes())


def read_weights(path) -> WeightStore:
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _WEIGHTS_MAGIC:
                raise UnreadableFile(f"{path}: not a weights container")
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            data = fh.read()
    except OSError as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    blocks = {}
    for rec in header["records"]:
        if rec["dtype"] != "float32":
            raise UnreadableFile(f"{path}: unsupported dtype {rec['dtype']}")
        shape = tuple(rec["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = rec["offset"]
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=start)
        blocks[rec["name"]] = arr.reshape(shape).copy()
    return WeightStore(blocks=blocks)


# --- network input assembly and forward pass ---


@dataclass
class SegmenterInput:
    """The fixed 12-channel input stack, normalized floats in [0, 1]."""
    empty_background: np.ndarray   # (H, W, 3)
    empty_fpm: np.ndarray          # (H, W)
    recent_background: np.ndarray  # (H, W, 3)
    recent_fpm: np.ndarray         # (H, W)
    current: np.ndarray            # (H, W, 3)
    current_fpm: np.ndarray        # (H, W)

    def stack(self):
        parts = []
        shape = self.current.shape[:2]
        for name in ("empty_background", "empty_fpm", "recent_background",
                     "recent_fpm", "current", "current_fpm"):
            arr = np.asarray(getattr(self, name), dtype=np.float32)
            if arr.shape[:2] != shape:
                raise DimensionMismatch(f"{name}: {arr.shape} vs {shape}")
            if arr.ndim == 3:
                parts.extend(arr[:, :, ch] for ch in range(arr.shape[2]))
            else:
                parts.append(arr)
        out = np.stack(parts)
        if out.shape[0] != 12:
            raise DimensionMismatch(f"expected 12 channels, {out.shape[0]}")
        return out


def assemble_input(empty_background, recent_background, current,
                   fpms) -> SegmenterInput:
    """Bundle the three frames and their probability maps.

    Frames are uint8 (H, W, 3) and are normalized here; fpms is a
    (empty, recent, current) triple of float maps in [0, 1].
    """
    frames = [np.asarray(f) for f in (empty_background, recent_background,
                                      current)]
    shape = frames[0].shape
    for f in frames:
        if f.shape != shape or f.ndim != 3:
            raise DimensionMismatch(f"frame {f.shape} vs {shape}")
    e, r, c = (np.asarray(f, dtype=np.float32) for f in fpms)
    return SegmenterInput(
        empty_background=frames[0].astype(np.float32) / 255.0,
        empty_fpm=e, recent_background=frames[1].astype(np.float32) / 255.0,
        recent_fpm=r, current=frames[2].astype(np.float32) / 255.0,
        current_fpm=c)


def constant_fpm(shape, value=0.5):
    """The default probability-map source: flat planes."""
    plane = np.full(shape, np.float32(value), dtype=np.float32)
    return plane, plane.copy(), plane.copy()


class PreviousMaskFpm:
    """Probability maps from the previous output mask, box-blurred.

    Falls back to flat 0.5 planes before the first mask arrives.
    """

    def __init__(self, box=7):
        self.box = box
        self._prev = None

    def update(self, mask):
        self._prev = np.asarray(mask, dtype=np.float32)

    def __call__(self, shape):
        if self._prev is None or self._prev.shape != tuple(shape):
            return constant_fpm(shape)
        blurred = ndimage.uniform_filter(self._prev, size=self.box,
                                         mode="nearest")
        return blurred, blurred.copy(), blurred.copy()


def forward(spec: NetworkSpec, weights: WeightStore, x, eps=BN_EPS):
    """Run the stack; returns the (1, H, W) float64 probability map.

    x is a SegmenterInput or a ready (12, H, W) float stack; H and W
    must be divisible by 16 (four 2x poolings).
    """
    if isinstance(x, SegmenterInput):
        x = x.stack()
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != spec.input_channels:
        raise ShapeMismatch(f"input {x.shape}, expected "
                            f"({spec.input_channels}, H, W)")
    if x.shape[1] % 16 or x.shape[2] % 16:
        raise ShapeMismatch(f"H and W must be divisible by 16, "
                            f"got {x.shape[1]}x{x.shape[2]}")
    validate_weights(weights, spec)
    saved = {}
    for i, ly in enumerate(spec.layers):
        if ly.kind == KIND_POOL:
            x = maxpool2(x)  # spatial dropout is the identity at inference
            continue
        if ly.kind == KIND_SIGMOID:
            x = sigmoid(x)
            continue
        if ly.skip_concat is not None:
            x = np.concatenate([saved[ly.skip_concat], x], axis=0)
        w = weights[f"{i}.weight"]
        b = weights[f"{i}.bias"]
        if ly.kind == KIND_CONV:
            x = conv2d(x, w, b)
        else:
            x = upconv2(x, w, b)
        x = batchnorm_infer(x, weights[f"{i}.bn_scale"],
                            weights[f"{i}.bn_shift"],
                            weights[f"{i}.bn_mean"],
                            weights[f"{i}.bn_var"], eps=eps)
        if ly.relu:
            x = relu(x)
        if ly.skip_save is not None:
            saved[ly.skip_save] = x
    return x


def binarize(prob, threshold=0.5):
    """Probability map -> mask; foreground iff prob > threshold."""
    arr = np.asarray(prob)
    if arr.ndim == 3:
        arr = arr[0]
    return arr > threshold


def differencing_segment(current, background, threshold=30, min_blob=50):
    """Classical fallback: max-channel |current - background| above the
    threshold, with 8-connected components smaller than min_blob removed."""
    cur = np.asarray(current)
    bg = np.asarray(background)
    if cur.shape != bg.shape:
        raise DimensionMismatch(f"{cur.shape} vs {bg.shape}")
    diff = np.abs(cur.astype(np.int32) - bg.astype(np.int32))
    if diff.ndim == 3:
        diff = diff.max(axis=2)
    mask = diff > threshold
    if min_blob > 1 and mask.any():
        labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
        sizes = np.bincount(labels.ravel())
        keep = sizes >= min_blob
        keep[0] = False
        mask = keep[labels]
    return mask
