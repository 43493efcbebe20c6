"""End-to-end orchestration: initialization from a leading window,
per-frame detection, and sectioned/deterioration-driven background
refresh.

Detections are emitted for every input frame. The first init_window
frames are classified against the bootstrap temporal-median background
and flagged warm_up; once the completed background is ready it replaces
the bootstrap and stays fixed until a refresh event (section boundary
reached, or trailing mean foreground ratio exceeding the deterioration
threshold).
"""

import dataclasses
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .completion import CompletionConfig, complete_background
from .errors import AllPixelsMissing, BgCompleteError, PreconditionError
from .flow import FlowParams
from .imaging import FrameSequence, dilate_mask, resize_bilinear, \
    temporal_median
from .segmenter import (PreviousMaskFpm, assemble_input, binarize,
                        constant_fpm, default_network_spec,
                        differencing_segment, forward, read_weights,
                        validate_weights)

SEGMENTER_CHOICES = ("differencing", "network")
FPM_CHOICES = ("constant", "previous_mask")


@dataclass
class PipelineConfig:
    init_window: int = 100
    section_length: int = 100          # 0 disables scheduled refresh
    width: int = 320
    height: int = 240
    deterioration_fg_ratio: float = 0.5  # 1.0 disables the heuristic
    deterioration_window: int = 10
    segmenter_choice: str = "differencing"
    weights_path: str = ""
    diff_threshold: int = 30
    diff_min_blob: int = 50
    binarize_threshold: float = 0.5
    fpm_source: str = "constant"
    recent_window: int = 30
    dilation_radius: int = 2
    flow_levels: int = 4
    flow_iterations: int = 10
    flow_regularization: float = 15.0
    stride: int = 5
    edge_threshold: float = 1.0
    diffusion_tol: float = 1e-4
    diffusion_max_iters: int = 2000
    poisson_tol: float = 1e-6
    poisson_max_iters: int = 5000
    poisson_omega: float = 1.9
    max_hops: int = 0                  # 0: use the window length
    keep_probabilities: bool = False
    threads: int = 0                   # 0: all available (numba backend)

    def validate(self):
        if self.init_window < 2:
            raise PreconditionError("init_window must be >= 2")
        if self.section_length < 0:
            raise PreconditionError("section_length must be >= 0")
        if not 0.0 < self.deterioration_fg_ratio <= 1.0:
            raise PreconditionError("deterioration_fg_ratio in (0, 1]")
        if self.segmenter_choice not in SEGMENTER_CHOICES:
            raise PreconditionError(
                f"segmenter_choice must be one of {SEGMENTER_CHOICES}")
        if self.fpm_source not in FPM_CHOICES:
            raise PreconditionError(
                f"fpm_source must be one of {FPM_CHOICES}")
        if self.width < 1 or self.height < 1:
            raise PreconditionError("bad canonical size")
        return self

    def completion_config(self) -> CompletionConfig:
        return CompletionConfig(
            flow=FlowParams(levels=self.flow_levels,
                            iterations=self.flow_iterations,
                            regularization=self.flow_regularization),
            stride=self.stride,
            edge_threshold=self.edge_threshold,
            diffusion_tol=self.diffusion_tol,
            diffusion_max_iters=self.diffusion_max_iters,
            poisson_tol=self.poisson_tol,
            poisson_max_iters=self.poisson_max_iters,
            poisson_omega=self.poisson_omega,
            max_hops=self.max_hops or None)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in dataclasses.fields(cls)}

    @classmethod
    def from_file(cls, path):
        """Parse a `key = value` config file (# starts a comment)."""
        values = {}
        fields = {f.name: f for f in dataclasses.fields(cls)}
        with open(path) as fh:
            for ln, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise PreconditionError(f"{path}:{ln}: expected key = "
                                            f"value, got {raw.strip()!r}")
                key, val = (part.strip() for part in line.split("=", 1))
                if key not in fields:
                    raise PreconditionError(f"{path}:{ln}: unknown key "
                                            f"{key!r}")
                values[key] = _coerce(fields[key], val, f"{path}:{ln}")
        return cls(**values).validate()


def _coerce(field_def, text, where):
    kind = field_def.default
    try:
        if isinstance(kind, bool):
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(kind, int):
            return int(text)
        if isinstance(kind, float):
            return float(text)
        return text
    except ValueError as exc:
        raise PreconditionError(f"{where}: bad value for "
                                f"{field_def.name}: {text!r}") from exc


@dataclass
class BackgroundModel:
    """Mutable single-owner state of the detection stream."""
    empty_background: np.ndarray          # uint8 canonical (H, W, 3)
    recent_frames: deque                  # ring of canonical frames
    last_refresh: int                     # frame index of latest completion
    warnings: list = field(default_factory=list)
    provenance: np.ndarray | None = None  # fill map of the last completion


@dataclass
class DetectionRecord:
    index: int
    mask: np.ndarray
    fg_ratio: float
    bg_refreshed: bool = False
    warm_up: bool = False
    probability: np.ndarray | None = None


class Segmenter:
    """The configured classifier plus its per-run state (FPM source)."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self._spec = None
        self._weights = None
        self._fpm = None
        if config.segmenter_choice == "network":
            if not config.weights_path:
                raise PreconditionError(
                    "network segmenter needs weights_path")
            self._spec = default_network_spec()
            self._weights = read_weights(config.weights_path)
            validate_weights(self._weights, self._spec)
            if config.fpm_source == "previous_mask":
                self._fpm = PreviousMaskFpm()

    def segment(self, frame, model: BackgroundModel):
        """Classify one canonical frame; returns (mask, prob or None)."""
        cfg = self.config
        if cfg.segmenter_choice == "differencing":
            mask = differencing_segment(frame, model.empty_background,
                                        threshold=cfg.diff_threshold,
                                        min_blob=cfg.diff_min_blob)
            return mask, None
        window = min(cfg.recent_window, len(model.recent_frames))
        recent = temporal_median(np.stack(list(model.recent_frames)),
                                 max(window, 1))
        shape = frame.shape[:2]
        fpms = (self._fpm(shape) if self._fpm is not None
                else constant_fpm(shape))
        x = assemble_input(model.empty_background, recent, frame, fpms)
        prob = forward(self._spec, self._weights, x)
        mask = binarize(prob, cfg.binarize_threshold)
        if self._fpm is not None:
            self._fpm.update(mask)
        return mask, prob


def _canonical(frame, config):
    return resize_bilinear(frame, config.width, config.height)


def _bootstrap_model(window, config) -> BackgroundModel:
    bootstrap = temporal_median(window, window.shape[0])
    ring = deque(maxlen=max(config.recent_window, 1))
    return BackgroundModel(empty_background=bootstrap, recent_frames=ring,
                           last_refresh=-1)


def _complete_window(frames, masks, config):
    dilated = np.stack([dilate_mask(m, config.dilation_radius)
                        for m in masks])
    if dilated.all():
        raise AllPixelsMissing("segmenter masks cover every pixel")
    return complete_background(frames, dilated, config.completion_config())


def initialize(seq, config: PipelineConfig, segmenter: Segmenter | None = None
               ) -> BackgroundModel:
    """Build the background model from the first init_window frames.

    Bootstrap median -> segmenter masks against it -> dilation ->
    window completion; the completed last frame becomes the empty
    background.
    """
    config.validate()
    frames = seq.frames if isinstance(seq, FrameSequence) else np.asarray(seq)
    if frames.shape[0] < config.init_window:
        raise PreconditionError(
            f"need >= {config.init_window} frames, got {frames.shape[0]}")
    model, _, _ = _run_initialization(frames, config,
                                      segmenter or Segmenter(config))
    return model


def _run_initialization(frames, config, segmenter):
    window = np.stack([_canonical(f, config)
                       for f in frames[:config.init_window]])
    model = _bootstrap_model(window, config)
    records = []
    masks = []
    for t in range(window.shape[0]):
        frame = window[t]
        mask, prob = segmenter.segment(frame, model)
        model.recent_frames.append(frame)
        masks.append(mask)
        records.append(DetectionRecord(
            index=t, mask=mask, fg_ratio=float(mask.sum()) / mask.size,
            warm_up=True,
            probability=prob if config.keep_probabilities else None))
    completed = _complete_window(window, np.stack(masks), config)
    model.empty_background = completed.frame
    model.provenance = completed.filled
    model.warnings.extend(completed.warnings)
    model.last_refresh = config.init_window - 1
    if records:
        records[-1].bg_refreshed = True
    return model, records, window


def detect_frame(model: BackgroundModel, frame, config: PipelineConfig,
                 index: int = -1, segmenter: Segmenter | None = None
                 ) -> DetectionRecord:
    """Classify one frame against the current background model."""
    if model is None or model.empty_background is None:
        raise PreconditionError("model is not initialized")
    segmenter = segmenter or Segmenter(config)
    frame = _canonical(frame, config)
    mask, prob = segmenter.segment(frame, model)
    model.recent_frames.append(frame)
    return DetectionRecord(
        index=index, mask=mask, fg_ratio=float(mask.sum()) / mask.size,
        probability=prob if config.keep_probabilities else None)


def maybe_refresh(model: BackgroundModel, history, frame_index,
                  config: PipelineConfig) -> bool:
    """Regenerate the background when a section boundary is reached or
    the trailing mean foreground ratio signals deterioration.

    `history` holds (frame, mask, fg_ratio) tuples, most recent last.
    Updates the model in place; returns True when the background was
    replaced. Completion failures keep the previous background.
    """
    due = (config.section_length > 0
           and frame_index - model.last_refresh >= config.section_length)
    k = config.deterioration_window
    if not due and len(history) >= k:
        trailing = [h[2] for h in history[-k:]]
        due = (sum(trailing) / k) > config.deterioration_fg_ratio
    if not due:
        return False
    cap = config.section_length if config.section_length > 0 \
        else config.init_window
    tail = list(history)[-cap:]
    if len(tail) < 2:
        return False
    model.last_refresh = frame_index
    frames = np.stack([h[0] for h in tail])
    masks = np.stack([h[1] for h in tail])
    try:
        completed = _complete_window(frames, masks, config)
    except BgCompleteError as exc:
        model.warnings.append(f"refresh at {frame_index} failed: {exc}")
        return False
    model.empty_background = completed.frame
    model.provenance = completed.filled
    model.warnings.extend(completed.warnings)
    return True


def run_video(seq, config: PipelineConfig):
    """Process a whole sequence; returns one DetectionRecord per frame.

    Warm-up frames are classified against the bootstrap median; the
    final partial section is processed with whatever frames remain.
    """
    config.validate()
    backend.set_num_threads(config.threads)
    frames = seq.frames if isinstance(seq, FrameSequence) else np.asarray(seq)
    n = frames.shape[0]
    if n <= config.init_window:
        raise PreconditionError(
            f"sequence length {n} must exceed init_window "
            f"{config.init_window}")
    segmenter = Segmenter(config)
    model, records, window = _run_initialization(frames, config, segmenter)
    cap = config.section_length if config.section_length > 0 \
        else config.init_window
    history = deque(maxlen=max(cap, config.deterioration_window))
    for rec in records:
        history.append((window[rec.index], rec.mask, rec.fg_ratio))
    for t in range(config.init_window, n):
        rec = detect_frame(model, frames[t], config, index=t,
                           segmenter=segmenter)
        history.append((_canonical(frames[t], config), rec.mask,
                        rec.fg_ratio))
        rec.bg_refreshed = maybe_refresh(model, history, t, config)
        records.append(rec)
    return records
