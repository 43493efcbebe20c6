"""Flow-guided background completion and foreground detection.

A background modeler that synthesizes a clean background frame from a
short window of video (dense flow, edge-aware flow completion, candidate
chaining, gradient-domain reconstruction), cascaded with a pluggable
background/foreground segmenter and a sectioned refresh loop, plus the
change-detection evaluation harness and a CLI.
"""

from .backend import active_backend
from .completion import (CandidateSet, CompletedFrame, CompletionConfig,
                         chain_candidates, complete_background,
                         diffusion_inpaint, fuse_candidates,
                         poisson_reconstruct)
from .errors import BgCompleteError
from .evaluation import (ConfusionCounts, MetricSet, accumulate, aggregate,
                         emit_report, metrics)
from .flow import (FlowField, FlowParams, estimate_flow, plan_flow_pairs,
                   read_flo, warp_frame, write_flo)
from .flow_completion import (CompletedFlow, complete_flow,
                              extract_flow_edges)
from .imaging import (FrameSequence, dilate_mask, load_sequence,
                      resize_bilinear, temporal_median, to_gray)
from .pipeline import (BackgroundModel, DetectionRecord, PipelineConfig,
                       detect_frame, initialize, maybe_refresh, run_video)
from .segmenter import (NetworkSpec, SegmenterInput, WeightStore, binarize,
                        default_network_spec, differencing_segment, forward,
                        random_weights, read_weights, write_weights)
from .synthetic import generate_scene, write_scene

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
