"""Anatomy-aware human mask synthesis from attention stacks and keypoints."""

from .aggregation import (
    CoarseTargetStack,
    FineTargetStack,
    PhaseWeights,
    build_coarse_stack,
    collapse_to_fine,
    phase_weights,
    sliding_window_consensus,
    thresholded_average,
)
from .instruction import Instruction, TokenGroup, expand_to_token_group, parse_instruction
from .localization import (
    AnchorTable,
    RegionMap,
    anchor_fleshy,
    attention_centroid,
    calibrate_star,
    choose_radius,
    normalize_map,
    radial_constrain,
)
from .maskpost import BinaryMask, bridge_endpoints, edge_to_mask, finalize, smooth_mask
from .pipeline import PipelineConfig, RunReport, iou, run, sweep
from .refinement import (
    FusedRegion,
    canny_edges,
    combine_regions,
    cross_self_merge,
    edge_select,
    upsample_fine,
)
from .synthgen import PhaseProfile, SyntheticScene, generate_attention, generate_scene
from .tensorio import (
    AttentionStack,
    ImageBuffer,
    KeypointSet,
    SelfAttentionStack,
    read_attention_stack,
    read_keypoints,
    read_self_attention_stack,
    write_attention_stack,
    write_keypoints,
    write_self_attention_stack,
)

__version__ = "0.1.0"
