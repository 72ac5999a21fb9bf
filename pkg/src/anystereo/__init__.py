"""anystereo: anytime coarse-to-fine stereo matching on deterministic descriptors.

The package is organized around a staged matcher that reports disparity
maps on demand, coarse first, under an optional latency budget, plus the
surrounding toolkit: benchmark raster formats, robustness augmentations,
depth-range evaluation, a derivative-free parameter tuner, and a
synthetic ground-truth harness.
"""

from .config import (
    DEFAULT_STRIDES,
    DIVISORS,
    STRIDE_PRESETS,
    ConfigError,
    DecoderConfig,
    EncoderConfig,
    MatcherConfig,
    aligned_d_max,
    load_config,
    save_config,
    strides_for_bin_ratios,
    tuned_decoder_config,
)
from .raster_io import (
    DisparityMap,
    FormatError,
    Image,
    load_disparity,
    load_image,
    read_calib,
    read_pfm,
    read_png_disparity,
    save_disparity,
    save_image,
    write_pfm,
    write_png_disparity,
)
from .encoder import (
    FeatureLevel,
    FeaturePyramid,
    build_feature_pyramid,
    downsample_half,
    extract_descriptors,
    pooled_context,
    rank_transform,
)
from .volume import FeatureVolume, build_feature_volume, n_bins_for, stride_for_level
from .decoder import (
    CostVolume,
    aggregate,
    expected_disparity,
    to_cost_volume,
    upsample_fuse,
    volumetric_pyramid_pool,
)
from .pipeline import (
    StageReport,
    match,
    match_at_resolution,
    match_native_levels,
    match_single_scale,
    stopping_distance,
)
from .synthetic import SyntheticScene, export_scene, generate
from .evaluation import (
    EvalReport,
    Metrics,
    compute_metrics,
    depth_error,
    disparity_to_depth,
    evaluate_protocol,
    metrics_csv,
    robustness_sweep,
)
from .augment import (
    AugmentationSpec,
    Chromatic,
    MaskRect,
    ScaleCrop,
    YDisparity,
    apply_spec,
    asymmetric_chromatic,
    asymmetric_mask,
    identity_spec,
    rotation_displacement,
    sample_spec,
    symmetric_scale_crop,
    ydisparity_warp,
)
from .tuning import LossBreakdown, TuneResult, downsample_gt, multiscale_loss, smooth_l1, tune

__version__ = "0.1.0"
