"""Stain separation, augmentation, normalisation and evaluation for
histology images."""

from .config import (
    OD_BASE_E,
    OD_BASE_TEN,
    PipelineConfig,
    STATS_ALL,
    STATS_TISSUE,
)
from .errors import (
    ConventionMismatchError,
    DegenerateSampleError,
    DegenerateStainsError,
    EmptyDatasetError,
    EmptyMaskError,
    ImageFormatError,
    InsufficientTissueError,
    ProfileSchemaError,
    ShapeMismatchError,
    SingularMatrixError,
    StainKitError,
    UnsupportedBitDepthError,
)
from .imaging import (
    OD_MAX,
    load_label_png,
    load_mask_png,
    load_pfm,
    load_png,
    od_max,
    od_to_float_rgb,
    od_to_rgb,
    quantize_rgb,
    rgb_to_od,
    save_label_png,
    save_mask_png,
    save_pfm,
    save_png,
    tissue_mask,
)
from .separation import (
    ChannelStats,
    compute_concentrations,
    concentration_stats,
    estimate_stain_matrix,
    recompose,
)
from .profile import (
    Decomposition,
    ImageStainStats,
    SampledStain,
    StainProfile,
    extract_image_stats,
    fit_profile,
    load_profile,
    sample_colour_matrix,
    sample_concentration_stats,
    sample_stain,
    save_profile,
    separate_image,
)
from .augment import (
    FIXED_HE_MATRIX,
    JitterParams,
    LabProfile,
    PairSample,
    apply_sampled_stain,
    fit_lab_profile,
    load_lab_profile,
    randstainna_augment,
    save_lab_profile,
    sca_augment,
    scl_pair,
    scl_pair_sample,
    stain_jitter,
    transfer_concentrations,
)
from .normalize import (
    FdaReference,
    HistogramReference,
    MacenkoReference,
    ReinhardReference,
    fda_transfer,
    histogram_match,
    macenko_normalize,
    make_reference,
    reinhard_normalize,
)
from .loss import masked_mae, sigmoid, stain_consistency_loss
from .metrics import MatchReport, aggregate_reports, f1_50, match_instances, pq_50

__version__ = "0.1.0"
