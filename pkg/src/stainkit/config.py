"""Runtime conventions for the separation / augmentation pipeline."""

from dataclasses import dataclass

__all__ = [
    "OD_BASE_TEN",
    "OD_BASE_E",
    "STATS_TISSUE",
    "STATS_ALL",
    "EQ5_PRINTED",
    "EQ5_CONVENTIONAL",
    "JITTER_PER_IMAGE",
    "JITTER_FIXED",
    "PipelineConfig",
]

OD_BASE_TEN = "ten"
OD_BASE_E = "e"

STATS_TISSUE = "tissue"
STATS_ALL = "all"

EQ5_PRINTED = "printed"
EQ5_CONVENTIONAL = "conventional"

JITTER_PER_IMAGE = "per-image"
JITTER_FIXED = "fixed"


@dataclass(frozen=True)
class PipelineConfig:
    """Conventions that must stay consistent between fitting and applying.

    od_base:
        Logarithm base of the optical-density transform, "ten" or "e".
        Both the forward and the inverse transform use the same base.
    stats_domain:
        Which pixels feed concentration statistics: "tissue" (masked)
        or "all".
    tissue_threshold:
        A pixel counts as tissue when its maximum channel OD exceeds this.
    angle_percentile:
        Robust percentile for the extreme stain directions; the estimator
        uses this and its complement (100 - p).
    transform_direction:
        Direction of the channel-wise concentration transfer, "printed"
        (scale by source spread over target spread) or "conventional"
        (the inverse ratio).
    diag_cov:
        Fit diagonal covariances instead of full ones.
    jitter_matrix:
        Colour matrix used by stain jitter: "per-image" (estimated) or
        "fixed" (published haematoxylin/eosin matrix).
    """

    od_base: str = OD_BASE_TEN
    stats_domain: str = STATS_TISSUE
    tissue_threshold: float = 0.15
    angle_percentile: float = 1.0
    transform_direction: str = EQ5_PRINTED
    diag_cov: bool = False
    jitter_matrix: str = JITTER_PER_IMAGE

    def __post_init__(self) -> None:
        if self.od_base not in (OD_BASE_TEN, OD_BASE_E):
            raise ValueError(f"unknown od_base {self.od_base!r}")
        if self.stats_domain not in (STATS_TISSUE, STATS_ALL):
            raise ValueError(f"unknown stats_domain {self.stats_domain!r}")
        if self.transform_direction not in (EQ5_PRINTED, EQ5_CONVENTIONAL):
            raise ValueError(
                f"unknown transform_direction {self.transform_direction!r}"
            )
        if self.jitter_matrix not in (JITTER_PER_IMAGE, JITTER_FIXED):
            raise ValueError(f"unknown jitter_matrix {self.jitter_matrix!r}")
        if not 0.0 < self.angle_percentile < 50.0:
            raise ValueError("angle_percentile must lie in (0, 50)")
        if self.tissue_threshold < 0.0:
            raise ValueError("tissue_threshold must be non-negative")
