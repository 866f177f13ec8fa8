"""De-overlapping toolkit for translucent cell instance annotations.

Exact decomposition of overlapping masks into intersection/complement
layers, probabilistic-XOR recombination with reference losses, mask-guided
attention reweighting, a seeded synthetic cluster generator, and a
bit-exact instance-segmentation metric suite, all over plain numpy rasters.
"""

from .annotations import CellClass, ImageAnnotation, InstanceAnnotation
from .attention import AttentionReweighter, aggregate_attention, logit, reweight, sigmoid
from .decompose import (
    ClusterDecomposer,
    ClusterDecomposition,
    InstanceLayers,
    OverlapGraph,
    build_overlap_graph,
    decompose_annotation,
    decompose_image,
    decompose_instance,
)
from .errors import (
    CorruptDataError,
    DeoverlapError,
    DimensionMismatchError,
    GenerationError,
    InvalidInputError,
    ManifestSchemaError,
    PlacementError,
    UndefinedMetricError,
)
from .masks import (
    BBox,
    area,
    binarize,
    difference,
    intersect,
    iou,
    paste,
    resize_nearest,
    rle_decode,
    rle_encode,
    union,
    union_all,
    xor,
)
from .metrics import (
    MatchResult,
    MetricsReport,
    MetricValues,
    aji,
    average_dice,
    average_precision,
    evaluate_annotations,
    f1_score,
    fn_object,
    match_instances,
    pooled_average_precision,
    tp_pixel,
    union_dice,
)
from .recombine import (
    CoarseLoss,
    LossBreakdown,
    LossWeights,
    XorRecombiner,
    consistency_loss,
    pixel_ce,
    recombine_instance,
    smooth_l1,
    soft_xor_merge,
    total_loss,
)
from .synth import (
    CellCrop,
    Placement,
    SynthConfig,
    SynthSample,
    composite,
    extract_cell,
    generate,
    overlap_ratio,
    place_with_overlap,
)

__version__ = "0.1.0"
