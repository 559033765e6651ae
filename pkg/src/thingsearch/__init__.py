"""Example-free scene retrieval from the statistics of nameless thing windows.

Images are represented by their "things syntax": one row per window with
normalized position, size, aspect ratio, and dominant color. Queries are
abstract statements ("Green small squared thing at top middle") scored
against statement histograms, or block illustrations scored by Fisher-vector
distance under a diagonal GMM; both run without a single labeled example
image.
"""

from .analysis import (
    KlMatrix,
    PropertyDistribution,
    inject_noise,
    kl_divergence,
    kl_matrix,
    property_distribution,
    restrict_properties,
)
from .colors import COLOR_NAMES, N_COLORS, dominant_color
from .dataio import (
    WindowsRecord,
    generate_synthetic,
    load_windows,
    polygon_to_bbox,
    save_windows,
)
from .encoder import (
    FisherVector,
    GmmModel,
    encode_fv,
    fit_gmm,
    log_likelihood,
    responsibilities,
)
from .errors import (
    ConfigError,
    GeometryError,
    InsufficientDataError,
    ModelIOError,
    ParseError,
    ThingSearchError,
)
from .grammar import (
    BinBoundaries,
    Statement,
    StatementHistogram,
    fit_boundaries,
    histogram_from_statements,
    histogram_from_syntax,
    parse_statement,
    quantize_window,
    render_statement,
)
from .retrieval import (
    PriorModel,
    RankedList,
    SceneProfile,
    average_precision,
    build_scene_profile,
    dap_score,
    fit_prior,
    fuse_rankings,
    fv_distance_score,
    mean_average_precision,
    rank_images,
)
from .windows import (
    FULL_MASK,
    ImageMeta,
    PropertyMask,
    RawBox,
    SyntaxMatrix,
    ThingWindow,
    aspect_ratio,
    build_syntax,
    normalize_box,
)

__version__ = "0.1.0"

__all__ = [
    "aspect_ratio", "normalize_box", "build_syntax", "dominant_color",
    "ImageMeta", "RawBox", "ThingWindow", "SyntaxMatrix", "PropertyMask", "FULL_MASK",
    "COLOR_NAMES", "N_COLORS",
    "BinBoundaries", "Statement", "StatementHistogram",
    "fit_boundaries", "quantize_window", "render_statement", "parse_statement",
    "histogram_from_syntax", "histogram_from_statements",
    "GmmModel", "FisherVector", "fit_gmm", "log_likelihood", "responsibilities",
    "encode_fv",
    "SceneProfile", "PriorModel", "RankedList", "build_scene_profile", "fit_prior",
    "dap_score", "fv_distance_score", "rank_images", "fuse_rankings",
    "average_precision", "mean_average_precision",
    "PropertyDistribution", "KlMatrix", "property_distribution", "kl_divergence",
    "kl_matrix", "inject_noise", "restrict_properties",
    "WindowsRecord", "load_windows", "save_windows", "polygon_to_bbox",
    "generate_synthetic",
    "ThingSearchError", "GeometryError", "ConfigError", "InsufficientDataError",
    "ParseError", "ModelIOError",
    "__version__",
]
