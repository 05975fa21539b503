"""Writer identification and verification from six handwritten digits."""

from .errors import (
    AllDegenerateError,
    ConfigError,
    ConfigMismatchError,
    DegenerateSampleError,
    DimensionError,
    DimensionMismatchError,
    DuplicateSampleError,
    EmptyScoresError,
    InsufficientPoolError,
    KindMismatchError,
    MissingFeaturesError,
    MissingImageError,
    NoEligibleWritersError,
    NoInkError,
    NoRunsError,
    ParseError,
    SixDigitsError,
)
from .features import (
    ExtractionConfig,
    FeatureKind,
    FeaturePdf,
    average_pdfs,
    chi2_distance,
    cooccurrence_pdf,
    direction_pdf,
    hinge_pdf,
)
from .imageproc import (
    Contour,
    ContourSet,
    as_binary,
    binarize,
    otsu_threshold,
    read_gray,
    trace_contours,
    write_pgm,
)
from .matching import (
    ChiSquareMatcher,
    DIGIT_SHAPE,
    DIGITS_PER_SAMPLE,
    Embedding,
    EuclideanMatcher,
    FeatureSet,
    Sample,
    Template,
    build_embedding_template,
    build_template,
    distance_digitwise,
    distance_pooled,
    embedding_distance,
    extract_sample_features,
)
from .dataset import (
    Database,
    EmbeddingRecord,
    StyleVariance,
    SynthConfig,
    build_database,
    database_equal,
    load_manifest,
    read_embeddings,
    save_database,
    synthesize_writers,
    write_embeddings,
)
from .protocols import (
    CmcCurve,
    EmbeddingStoreView,
    HandcraftedStore,
    IdentificationSplit,
    RankList,
    ScoreSet,
    VerificationBlock,
    VerificationSplit,
    cmc_curve,
    compute_eer,
    make_pseudo_forgery,
    run_identification,
    run_verification,
    split_identification,
    split_verification,
)

__version__ = "0.1.0"
