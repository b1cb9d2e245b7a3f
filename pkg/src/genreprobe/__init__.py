"""Genre probing of frozen audio encoders with segment-level MLP heads."""

from .aggregation import ALL_RULES, AggregationRule, ClipPrediction, aggregate
from .audio_io import AudioClip, decode_wav, encode_wav, resample
from .dataset import (
    GTZAN_GENRES,
    DatasetManifest,
    FoldAssignment,
    GenreLabel,
    ManifestEntry,
    make_folds,
    read_manifest_csv,
    scan_dataset,
    write_manifest_csv,
)
from .encoders import (
    EncoderHandle,
    FeatureMatrix,
    extract_layers,
    load_encoder,
    reference_logmel,
)
from .errors import (
    CapabilityError,
    FormatError,
    GenreProbeError,
    InputError,
    IntegrityError,
    TruncatedError,
)
from .evaluation import (
    EvaluationReport,
    FoldResult,
    cross_validate,
    evaluate_fold,
    layer_sweep,
    render_report,
)
from .feature_store import (
    DictFeatureSource,
    StoreFeatureSource,
    feature_path,
    read_features,
    write_features,
)
from .framing import DEFAULT_FRAME_SPEC, FrameSpec, frame_bounds, frame_count
from .mlp_head import (
    AdamState,
    MlpParams,
    TrainConfig,
    TrainedHead,
    adam_step,
    forward,
    init_params,
    load_head,
    loss_and_grad,
    predict_segments,
    save_head,
    train_head,
)
from .synthetic import SyntheticSpec, generate, synth_clip

__version__ = "0.1.0"
