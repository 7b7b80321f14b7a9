"""Model-agnostic modality attribution for text+image classifiers.

Measures how much each modality (text tokens vs. image patches) contributes
to a black-box classifier's score via exact or Monte Carlo Shapley
attribution, and ships an experiment harness (cross-domain transfer,
caption augmentation, confounder sensitivity) that runs end to end on
built-in synthetic data and predictors.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .data_model import (
    ConfounderEvalSets,
    ConfounderGroup,
    GrayImage,
    LabeledDataset,
    Meme,
    augment_with_caption,
    build_confounder_eval_sets,
    load_confounders,
    load_dataset,
    read_pgm,
    save_confounders,
    save_dataset,
    write_pgm,
)
from .errors import ProbeError
from .harness import (
    CaptionEffectReport,
    ConfounderReport,
    DomainSpec,
    MatrixReport,
    ModalityRunReport,
    caption_effect_experiment,
    confounder_eval,
    cross_domain_matrix,
    generate_confounder_groups,
    generate_domain,
    make_domain_suite,
    modality_report,
    split_dataset,
)
from .metrics import (
    EvalOutcome,
    delta_f1,
    krippendorff_alpha,
    load_annotation_matrix,
    macro_f1,
    mann_whitney_u,
)
from .predictor import (
    ExternalPredictor,
    ModelParams,
    Predictor,
    TrainConfig,
    classify,
    external_predictor,
    extract_features,
    late_fusion_fixed,
    lexicon_predictor,
    loss_and_gradient,
    patch_intensity_predictor,
    predict,
    train_late_fusion,
    trained_predictor,
)
from .segmentation import (
    EntityIndex,
    MaskPolicy,
    MaskedMeme,
    PatchGrid,
    TokenSequence,
    as_masked,
    entity_universe,
    materialize,
    patch_grid,
    tokenize,
)
from .shapley import (
    MCConfig,
    ModalityAggregate,
    ModalityScore,
    ShapleyResult,
    aggregate_modality,
    exact_shapley,
    exact_shapley_values,
    mc_shapley,
    mc_shapley_values,
    modality_score,
    render_attribution,
    shapley_size_weights,
)
