"""Alternating-feedback training of a tag-sequence generator and a click
validator, with the resulting preference chains injected as dense features
into a small CTR model."""

from .align import DpoConfig, align_generator, sdpo_grad, sdpo_loss
from .core import (
    Cot,
    Label,
    RecloopError,
    TagVocabulary,
    cot_multi_hot,
    cot_render,
    substream,
)
from .ctr import (
    CtrModelParams,
    TagEncoder,
    ctr_forward,
    ctr_train,
    encode_preference,
    make_encoder,
)
from .env import (
    EnvConfig,
    Interaction,
    ItemProfile,
    UserProfile,
    load_interactions_csv,
    make_synthetic,
)
from .feedback import (
    FeedbackRecord,
    build_feedback_batch,
    feedback_reward,
    run_sampling_feedback,
)
from .generator import (
    GeneratorParams,
    SamplingParams,
    cot_log_prob,
    cot_log_prob_grad,
    greedy_cot,
    sample_cot,
    slot_distribution,
)
from .loop import (
    AlternatingResult,
    IterationReport,
    LoopConfig,
    run_alternating,
    run_iteration,
)
from .metrics import AucUndefinedError, MetricsReport, evaluate
from .rectune import (
    DistillConfig,
    RecTuneConfig,
    build_rectune_dataset,
    distill_generator,
    oracle_cot,
    rectune_validator,
)
from .validator import ValidatorParams, bce_grad, normalize, p_yes, raw_scores

__version__ = "0.1.0"
