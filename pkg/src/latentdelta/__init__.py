"""latentdelta: text-free latent-direction editing at desk scale.

Embedding-difference analysis, a coarse-to-fine direction mapper trained on
image-pair differences and driven by text-pair differences, relevance-based
channel masking, and the denoising-diffusion machinery (deterministic
inversion included) over low-dimensional vectors.
"""

from .autodiff import AdamState, GraphError, ParamStore, ShapeMismatch, adam_step
from .bundle import (Bundle, BundleFormatError, EmbeddingRecord, LevelPartition,
                     concat_bundles, make_bundle, read_bundle, sample_pairs,
                     write_bundle)
from .checkpoint import CheckpointError, load_params, load_raw, save_params, save_raw
from .delta_features import (AlignmentReport, DeltaCondition, alignment_report,
                         export_csv, make_delta, unit_normalize)
from .diffusion import (DiffusionSchedule, GaussianOracle, PredictorConfig,
                        PredictorTrainConfig, ScheduleError, StylePredictor,
                        ddim_decode, ddim_invert, ddim_sample, ddim_step,
                        export_trajectory_csv, markov_step, q_sample,
                        sinusoidal_embedding, train_style_predictor)
from .disentangle import (RelevanceMask, RelevanceMatrix, TabulatedLinearProbe,
                          build_mask, estimate_relevance)
from .interp import lerp_codes, lerp_edits, slerp, splice_styles
from .mapper import (DirectionMapper, EditOutcome, LossBreakdown, TrainConfig,
                     TrainingDiverged, baseline_forward, edit, mapper_forward,
                     train)
from .metrics import mse, psnr, ssim
from .synthetic import constant_style_world, linear_world, paired_world

__version__ = "0.1.0"
