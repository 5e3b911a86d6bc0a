"""Synthetic MRI training pairs with randomized contrast, and the Bayesian
EM segmenter that inverts the same generative model."""

from .bayes import (
    Atlas,
    EmResult,
    build_atlas,
    em_segment,
    estimate_bias,
    log_likelihood,
)
from .config import ConfigError, GenConfig, load_config, save_config
from .deform import (
    AffineParams,
    DeformField,
    SvfParams,
    affine_matrix,
    compose,
    integrate_svf,
    sample_affine,
    sample_svf,
    warp_labels,
    warp_volume,
)
from .generator import (
    ParameterRecord,
    TrainingPair,
    generate_pair,
    generate_stream,
    record_parameters,
    synthesize_from_record,
)
from .intensity import (
    BiasParams,
    ContrastHyperprior,
    GmmParams,
    apply_bias,
    gamma_normalize,
    gaussian_blur,
    sample_bias,
    sample_gmm_image,
    sample_gmm_params,
    sample_gmm_params_rule,
    strip_extracerebral,
)
from .metrics import DiceReport, dice, dice_report, soft_dice_loss
from .nifti import NiftiError, read_atlas, read_volume, write_atlas, write_volume
from .phantoms import make_phantom_labels
from .stream import StreamError, decode_record, encode_record, read_records, write_records
from .volume import (
    LabelMap,
    VectorField,
    Volume,
    nearest_sample,
    one_hot,
    trilinear_sample,
    upscale_trilinear,
)

__version__ = "0.1.0"
