"""Zero-delay analog mapping design for two correlated sources on parallel
noisy channels: deterministic annealing over piecewise-affine randomized
encoders, plus greedy-descent and noisy-channel-relaxation baselines."""

from .annealer import AnnealConfig, AnnealReport, AnnealResult, anneal
from .baselines import GreedyResult, GridEncoder, NcrConfig, greedy_descend, ncr
from .codebook import (
    AffineModel,
    DecoderTable,
    RandomizedEncoder,
    decode,
    decode_many,
    encoder_power,
    harden,
    make_encoder,
)
from .errors import ConfigurationError, NumericAbortError
from .numerics import (
    NoiseModel,
    OutputGrid,
    SourceModel,
    build_noise_model,
    build_output_grid,
    build_source_model,
)
from .objective import (
    CostReport,
    DistortionTensor,
    LagrangeWeights,
    compute_decoder,
    compute_distortion_tensor,
    compute_entropy,
    cost_report,
    expected_distortion,
    gibbs_update,
)

__version__ = "0.1.0"

__all__ = [
    "AffineModel",
    "AnnealConfig",
    "AnnealReport",
    "AnnealResult",
    "ConfigurationError",
    "CostReport",
    "DecoderTable",
    "DistortionTensor",
    "GreedyResult",
    "GridEncoder",
    "LagrangeWeights",
    "NcrConfig",
    "NoiseModel",
    "NumericAbortError",
    "OutputGrid",
    "RandomizedEncoder",
    "SourceModel",
    "anneal",
    "build_noise_model",
    "build_output_grid",
    "build_source_model",
    "compute_decoder",
    "compute_distortion_tensor",
    "compute_entropy",
    "cost_report",
    "decode",
    "decode_many",
    "encoder_power",
    "expected_distortion",
    "gibbs_update",
    "greedy_descend",
    "harden",
    "make_encoder",
    "ncr",
]
