"""layerfec: rateless erasure coding for layered data.

The package has four parts:

- ``codec``: LT encoding and BP/ML decoding over GF(2), with an optional
  dense pre-code.
- ``layered``: the three layered-protection schemes (progressive packing,
  separate per-layer FEC, layer-aware FEC) built on the codec.
- ``analysis``: exact and asymptotic recovery probabilities for the
  schemes, plus machine-checkable monotonicity and convergence lemmas.
- ``simulate``: Monte-Carlo erasure-channel experiments measuring
  post-recovery packet loss rates and buffering times.

``layerfec.cli`` is the experiment runner (``layerfec analyze|simulate|verify``).
"""

from .codec import (
    DecodeReport,
    DegreeDistribution,
    EncodingSymbol,
    RatelessCode,
    bp_decode,
    ideal_decode_threshold,
    lt_encode,
    ml_decode,
    robust_soliton,
    symbol_neighbors,
)
from .exceptions import (
    ConfigError,
    DataError,
    FormatError,
    LayerFecError,
    ParameterError,
    PlanError,
)
from .layered import (
    BaselineBlock,
    DecoderMode,
    LayerPlan,
    PrcOutputSymbol,
    Scheme,
    StreamConfig,
    baseline_decode_block,
    baseline_encode_block,
    plan_layers,
    prc_decode_block,
    prc_encode_block,
)

__version__ = "0.1.0"
__all__ = [name for name in dir() if not name.startswith("_")]
