"""distmap: next-token probability records mapped onto the unit interval.

Per position, the observed token owns the sub-interval of [0, 1] that sits
after the mass of all strictly-more-likely tokens and has width equal to
its own probability. A uniform draw inside that interval gives a sample
that is exactly uniform when the text really was sampled from the
evaluating distribution, which turns decoding-parameter claims into a
plain goodness-of-fit test.
"""

from .decoding import DecodingSpec, Temperature, TopK, TopP, apply_spec, apply_temperature, apply_top_k, apply_top_p, entropy
from .engine import (
    DmapInterval,
    DmapSample,
    EngineConfig,
    MapResult,
    StepDensity,
    bin_density,
    filter_by_entropy,
    interval_for,
    map_streams,
    map_text,
    sample_point,
    weighted_density,
)
from .errors import EmptyInputError, FormatError, ImpossibleToken, ParameterError
from .records import (
    FullDistributionRecord,
    TextRecordStream,
    TokenDistributionSummary,
    canonical_order,
    compact_from_full,
    parse_stream,
    serialize_compact,
    serialize_full,
)
from .stats import (
    ShapeSummary,
    ShapeThresholds,
    UniformityReport,
    chi_square_log10_pvalue,
    chi_square_pvalue,
    chi_square_stat,
    frequencies,
    shape_summary,
    terrell_scott_bins,
    validate_generation,
)
from .toylm import CategoricalLM, GenerationRun, NullSummary, evaluate, generate, monte_carlo_null, random_model

__version__ = "0.1.0"

__all__ = [
    "CategoricalLM",
    "DecodingSpec",
    "DmapInterval",
    "DmapSample",
    "EmptyInputError",
    "EngineConfig",
    "FormatError",
    "FullDistributionRecord",
    "GenerationRun",
    "ImpossibleToken",
    "MapResult",
    "NullSummary",
    "ParameterError",
    "ShapeSummary",
    "ShapeThresholds",
    "StepDensity",
    "Temperature",
    "TextRecordStream",
    "TokenDistributionSummary",
    "TopK",
    "TopP",
    "UniformityReport",
    "apply_spec",
    "apply_temperature",
    "apply_top_k",
    "apply_top_p",
    "bin_density",
    "canonical_order",
    "chi_square_log10_pvalue",
    "chi_square_pvalue",
    "chi_square_stat",
    "compact_from_full",
    "entropy",
    "evaluate",
    "filter_by_entropy",
    "frequencies",
    "generate",
    "interval_for",
    "map_streams",
    "map_text",
    "monte_carlo_null",
    "parse_stream",
    "random_model",
    "sample_point",
    "serialize_compact",
    "serialize_full",
    "shape_summary",
    "terrell_scott_bins",
    "validate_generation",
    "weighted_density",
]
