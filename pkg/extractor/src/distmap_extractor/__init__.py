"""Hub-model adapter producing distmap-compatible record streams."""

from .extract import ExtractionError, ExtractionJob, TextItem, extract, load_model, read_text_items, score_text
from .scoring import SpecError, apply_steps, parse_spec, record_fields, softmax64

__version__ = "0.1.0"

__all__ = [
    "ExtractionError",
    "ExtractionJob",
    "SpecError",
    "TextItem",
    "apply_steps",
    "extract",
    "load_model",
    "parse_spec",
    "read_text_items",
    "record_fields",
    "score_text",
    "softmax64",
]
