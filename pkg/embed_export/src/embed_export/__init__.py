from .encoders import EncoderUnavailableError, get_encoder
from .export import export_embeddings
from .ppte import validate_table, write_table
from .taxonomy import read_class_names
from .template import DEFAULT_PATTERN, PromptTemplate

__all__ = [
    "DEFAULT_PATTERN",
    "EncoderUnavailableError",
    "PromptTemplate",
    "export_embeddings",
    "get_encoder",
    "read_class_names",
    "validate_table",
    "write_table",
]
