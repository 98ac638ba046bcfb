"""Reference trainer: evaluates architecture documents over the line protocol."""

from .data import load_pairs, make_toy_dataset
from .model import DocumentError, GeneratorFromDocument, PatchDiscriminator, validate_document
from .serve import serve
from .session import RequestError, TrainerSession, handle_request

__version__ = "0.1.0"
