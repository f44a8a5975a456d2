"""Trainer-facing bindings: augment a live minibatch in process.

Images cross the boundary as shared float32 buffers (no copies on ingest);
texts cross as plain strings. Results are numerically identical to the batch
pipeline for the same seed and batch index, so a trainer that feeds batches in
a fixed order reproduces the offline shards bit for bit after quantization.
"""

from .batch import BatchView, augment_batch, make_config
from .features import concat_text_embeddings_inproc, mix_embeddings_inproc

__version__ = "0.1.0"

__all__ = [
    "BatchView",
    "augment_batch",
    "make_config",
    "mix_embeddings_inproc",
    "concat_text_embeddings_inproc",
    "__version__",
]
