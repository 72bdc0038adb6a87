"""embex: extraction adapter producing latentdelta-compatible files.

Turns image folders and prompt lists into embedding bundles, text-embedding
rows, and probe tables, using either deterministic fixture-grade featurizers
(default, no downloads) or real encoders plugged in through the registry.
The adapter never normalizes embeddings; that convention belongs to the
consuming engine.
"""

from .extract import (ExtractionJob, extract_images, extract_texts,
                      write_probe_table)
from .formats import write_bundle, write_rows

__version__ = "0.1.0"
