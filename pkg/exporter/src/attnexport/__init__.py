"""CLS-attention exporter for query/document cross-encoder pairs."""

__version__ = "0.1.0"

from .export import ExportJob, ExportStats, export_attention, load_texts, load_pairs
