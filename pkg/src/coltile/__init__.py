"""Columnar vector tiles: storage codec, in-memory vectors, vectorized
filtering, an MVT baseline codec, and a benchmark CLI."""

from .corpus import CorpusSpec, generate_corpus
from .encodings import EncodingProfile, LogicalEncoding, PhysicalEncoding
from .filters import (
    evaluate,
    evaluate_tuple_at_a_time,
    load_filter_suite,
    parse_filter,
)
from .filters import compile as compile_filter
from .memory import load_vector_tables
from .model import (
    AttributeScope,
    Column,
    FeatureTable,
    Geometry,
    GeometryType,
    ListType,
    ScalarType,
    StructType,
    Tile,
    TileCoord,
    ring_signed_area,
    validate_table,
)
from .mvt import mvt_parse, mvt_write
from .storage import decode_tile, encode_tile

__version__ = "0.1.0"

__all__ = [
    "AttributeScope",
    "Column",
    "CorpusSpec",
    "EncodingProfile",
    "FeatureTable",
    "Geometry",
    "GeometryType",
    "ListType",
    "LogicalEncoding",
    "PhysicalEncoding",
    "ScalarType",
    "StructType",
    "Tile",
    "TileCoord",
    "__version__",
    "compile_filter",
    "decode_tile",
    "encode_tile",
    "evaluate",
    "evaluate_tuple_at_a_time",
    "generate_corpus",
    "load_filter_suite",
    "load_vector_tables",
    "mvt_parse",
    "mvt_write",
    "parse_filter",
    "ring_signed_area",
    "validate_table",
]
