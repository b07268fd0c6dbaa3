"""Nitrogen-response management zoning (C++ core)."""

from ._core import (
    ParseError,
    PreconditionError,
    StageError,
    adjusted_rand_index,
    align,
    fpca,
    fuzzy_cmeans,
    generate_synthetic,
    load_field,
    run,
    sha256_file,
    write_synthetic,
)

__all__ = [
    "ParseError",
    "PreconditionError",
    "StageError",
    "adjusted_rand_index",
    "align",
    "fpca",
    "fuzzy_cmeans",
    "generate_synthetic",
    "load_field",
    "run",
    "sha256_file",
    "write_synthetic",
]
