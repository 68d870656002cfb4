"""Utility functions."""
from podtopics.utils.hashing import sha256_file, sha256_json, sha256_text
from podtopics.utils.matrix_io import (
    write_triplets,
    read_triplets,
    write_dense_binary,
    read_dense_binary,
)

__all__ = [
    "sha256_file",
    "sha256_json",
    "sha256_text",
    "write_triplets",
    "read_triplets",
    "write_dense_binary",
    "read_dense_binary",
]
