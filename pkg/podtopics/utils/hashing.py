"""Content hashing for manifests and the stage cache."""
import hashlib
import json
from pathlib import Path
from typing import Any, Union

CHUNK_SIZE = 1 << 20


def sha256_file(path: Union[str, Path]) -> str:
    """
    Hash a file's bytes.

    Args:
        path: File to hash

    Returns:
        Hex SHA-256 digest
    """
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(CHUNK_SIZE), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_json(value: Any) -> str:
    """Hash a JSON-serializable value independently of dict ordering."""
    return sha256_text(json.dumps(value, sort_keys=True, separators=(",", ":"), default=str))
