"""
A module for io utils in the app.utils package.
"""

import hashlib
import logging
import tomllib
from pathlib import Path
from typing import Any

import numpy as np
import orjson
import pandas as pd
from pydantic import BaseModel

from app.exceptions.exceptions import ConfigError, StoreError

logger: logging.Logger = logging.getLogger(__name__)

JSON_OPTIONS: int = (
    orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS
)
_INT_TAG: str = "__int__"


def write_json(data: Any, file_path: Path) -> None:
    """
    Write a JSON document, creating the parent directory

    :param data: JSON-compatible data, numpy arrays included
    :type data: Any
    :param file_path: Target file
    :type file_path: Path
    :return: None
    :rtype: NoneType
    :raises StoreError: If the file cannot be written
    """
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        file_path.write_bytes(orjson.dumps(data, option=JSON_OPTIONS))
    except (OSError, TypeError) as e:
        raise StoreError(detail=f"Cannot write {file_path}: {e}") from e


def read_json(file_path: Path) -> Any:
    """
    Read a JSON document

    :param file_path: Source file
    :type file_path: Path
    :return: The parsed document
    :rtype: Any
    :raises StoreError: If the file is missing or malformed
    """
    try:
        return orjson.loads(file_path.read_bytes())
    except (OSError, orjson.JSONDecodeError) as e:
        raise StoreError(detail=f"Cannot read {file_path}: {e}") from e


def write_csv(
    frame: pd.DataFrame,
    file_path: Path,
    float_format: str,
    append: bool = False,
) -> None:
    """
    Write a comma-separated table with a header row

    :param frame: The table
    :type frame: pd.DataFrame
    :param file_path: Target file
    :type file_path: Path
    :param float_format: printf-style float format
    :type float_format: str
    :param append: Append rows to an existing file, writing the header only
     when the file is new
    :type append: bool
    :return: None
    :rtype: NoneType
    :raises StoreError: If the file cannot be written
    """
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        header: bool = not (append and file_path.exists())
        frame.to_csv(
            file_path,
            mode="a" if append else "w",
            header=header,
            index=False,
            float_format=float_format,
        )
    except OSError as e:
        raise StoreError(detail=f"Cannot write {file_path}: {e}") from e


def read_csv(file_path: Path) -> pd.DataFrame:
    """
    Read a comma-separated table with a header row

    :param file_path: Source file
    :type file_path: Path
    :return: The table
    :rtype: pd.DataFrame
    :raises StoreError: If the file is missing or malformed
    """
    try:
        return pd.read_csv(file_path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise StoreError(detail=f"Cannot read {file_path}: {e}") from e


def load_toml(file_path: Path) -> dict[str, Any]:
    """
    Parse a TOML run configuration

    :param file_path: The configuration file
    :type file_path: Path
    :return: Nested tables
    :rtype: dict[str, Any]
    :raises ConfigError: If the file is missing or not valid TOML
    """
    try:
        with file_path.open("rb") as config_file:
            return tomllib.load(config_file)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(detail=f"Cannot load {file_path}: {e}") from e


def config_hash(config: BaseModel) -> str:
    """
    Stable digest of a configuration, used to tie outputs to their inputs

    :param config: The configuration model
    :type config: BaseModel
    :return: 16 hexadecimal characters of its SHA-256
    :rtype: str
    """
    payload: bytes = orjson.dumps(
        config.model_dump(mode="json"),
        option=orjson.OPT_SORT_KEYS | orjson.OPT_NON_STR_KEYS,
    )
    return hashlib.sha256(payload).hexdigest()[:16]


def _encode(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, np.integer)):
        return {_INT_TAG: str(int(value))}
    return value


def _decode(value: Any) -> Any:
    if isinstance(value, dict):
        if set(value) == {_INT_TAG}:
            return int(value[_INT_TAG])
        return {k: _decode(v) for k, v in value.items()}
    return value


def rng_state(rng: np.random.Generator) -> dict[str, Any]:
    """
    JSON-safe state of a generator; 128-bit integers are kept as strings

    :param rng: The generator
    :type rng: np.random.Generator
    :return: The encoded bit generator state
    :rtype: dict[str, Any]
    """
    encoded: dict[str, Any] = _encode(rng.bit_generator.state)
    return encoded


def restore_rng(state: dict[str, Any]) -> np.random.Generator:
    """
    Generator continuing from an encoded state

    :param state: Output of rng_state
    :type state: dict[str, Any]
    :return: The generator
    :rtype: np.random.Generator
    :raises StoreError: If the state does not fit a PCG64 generator
    """
    bit_generator = np.random.PCG64()
    try:
        bit_generator.state = _decode(state)
    except (TypeError, ValueError, KeyError) as e:
        raise StoreError(detail=f"Invalid generator state: {e}") from e
    return np.random.Generator(bit_generator)
