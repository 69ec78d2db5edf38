"""
A module for draw store in the app.db package.
"""

import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.config.config import get_init_settings
from app.config.init_settings import InitSettings
from app.exceptions.exceptions import StoreError
from app.schemas.arrays import FloatArray
from app.schemas.chain import ChainCheckpoint
from app.utils.io_utils import read_csv, read_json, write_csv, write_json

logger: logging.Logger = logging.getLogger(__name__)


def parse_chi(text: str) -> FloatArray:
    """
    Decode the space-separated chi column of a stored draw

    :param text: The stored text
    :type text: str
    :return: chi
    :rtype: FloatArray
    :raises StoreError: If the text is not a list of floats
    """
    try:
        return np.array([float(v) for v in str(text).split()])
    except ValueError as e:
        raise StoreError(detail=f"Malformed chi entry: {text!r}") from e


class DrawStore:
    """
    Append-only draws of one chain in a directory: a CSV of draws, a JSON
    sidecar with run metadata and a JSON checkpoint. Draws are buffered and
    reach the CSV together with each checkpoint.
    """

    def __init__(
        self, directory: Path, init_settings: InitSettings | None = None
    ):
        self.init_settings: InitSettings = init_settings or get_init_settings()
        self.directory: Path = directory
        self.draws_path: Path = directory / self.init_settings.DRAWS_FILE
        self.sidecar_path: Path = directory / self.init_settings.SIDECAR_FILE
        self.checkpoint_path: Path = (
            directory / self.init_settings.CHECKPOINT_FILE
        )
        self._pending: list[dict[str, Any]] = []

    def reset(self) -> None:
        """
        Remove earlier draws and checkpoints for a fresh run

        :return: None
        :rtype: NoneType
        """
        self.directory.mkdir(parents=True, exist_ok=True)
        for path in (self.draws_path, self.checkpoint_path):
            path.unlink(missing_ok=True)
        self._pending.clear()

    def append(self, record: dict[str, Any]) -> None:
        """
        Buffer one draw

        :param record: Column name to value
        :type record: dict[str, Any]
        :return: None
        :rtype: NoneType
        """
        self._pending.append(record)

    def flush(self) -> None:
        """
        Append the buffered draws to the CSV

        :return: None
        :rtype: NoneType
        """
        if not self._pending:
            return
        write_csv(
            pd.DataFrame.from_records(self._pending),
            self.draws_path,
            self.init_settings.CSV_FLOAT_FORMAT,
            append=True,
        )
        logger.debug(f"Wrote {len(self._pending)} draws to {self.draws_path}")
        self._pending.clear()

    def write_checkpoint(self, checkpoint: ChainCheckpoint) -> None:
        """
        Flush the draws, then persist the chain checkpoint

        :param checkpoint: The checkpoint
        :type checkpoint: ChainCheckpoint
        :return: None
        :rtype: NoneType
        """
        self.flush()
        write_json(checkpoint.model_dump(mode="json"), self.checkpoint_path)

    def load_checkpoint(self) -> ChainCheckpoint | None:
        """
        The last persisted checkpoint

        :return: The checkpoint, None when the chain never checkpointed
        :rtype: ChainCheckpoint | None
        :raises StoreError: If the checkpoint is unreadable
        """
        if not self.checkpoint_path.exists():
            return None
        try:
            return ChainCheckpoint.model_validate(
                read_json(self.checkpoint_path)
            )
        except ValidationError as e:
            raise StoreError(
                detail=f"Invalid checkpoint {self.checkpoint_path}: {e}"
            ) from e

    def truncate(self, iteration: int) -> int:
        """
        Drop stored draws from iterations at or after a checkpoint

        :param iteration: First iteration to drop
        :type iteration: int
        :return: Number of draws kept
        :rtype: int
        """
        self._pending.clear()
        if not self.draws_path.exists():
            return 0
        frame: pd.DataFrame = read_csv(self.draws_path)
        kept: pd.DataFrame = frame[frame["iter"] < iteration]
        if len(kept) < len(frame):
            logger.info(
                f"Dropping {len(frame) - len(kept)} draws written after the"
                " checkpoint"
            )
            write_csv(
                kept, self.draws_path, self.init_settings.CSV_FLOAT_FORMAT
            )
        return len(kept)

    def write_metadata(self, metadata: dict[str, Any]) -> None:
        """
        Write the JSON sidecar

        :param metadata: Configuration, seed and acceptance statistics
        :type metadata: dict[str, Any]
        :return: None
        :rtype: NoneType
        """
        write_json(metadata, self.sidecar_path)

    def read_metadata(self) -> dict[str, Any]:
        """
        Read the JSON sidecar

        :return: The metadata
        :rtype: dict[str, Any]
        :raises StoreError: If the store has no sidecar
        """
        if not self.sidecar_path.exists():
            raise StoreError(detail=f"No draw store in {self.directory}")
        metadata: dict[str, Any] = read_json(self.sidecar_path)
        return metadata

    def read_draws(self) -> pd.DataFrame:
        """
        All stored draws; a store whose chain ran no stored iteration yields
         an empty table

        :return: The draws
        :rtype: pd.DataFrame
        :raises StoreError: If the directory holds no store
        """
        if not self.draws_path.exists():
            if not self.sidecar_path.exists():
                raise StoreError(detail=f"No draw store in {self.directory}")
            return pd.DataFrame()
        return read_csv(self.draws_path)
