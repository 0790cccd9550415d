from abc import ABC, abstractmethod
from pathlib import Path
from typing import Iterable

import pandas as pd

import logging
logger = logging.getLogger(__name__)


class TableHelper(ABC):
    """
    Storage of named result tables. Subclasses decide where a table lives;
    writing a whole set of tables with key checks is shared.
    """

    @abstractmethod
    def full_table_name(self, table: str) -> Path:
        """Storage location of `table`."""

    @abstractmethod
    def table_to_df(self, table: str, columns: Iterable | None = None) -> pd.DataFrame:
        """
        Args:
            table (str): Table name.
            columns (Iterable | None): Subset of columns to read, all when None.
        """

    @abstractmethod
    def df_to_table(self, df: pd.DataFrame, table: str, truncate: bool = True) -> Path:
        """
        Args:
            df (pd.DataFrame): Rows to store.
            table (str): Table name.
            truncate (bool): Replace the table when True, append rows otherwise.
        """

    @abstractmethod
    def check_duplicates(self, table: str, key_columns: Iterable, raise_error: bool = False) -> bool:
        """True when two rows of `table` share the same `key_columns` values."""

    @abstractmethod
    def list_tables(self) -> list[str]:
        pass

    def write_tables(self, tables: dict, key_candidates: Iterable = ()) -> list[Path]:
        """
        Stores every DataFrame of `tables` under its name, then checks the columns of
        `key_candidates` present in that frame for duplicated rows.

        Returns:
            list[Path]: Written locations, in the order of `tables`.
        """
        key_candidates = list(key_candidates)
        written = []
        for name, df in tables.items():
            written.append(self.df_to_table(df, name))
            keys = [c for c in key_candidates if c in df.columns]
            if keys:
                self.check_duplicates(name, keys)
        logger.info(f"Stored {len(written)} tables")
        return written
