from pathlib import Path
from typing import Iterable

import pandas as pd

from .base.table_helper import TableHelper

import logging
logger = logging.getLogger(__name__)

class CSVHelper(TableHelper):
    """
    CSV-directory implementation of TableHelper interface.
    Each table is one `<name>.csv` file under `out_dir`.
    Floats are written with a fixed repr so that identical runs give identical files.
    """

    FLOAT_FORMAT = "%.17g"

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)

    def full_table_name(self, table: str) -> Path:
        """
        Returns the file path of a table. A name already ending in `.csv` is kept as is.

        Args:
            table (str): Table name with or without the `.csv` suffix.

        Returns:
            Path: Path of the CSV file.
        """
        if table.endswith(".csv"):
            return self.out_dir / table
        return self.out_dir / f"{table}.csv"

    def table_to_df(self, table: str, columns: Iterable | None = None) -> pd.DataFrame:
        """
        Read a CSV table to a pandas DataFrame.

        Args:
            table (str): Table name.
            columns (Iterable | None): Optional subset of columns.

        Returns:
            pd.DataFrame: Resulting data.
        """
        table_full = self.full_table_name(table)
        usecols = list(columns) if columns is not None else None
        return pd.read_csv(table_full, usecols=usecols, float_precision="round_trip")

    def df_to_table(self, df: pd.DataFrame, table: str, truncate: bool = True) -> Path:
        """
        Write a pandas DataFrame to a CSV table.

        Args:
            df (pd.DataFrame): DataFrame to write.
            table (str): Target table name.
            truncate (bool): If True, the file is replaced; otherwise rows are appended
                and the header is written only for a new file.

        Returns:
            Path: Written file.
        """
        table_full = self.full_table_name(table)
        table_full.parent.mkdir(parents=True, exist_ok=True)
        if truncate or not table_full.exists():
            df.to_csv(table_full, index=False, float_format=self.FLOAT_FORMAT)
        else:
            existing_cols = list(pd.read_csv(table_full, nrows=0).columns)
            if existing_cols != list(df.columns):
                raise ValueError(
                    f"Columns {list(df.columns)} do not match existing table {table_full} columns {existing_cols}"
                )
            df.to_csv(table_full, index=False, header=False, mode="a", float_format=self.FLOAT_FORMAT)
        logger.info(f"Loaded {len(df)} rows to {table_full}")
        return table_full

    def check_duplicates(
        self,
        table: str,
        key_columns: Iterable,
        raise_error: bool = False
    ) -> bool:
        """
        Checks for duplicates in a CSV table based on key columns.

        Args:
            table (str): Table name.
            key_columns (Iterable): Unique key columns.
            raise_error (bool): If True, raise error on duplicates.

        Returns:
            bool: True if duplicates exist, else False.
        """
        key_columns = [key_columns] if isinstance(key_columns, str) else list(key_columns)
        df = self.table_to_df(table, columns=key_columns)
        duplicate_count = int(df.duplicated(subset=key_columns).sum())

        if duplicate_count > 0:
            message = f"Found {duplicate_count} duplicated values in {self.full_table_name(table)} based on key: {key_columns}"
            if raise_error:
                raise ValueError(message)
            else:
                logger.warning(message)
            return True

        return False

    def list_tables(self) -> list[str]:
        if not self.out_dir.exists():
            return []
        return sorted(p.stem for p in self.out_dir.glob("*.csv"))
