"""CSV dataset ingestion (MoleculeNet layout) and batch preparation.

A dataset file has a header row, one SMILES column, and one column per
task. Empty or NA cells mean "no label" and set the label indicator to 0;
labeled cells must be 0/1 (also accepting the 0.0/1.0 float spellings).
Rows whose SMILES fails lexical validation are skipped and counted.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .splitting import SplitPlan
from .tokenizer import Vocabulary, encode, tokenize, validate

__all__ = [
    "DataError",
    "DatasetTable",
    "EncodedDataset",
    "load_dataset",
    "encode_dataset",
    "save_split_manifest",
    "load_split_manifest",
]

_NA_CELLS = frozenset({"", "na", "nan", "none", "null"})
_LABEL_CELLS = {"0": 0.0, "0.0": 0.0, "1": 1.0, "1.0": 1.0}


class DataError(ValueError):
    """Dataset file violates the ingestion contract."""


@dataclass
class DatasetTable:
    """Ingested rows: labels and presence indicators are [N, K] float arrays."""

    smiles: list[str]
    labels: np.ndarray
    labeled: np.ndarray
    task_names: list[str]
    n_skipped_invalid: int = 0

    def __len__(self) -> int:
        return len(self.smiles)

    def subset_tasks(self, names: list[str]) -> "DatasetTable":
        """View restricted to the given task columns (for single-task runs)."""
        cols = [self.task_names.index(n) for n in names]
        return DatasetTable(
            smiles=list(self.smiles),
            labels=self.labels[:, cols].copy(),
            labeled=self.labeled[:, cols].copy(),
            task_names=list(names),
            n_skipped_invalid=self.n_skipped_invalid,
        )


def load_dataset(
    path: str | Path, smiles_column: str, task_columns: list[str]
) -> DatasetTable:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    if not task_columns:
        raise DataError("at least one task column is required")
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"dataset file {path} is empty") from None
        missing = [c for c in [smiles_column, *task_columns] if c not in header]
        if missing:
            raise DataError(
                f"columns {missing} not in header {header} of {path}"
            )
        smiles_idx = header.index(smiles_column)
        task_idx = [header.index(c) for c in task_columns]

        smiles_rows: list[str] = []
        label_rows: list[list[float]] = []
        labeled_rows: list[list[float]] = []
        n_skipped = 0
        for row_no, row in enumerate(reader, start=2):
            smiles = row[smiles_idx].strip() if smiles_idx < len(row) else ""
            if validate(smiles):
                n_skipped += 1
                continue
            y_row, d_row = [], []
            for col, col_name in zip(task_idx, task_columns):
                cell = row[col].strip() if col < len(row) else ""
                if cell.lower() in _NA_CELLS:
                    y_row.append(0.0)
                    d_row.append(0.0)
                elif cell in _LABEL_CELLS:
                    y_row.append(_LABEL_CELLS[cell])
                    d_row.append(1.0)
                else:
                    raise DataError(
                        f"line {row_no}, column {col_name!r}: label cell "
                        f"{cell!r} is not 0/1/empty"
                    )
            smiles_rows.append(smiles)
            label_rows.append(y_row)
            labeled_rows.append(d_row)
    if not smiles_rows:
        raise DataError(f"no valid rows survived ingestion of {path}")
    return DatasetTable(
        smiles=smiles_rows,
        labels=np.asarray(label_rows, dtype=np.float64),
        labeled=np.asarray(labeled_rows, dtype=np.float64),
        task_names=list(task_columns),
        n_skipped_invalid=n_skipped,
    )


@dataclass
class EncodedDataset:
    """Token ids and masks for every retained row, ready for batching."""

    ids: np.ndarray          # [N, max_len] int64
    valid_mask: np.ndarray   # [N, max_len] float64
    labels: np.ndarray       # [N, K]
    labeled: np.ndarray      # [N, K]
    smiles: list[str]
    task_names: list[str]
    n_skipped_too_long: int = 0
    kept_rows: list[int] = field(default_factory=list)   # original table rows

    def __len__(self) -> int:
        return self.ids.shape[0]


def encode_dataset(
    table: DatasetTable, vocab: Vocabulary, max_len: int
) -> EncodedDataset:
    """Encode every row that fits; over-long rows are dropped with a count.

    The drop policy keeps arbitrary real-world CSVs runnable; the kept-row
    list records the surviving original indices so splits stay aligned.
    Rows are padded only to the longest kept sequence (never past
    ``max_len``): attention cost is quadratic in the padded width, and PAD
    columns shared by every row carry no information.
    """
    seqs, kept = [], []
    too_long = 0
    for i, smiles in enumerate(table.smiles):
        seq = tokenize(smiles)
        if len(seq.tokens) + 2 > max_len:
            too_long += 1
            continue
        seqs.append(seq)
        kept.append(i)
    if not seqs:
        raise DataError(f"every row exceeds max_len={max_len}")
    width = max(len(seq.tokens) + 2 for seq in seqs)
    ids_rows, valid_rows = [], []
    for seq in seqs:
        ids, valid = encode(seq, vocab, width)
        ids_rows.append(ids)
        valid_rows.append(valid)
    return EncodedDataset(
        ids=np.stack(ids_rows),
        valid_mask=np.stack(valid_rows),
        labels=table.labels[kept],
        labeled=table.labeled[kept],
        smiles=[table.smiles[i] for i in kept],
        task_names=list(table.task_names),
        n_skipped_too_long=too_long,
        kept_rows=kept,
    )


def save_split_manifest(path: str | Path, plan: SplitPlan, n_rows: int,
                        seed: int, test_fraction: float) -> None:
    payload = {
        "version": 1,
        "n_rows": n_rows,
        "seed": seed,
        "test_fraction": test_fraction,
        "train": plan.train_idx,
        "test": plan.test_idx,
    }
    Path(path).write_text(json.dumps(payload, indent=None, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_split_manifest(path: str | Path, n_rows: int) -> SplitPlan:
    """Read a manifest and check it against the dataset it will index."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read split manifest {path}: {exc}") from exc
    if payload.get("n_rows") != n_rows:
        raise DataError(
            f"split manifest row count {payload.get('n_rows')} does not match "
            f"dataset row count {n_rows}"
        )
    train = [int(i) for i in payload["train"]]
    test = [int(i) for i in payload["test"]]
    all_idx = train + test
    if any(i < 0 or i >= n_rows for i in all_idx):
        raise DataError("split manifest references a row index out of range")
    if set(train) & set(test):
        raise DataError("split manifest train/test sets overlap")
    return SplitPlan(train_idx=train, test_idx=test)
