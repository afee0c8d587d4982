"""Synthetic SMILES corpora with motif-determined labels.

Molecules are built token-by-token, so every string is lexically valid by
construction and the tokenizer round-trips it exactly. Task labels are
defined by the presence of injected motif tokens (for example ``Br`` or
``[O-]``); the base atom pool never produces those motifs by accident, so
the label rule is exact. Datasets are written in the MoleculeNet CSV
layout (one SMILES column, one column per task, empty cell = unlabeled),
which keeps every consumer on the real ingestion path.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = ["random_molecule", "random_corpus", "motif_dataset", "write_dataset_csv"]

# No bare "B" and no brackets here: the Br and [O-] motifs can only appear
# by injection, so motif presence is exactly the injection event.
_CHAIN_ATOMS = ("C", "C", "C", "C", "C", "N", "N", "O", "O", "S", "F", "Cl", "c")
_BONDS = ("", "", "", "", "=", "#")
_RING_DIGITS = ("1", "2", "3", "%10", "%12")


def random_molecule(
    rng: np.random.Generator,
    motifs: tuple[str, ...] = (),
    min_atoms: int = 4,
    max_atoms: int = 18,
) -> str:
    """One lexically valid SMILES string with each motif spliced in once."""
    n_atoms = int(rng.integers(min_atoms, max_atoms + 1))
    parts: list[str] = []
    open_rings: list[str] = []
    depth = 0
    placed = 0

    def place_atom() -> None:
        nonlocal placed
        parts.append(_CHAIN_ATOMS[int(rng.integers(len(_CHAIN_ATOMS)))])
        placed += 1

    place_atom()
    if rng.random() < 0.3:
        digit = _RING_DIGITS[int(rng.integers(len(_RING_DIGITS)))]
        parts.append(digit)
        open_rings.append(digit)
    while placed < n_atoms:
        roll = rng.random()
        if roll < 0.12 and depth < 2 and n_atoms - placed >= 2:
            parts.append("(")
            depth += 1
        elif roll < 0.22 and depth > 0:
            parts.append(")")
            depth -= 1
        else:
            bond = _BONDS[int(rng.integers(len(_BONDS)))]
            if bond and parts[-1] not in ("(", "=", "#"):
                parts.append(bond)
            place_atom()
            if open_rings and rng.random() < 0.3:
                parts.append(open_rings.pop())
    while depth > 0:
        parts.append(")")
        depth -= 1
    parts.extend(open_rings)

    for motif in motifs:
        # Splice inline at a token boundary: the motif adds no parentheses
        # or ring digits, so balance is preserved, and no neighboring token
        # becomes correlated with the label.
        pos = int(rng.integers(1, len(parts) + 1))
        parts[pos:pos] = [motif]
    return "".join(parts)


def random_corpus(rng: np.random.Generator, n: int,
                  motif_pool: tuple[str, ...] = ("Br", "[O-]", "[NH3+]")) -> list[str]:
    """Fuzz corpus mixing plain molecules with motif-bearing ones."""
    corpus = []
    for _ in range(n):
        motifs = tuple(m for m in motif_pool if rng.random() < 0.3)
        corpus.append(random_molecule(rng, motifs=motifs))
    return corpus


def motif_dataset(
    n_rows: int,
    task_motifs: dict[str, tuple[str, ...]],
    seed: int,
    inject_prob: float = 0.5,
    missing_rate: float = 0.0,
    min_atoms: int = 4,
    max_atoms: int = 18,
) -> tuple[list[str], list[str], list[list[str]]]:
    """Rows for a motif-labeled dataset.

    ``task_motifs`` maps task name -> motif tokens; a task's label is 1
    when any of its motifs is present. Returns (task_names, smiles, cells)
    where cells hold CSV label strings ('' meaning unlabeled).
    """
    rng = np.random.default_rng(seed)
    task_names = list(task_motifs)
    all_motifs = sorted({m for motifs in task_motifs.values() for m in motifs})
    smiles_rows: list[str] = []
    cell_rows: list[list[str]] = []
    for _ in range(n_rows):
        present = tuple(m for m in all_motifs if rng.random() < inject_prob)
        smiles = random_molecule(rng, motifs=present,
                                 min_atoms=min_atoms, max_atoms=max_atoms)
        cells = []
        for name in task_names:
            label = "1" if any(m in present for m in task_motifs[name]) else "0"
            if missing_rate > 0.0 and rng.random() < missing_rate:
                label = ""
            cells.append(label)
        smiles_rows.append(smiles)
        cell_rows.append(cells)
    return task_names, smiles_rows, cell_rows


def write_dataset_csv(
    path: str | Path,
    task_names: list[str],
    smiles_rows: list[str],
    cell_rows: list[list[str]],
    smiles_column: str = "smiles",
) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([smiles_column, *task_names])
        for smiles, cells in zip(smiles_rows, cell_rows):
            writer.writerow([smiles, *cells])
    return path
