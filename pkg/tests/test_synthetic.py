"""Tests for the synthetic SMILES corpus generator."""

import numpy as np

from toxgate.data import load_dataset
from toxgate.synthetic import (
    motif_dataset,
    random_corpus,
    random_molecule,
    write_dataset_csv,
)
from toxgate.tokenizer import tokenize, validate


def test_random_molecule_is_valid_and_round_trips():
    rng = np.random.default_rng(0)
    for _ in range(200):
        smiles = random_molecule(rng)
        assert validate(smiles) == []
        assert "".join(tokenize(smiles).tokens) == smiles


def test_random_molecule_injects_motifs():
    rng = np.random.default_rng(1)
    for _ in range(50):
        smiles = random_molecule(rng, motifs=("Br", "[O-]"))
        assert "Br" in smiles and "[O-]" in smiles
        assert validate(smiles) == []


def test_plain_molecules_never_contain_pool_motifs():
    # the undecorated generator draws from atoms that cannot spell a motif,
    # so motif substrings certify injection
    rng = np.random.default_rng(2)
    for _ in range(300):
        smiles = random_molecule(rng)
        for motif in ("Br", "[O-]", "[NH3+]"):
            assert motif not in smiles


def test_random_corpus_mixes_motifs():
    rng = np.random.default_rng(3)
    corpus = random_corpus(rng, 100)
    assert len(corpus) == 100
    assert all(validate(s) == [] for s in corpus)
    assert any("Br" in s for s in corpus)
    assert any("Br" not in s for s in corpus)


def test_motif_dataset_labels_match_motif_presence():
    tasks, smiles, cells = motif_dataset(
        120, {"br": ("Br",), "ox": ("[O-]",)}, seed=0
    )
    assert tasks == ["br", "ox"]
    assert len(smiles) == len(cells) == 120
    motif_of = {"br": "Br", "ox": "[O-]"}
    for row, row_cells in zip(smiles, cells):
        for task, cell in zip(tasks, row_cells):
            expected = "1" if motif_of[task] in row else "0"
            assert cell == expected
    positives = sum(c[0] == "1" for c in cells)
    assert 30 <= positives <= 90  # inject_prob=0.5 keeps both classes present


def test_motif_dataset_missing_rate_blanks_cells():
    _, _, cells = motif_dataset(400, {"br": ("Br",)}, seed=1, missing_rate=0.25)
    blank = sum(c[0] == "" for c in cells)
    assert 60 <= blank <= 140
    _, _, full = motif_dataset(50, {"br": ("Br",)}, seed=1)
    assert all(c[0] in ("0", "1") for c in full)


def test_motif_dataset_is_deterministic_per_seed():
    a = motif_dataset(40, {"br": ("Br",)}, seed=9, missing_rate=0.1)
    b = motif_dataset(40, {"br": ("Br",)}, seed=9, missing_rate=0.1)
    c = motif_dataset(40, {"br": ("Br",)}, seed=10, missing_rate=0.1)
    assert a == b
    assert a != c


def test_motif_dataset_any_motif_raises_label():
    _, smiles, cells = motif_dataset(
        80, {"redox": ("Br", "[O-]")}, seed=4, inject_prob=0.6
    )
    for row, row_cells in zip(smiles, cells):
        expected = "1" if ("Br" in row or "[O-]" in row) else "0"
        assert row_cells[0] == expected


def test_write_dataset_csv_round_trips_through_loader(tmp_path):
    tasks, smiles, cells = motif_dataset(
        30, {"br": ("Br",), "ox": ("[O-]",)}, seed=5, missing_rate=0.2
    )
    path = write_dataset_csv(tmp_path / "synth.csv", tasks, smiles, cells)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "smiles,br,ox"
    table = load_dataset(path, "smiles", tasks)
    assert table.smiles == smiles
    assert table.n_skipped_invalid == 0
    for i, row_cells in enumerate(cells):
        for j, cell in enumerate(row_cells):
            if cell == "":
                assert table.labeled[i, j] == 0.0
            else:
                assert table.labeled[i, j] == 1.0
                assert table.labels[i, j] == float(cell)


def test_molecule_size_bounds_are_respected():
    rng = np.random.default_rng(6)
    for _ in range(100):
        smiles = random_molecule(rng, min_atoms=4, max_atoms=6)
        n_atoms = sum(1 for t in tokenize(smiles).tokens if t not in "()=#12")
        assert 4 <= n_atoms <= 6 + 2  # ring digits/branches may add decoration


def test_motif_dataset_degenerate_sizes():
    tasks, smiles, cells = motif_dataset(0, {"br": ("Br",)}, seed=0)
    assert tasks == ["br"] and smiles == [] and cells == []
    _, smiles, _ = motif_dataset(3, {"br": ("Br",)}, seed=0,
                                 min_atoms=2, max_atoms=2)
    assert all(validate(s) == [] for s in smiles)
