"""Atom-level SMILES tokenization, lexical validation, and vocabulary.

Tokenization is a deterministic longest-match scan: bracket atoms
``[...]`` are single tokens, the two-letter elements ``Cl``/``Br`` never
split, ``%NN`` ring closures are single tokens, and every remaining
character is one token. Joining the tokens always reproduces the input
string exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TokenizeError",
    "VocabError",
    "TokenSequence",
    "Vocabulary",
    "tokenize",
    "validate",
    "build_vocab",
    "encode",
    "decode",
    "PAD_ID",
    "BOS_ID",
    "EOS_ID",
    "UNK_ID",
]

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3
_RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

# Single-character tokens: organic-subset elements, aromatic forms, ring
# digits, branches, bonds, and structural punctuation.
_SINGLE_CHARS = frozenset("BCNOPSFIbcnosp0123456789()=#-+./\\@:~*$")


class TokenizeError(ValueError):
    """Input is not lexically valid SMILES."""


class VocabError(ValueError):
    """Vocabulary construction or lookup failed."""


@dataclass
class TokenSequence:
    """Tokens of one SMILES string; ids stay unresolved until encoding."""

    tokens: list[str]
    ids: list[int] | None = None

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize(smiles: str) -> TokenSequence:
    """Split a SMILES string into atom-level tokens.

    Raises TokenizeError on empty input, characters outside the SMILES
    alphabet, unterminated brackets, or a malformed ``%`` ring closure.
    """
    if not smiles:
        raise TokenizeError("empty SMILES string")
    tokens: list[str] = []
    i = 0
    n = len(smiles)
    while i < n:
        ch = smiles[i]
        if ch == "[":
            end = smiles.find("]", i + 1)
            if end < 0:
                raise TokenizeError(f"unterminated bracket atom at position {i}")
            tokens.append(smiles[i : end + 1])
            i = end + 1
        elif ch == "C" and i + 1 < n and smiles[i + 1] == "l":
            tokens.append("Cl")
            i += 2
        elif ch == "B" and i + 1 < n and smiles[i + 1] == "r":
            tokens.append("Br")
            i += 2
        elif ch == "%":
            if i + 2 >= n or not smiles[i + 1 : i + 3].isdigit():
                raise TokenizeError(
                    f"ring closure '%' at position {i} needs two digits"
                )
            tokens.append(smiles[i : i + 3])
            i += 3
        elif ch in _SINGLE_CHARS:
            tokens.append(ch)
            i += 1
        else:
            raise TokenizeError(
                f"character {ch!r} at position {i} is outside the SMILES alphabet"
            )
    return TokenSequence(tokens=tokens)


def validate(smiles: str) -> list[str]:
    """Lexical validity check; returns a list of faults (empty when clean).

    Checks tokenizability, balanced parentheses, and paired ring-closure
    digits. Never raises.
    """
    faults: list[str] = []
    try:
        seq = tokenize(smiles)
    except TokenizeError as exc:
        return [str(exc)]
    depth = 0
    open_rings: set[str] = set()
    for pos, tok in enumerate(seq.tokens):
        if tok == "(":
            depth += 1
        elif tok == ")":
            depth -= 1
            if depth < 0:
                faults.append(f"unmatched ')' at token {pos}")
                depth = 0
        elif tok.isdigit() or tok.startswith("%"):
            ring = tok.lstrip("%")
            if ring in open_rings:
                open_rings.remove(ring)
            else:
                open_rings.add(ring)
    if depth > 0:
        faults.append(f"{depth} unclosed '(' branch(es)")
    for ring in sorted(open_rings):
        faults.append(f"ring closure {ring} opened but never closed")
    return faults


@dataclass
class Vocabulary:
    """Token table with four reserved ids: pad=0, bos=1, eos=2, unk=3."""

    tokens: list[str] = field(default_factory=list)
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._index = {tok: i + len(_RESERVED) for i, tok in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise VocabError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens) + len(_RESERVED)

    def id_for(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def token_for(self, token_id: int) -> str:
        if 0 <= token_id < len(_RESERVED):
            return _RESERVED[token_id]
        idx = token_id - len(_RESERVED)
        if 0 <= idx < len(self.tokens):
            return self.tokens[idx]
        raise VocabError(f"token id {token_id} out of range")

    def save(self, path: str | Path) -> None:
        """One token per line, UTF-8, LF; line number == id - 4."""
        Path(path).write_bytes(
            b"".join(tok.encode("utf-8") + b"\n" for tok in self.tokens)
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        text = Path(path).read_bytes().decode("utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(tokens=lines)


def build_vocab(corpus: Iterable[str]) -> Vocabulary:
    """Count tokens over a corpus; order by descending frequency then text.

    Rows that fail to tokenize are ignored; if every row fails (or the
    corpus is empty) a VocabError is raised.
    """
    counts: dict[str, int] = {}
    any_row = False
    for smiles in corpus:
        try:
            seq = tokenize(smiles)
        except TokenizeError:
            continue
        any_row = True
        for tok in seq.tokens:
            counts[tok] = counts.get(tok, 0) + 1
    if not any_row:
        raise VocabError("no tokenizable rows in corpus")
    ordered = sorted(counts, key=lambda tok: (-counts[tok], tok))
    return Vocabulary(tokens=ordered)


def encode(
    seq: TokenSequence, vocab: Vocabulary, max_len: int
) -> tuple[np.ndarray, np.ndarray]:
    """Resolve ids with BOS/EOS framing, pad to ``max_len``.

    Returns (ids, valid_mask) of length max_len; valid_mask is 1.0 at
    BOS/EOS/content positions and 0.0 at PAD. Raises ValueError when the
    framed sequence does not fit.
    """
    if len(seq.tokens) + 2 > max_len:
        raise ValueError(
            f"sequence of {len(seq.tokens)} tokens + BOS/EOS exceeds max_len={max_len}"
        )
    ids = np.full(max_len, PAD_ID, dtype=np.int64)
    ids[0] = BOS_ID
    for i, tok in enumerate(seq.tokens):
        ids[i + 1] = vocab.id_for(tok)
    ids[len(seq.tokens) + 1] = EOS_ID
    valid = np.zeros(max_len, dtype=np.float64)
    valid[: len(seq.tokens) + 2] = 1.0
    seq.ids = ids[: len(seq.tokens) + 2].tolist()
    return ids, valid


def decode(ids: Sequence[int] | np.ndarray, vocab: Vocabulary) -> list[str]:
    """Recover content tokens, dropping PAD/BOS/EOS (UNK maps to '<unk>')."""
    out = []
    for token_id in np.asarray(ids).tolist():
        if token_id in (PAD_ID, BOS_ID, EOS_ID):
            continue
        out.append(vocab.token_for(int(token_id)))
    return out
