"""Per-token gate extraction and the static attribution report.

For a molecule and a task, the record carries the task's gate value at
every content token. BOS/EOS positions are excluded from gating by the
model itself; their (zero) gates are kept in a separate record field and
never highlighted. The report is a single self-contained HTML document:
token backgrounds shade red with min-max normalized weight, the top
fraction by weight is outlined as salient, and the raw weights appear
verbatim in a table. A sidecar file holds one JSON record per line.
"""

from __future__ import annotations

import html
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import stable_sigmoid
from .model import Model
from .tokenizer import Vocabulary, encode, tokenize, validate

__all__ = [
    "AttributionRecord",
    "attribute",
    "task_contrast",
    "render_report",
    "write_records",
    "read_records",
    "DEFAULT_TOP_FRACTION",
]

DEFAULT_TOP_FRACTION = 0.15


@dataclass
class AttributionRecord:
    smiles: str
    task: str
    tokens: list[str]
    weights: list[float]
    probability: float
    fingerprint: str
    special_weights: dict[str, float] = field(default_factory=dict)  # bos/eos

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "AttributionRecord":
        return cls(**json.loads(line))


def attribute(
    model: Model, vocab: Vocabulary, smiles: str, task_index: int
) -> AttributionRecord:
    """Eval-mode gates for one molecule under one task head.

    The sequence is encoded at its exact framed length (no PAD), so the
    record cannot depend on any batching max_len.
    """
    if not 0 <= task_index < model.n_tasks:
        raise ValueError(
            f"task index {task_index} out of range for {model.n_tasks} tasks"
        )
    faults = validate(smiles)
    if faults:
        raise ValueError(f"invalid SMILES {smiles!r}: {'; '.join(faults)}")
    seq = tokenize(smiles)
    length = len(seq.tokens) + 2
    if length > model.config.max_len:
        raise ValueError(
            f"molecule needs {length} positions, model max_len is "
            f"{model.config.max_len}"
        )
    ids, valid = encode(seq, vocab, max_len=length)
    _, outputs = model.forward(ids[None, :], valid[None, :], training=False)
    out = outputs[task_index]
    gates = out.mask.data[0]
    return AttributionRecord(
        smiles=smiles,
        task=model.task_names[task_index],
        tokens=list(seq.tokens),
        weights=[float(w) for w in gates[1 : length - 1]],
        probability=float(stable_sigmoid(out.logit.data[0])),
        fingerprint=model.fingerprint(),
        special_weights={"bos": float(gates[0]), "eos": float(gates[length - 1])},
    )


def task_contrast(
    model: Model, vocab: Vocabulary, smiles: str, task_i: int, task_j: int
) -> tuple[AttributionRecord, AttributionRecord, list[float]]:
    """Aligned pair of records plus their per-token weight difference."""
    if task_i == task_j:
        raise ValueError("task_contrast needs two distinct tasks")
    rec_i = attribute(model, vocab, smiles, task_i)
    rec_j = attribute(model, vocab, smiles, task_j)
    diff = [wi - wj for wi, wj in zip(rec_i.weights, rec_j.weights)]
    return rec_i, rec_j, diff


def _normalized(weights: list[float]) -> tuple[list[float], bool]:
    lo, hi = min(weights), max(weights)
    if hi == lo:
        return [0.0] * len(weights), True
    return [(w - lo) / (hi - lo) for w in weights], False


def _salient_indices(weights: list[float], top_fraction: float) -> set[int]:
    k = max(1, int(np.ceil(top_fraction * len(weights))))
    order = sorted(range(len(weights)), key=lambda i: (-weights[i], i))
    return set(order[:k])


_PAGE = """<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>Token attribution report</title>
<style>
body {{ font-family: sans-serif; margin: 2em; }}
.tokens {{ font-family: monospace; font-size: 1.4em; line-height: 2.2; }}
.tok {{ padding: 2px 1px; border-radius: 3px; }}
.salient {{ outline: 2px solid #b30000; }}
table {{ border-collapse: collapse; margin: 0.8em 0 2em; }}
td, th {{ border: 1px solid #bbb; padding: 2px 8px; font-size: 0.85em; }}
.note {{ color: #555; font-style: italic; }}
</style></head>
<body>
<h1>Token attribution report</h1>
{sections}
</body></html>
"""


def render_report(
    records: list[AttributionRecord],
    top_fraction: float = DEFAULT_TOP_FRACTION,
) -> str:
    """Self-contained HTML: one section per record, in input order."""
    if not records:
        raise ValueError("no attribution records to render")
    if not 0.0 < top_fraction <= 1.0:
        raise ValueError("top_fraction must be in (0, 1]")
    sections = []
    for rec in records:
        intensity, degenerate = _normalized(rec.weights)
        salient = set() if degenerate else _salient_indices(rec.weights, top_fraction)
        spans = []
        for i, (tok, level) in enumerate(zip(rec.tokens, intensity)):
            classes = "tok salient" if i in salient else "tok"
            spans.append(
                f'<span class="{classes}" '
                f'style="background: rgba(255,0,0,{level:.3f})">'
                f"{html.escape(tok)}</span>"
            )
        note = (
            '<p class="note">All weights equal; no highlighting.</p>'
            if degenerate
            else ""
        )
        weight_cells = "".join(f"<td>{w!r}</td>" for w in rec.weights)
        token_cells = "".join(f"<td>{html.escape(t)}</td>" for t in rec.tokens)
        sections.append(
            f"<h2>{html.escape(rec.smiles)} &mdash; task "
            f"{html.escape(rec.task)}</h2>\n"
            f"<p>predicted probability {rec.probability:.4f}, model "
            f"{rec.fingerprint}, BOS gate {rec.special_weights.get('bos', 0):.4f}, "
            f"EOS gate {rec.special_weights.get('eos', 0):.4f}</p>\n"
            f'<div class="tokens">{"".join(spans)}</div>\n{note}'
            f"<table><tr><th>token</th>{token_cells}</tr>"
            f"<tr><th>weight</th>{weight_cells}</tr></table>"
        )
    return _PAGE.format(sections="\n".join(sections))


def write_records(path: str | Path, records: list[AttributionRecord]) -> None:
    Path(path).write_text(
        "".join(rec.to_json() + "\n" for rec in records), encoding="utf-8"
    )


def read_records(path: str | Path) -> list[AttributionRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [AttributionRecord.from_json(line) for line in lines if line]
