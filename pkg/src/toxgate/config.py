"""Flat key=value run configuration with a closed key set.

Every tunable has an explicit key; unknown keys are hard errors so typos
cannot silently fall back to defaults. Lines starting with ``#`` and blank
lines are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text"]


class ConfigError(ValueError):
    """Configuration file violates the schema."""


def _parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


@dataclass
class RunConfig:
    """Everything one training run needs; defaults are desk-scale."""

    # data
    dataset_path: str = ""
    smiles_column: str = "smiles"
    task_columns: tuple[str, ...] = ()
    run_dir: str = ""
    test_fraction: float = 0.2
    # encoder
    hidden_dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 128
    max_len: int = 128
    dropout: float = 0.1
    # gating heads
    mask_hidden_dim: int = 0          # 0 means hidden_dim // 2
    mask_norm: str = "input"
    pool_eps: float = 1e-8
    # objective
    lam: float = 1e-3
    l1_normalize_by_length: bool = False
    pos_weight: bool = False
    # optimization
    lr: float = 3e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    freeze_backbone: bool = False

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ConfigError("lam must be nonnegative")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.mask_norm not in ("input", "hidden"):
            raise ConfigError("mask_norm must be 'input' or 'hidden'")

    def resolved_mask_hidden_dim(self) -> int:
        return self.mask_hidden_dim or max(1, self.hidden_dim // 2)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "task_columns":
                value = ",".join(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_PARSERS = {
    str: lambda raw: raw,
    int: lambda raw: int(raw),
    float: lambda raw: float(raw),
    bool: _parse_bool,
    tuple[str, ...]: lambda raw: tuple(
        c.strip() for c in raw.split(",") if c.strip()
    ),
}


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    known = {f.name: f.type for f in fields(RunConfig)}
    # dataclass field types arrive as strings under future annotations
    type_of = {
        "dataset_path": str, "smiles_column": str, "task_columns": tuple[str, ...],
        "run_dir": str, "test_fraction": float,
        "hidden_dim": int, "n_layers": int, "n_heads": int, "ffn_dim": int,
        "max_len": int, "dropout": float,
        "mask_hidden_dim": int, "mask_norm": str, "pool_eps": float,
        "lam": float, "l1_normalize_by_length": bool, "pos_weight": bool,
        "lr": float, "weight_decay": float, "beta1": float, "beta2": float,
        "adam_eps": float, "batch_size": int, "epochs": int, "seed": int,
        "freeze_backbone": bool,
    }
    assert set(type_of) == set(known)
    values: dict = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in type_of:
            raise ConfigError(f"{source}:{line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[type_of[key]](raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{line_no}: bad value for {key}: {exc}")
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))
