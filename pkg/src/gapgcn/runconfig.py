"""Flat key=value run configuration (diff-friendly experiment tracking).

A config file holds one ``key = value`` pair per line; ``#`` starts a
comment. Unknown keys are rejected. CLI flags override file values.
``embedding_dim = 0`` means "infer from the dataset".
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .model import ResolverConfig, Setting
from .params import Hyper


class ConfigError(Exception):
    pass


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


@dataclass
class RunConfig:
    setting: str = "concat_gated"
    embedding_dim: int = 0
    bert_branch_dim: int = 512
    rgcn_dim: int = 256
    head_hidden_dim: int = 512
    rgcn_layers: int = 1
    use_gate_bias: bool = True
    lr0: float = 1e-3
    lr_decay: float = 0.95
    l2_lambda: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout_p: float = 0.3
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    seed: int = 0
    folds: int = 5
    epochs: int = 30
    batch_size: int = 32
    train_data: str = ""
    test_data: str = ""

    def hyper(self) -> Hyper:
        return Hyper(lr0=self.lr0, lr_decay=self.lr_decay,
                     l2_lambda=self.l2_lambda, adam_beta1=self.adam_beta1,
                     adam_beta2=self.adam_beta2, adam_eps=self.adam_eps,
                     dropout_p=self.dropout_p, bn_eps=self.bn_eps,
                     bn_momentum=self.bn_momentum, seed=self.seed)

    def resolver_config(self, embedding_dim: int | None = None) \
            -> ResolverConfig:
        dim = embedding_dim if embedding_dim is not None \
            else self.embedding_dim
        if dim <= 0:
            raise ConfigError("embedding_dim not set and not inferable")
        return ResolverConfig(
            setting=Setting(self.setting), embedding_dim=dim,
            bert_branch_dim=self.bert_branch_dim, rgcn_dim=self.rgcn_dim,
            head_hidden_dim=self.head_hidden_dim,
            rgcn_layers=self.rgcn_layers,
            use_gate_bias=self.use_gate_bias, hyper=self.hyper())

    def echo(self) -> dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_CONVERTERS = {int: int, float: float, str: str}


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    known = {f.name: f.type for f in fields(RunConfig)}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, "
                              f"got {raw_line!r}")
        key, _, raw_val = line.partition("=")
        key = key.strip()
        raw_val = raw_val.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        ftype = known[key]
        try:
            if ftype in ("bool", bool):
                val = _parse_bool(raw_val)
            elif ftype in ("int", int):
                val = int(raw_val)
            elif ftype in ("float", float):
                val = float(raw_val)
            else:
                val = raw_val
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: "
                              f"{exc}") from exc
        setattr(cfg, key, val)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())
