"""Run configuration: defaults, file loading, overrides, validation.

Config files are either JSON objects or key=value lines (# starts a
comment). Values in key=value files are parsed as JSON where possible
and fall back to plain strings. Unknown keys are rejected rather than
ignored so typos cannot silently revert a knob to its default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional


class ConfigError(Exception):
    """Invalid, unknown or inconsistent configuration."""


@dataclass
class RunConfig:
    # paths
    docs: str = ""
    edges: Optional[str] = None
    out_dir: str = "run"
    # model
    n: int = 63
    num_layers: int = 4
    heads: int = 4
    tree_depth: int = 3
    branching: int = 3
    curvature_k: float = 1.0
    max_len: int = 128
    # loss
    lambda_topic: float = 1.0
    lambda_sup: float = 1.0
    tau: float = 10.0
    batch_size: int = 16
    max_neighbors: int = 5
    # optimization
    lr: float = 1e-3
    epochs: int = 20
    seed: int = 0
    # tree structure thresholds
    s_add: float = 0.05
    s_prune: float = 0.05
    # evaluation
    kappa: int = 5
    top_k: int = 10
    window: int = 10
    # corpus
    min_count: int = 1
    max_vocab: Optional[int] = None
    stopwords: list[str] = field(default_factory=list)
    knn_k: int = 5
    train_fraction: float = 0.72
    val_fraction: float = 0.08
    # ablations
    flat_tree: bool = False
    fixed_tree: bool = False
    euclidean: bool = False
    no_tree_injection: bool = False
    no_graph_injection: bool = False
    supervised: bool = False

    def fractions(self) -> tuple[float, float, float]:
        return (
            self.train_fraction,
            self.val_fraction,
            1.0 - self.train_fraction - self.val_fraction,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}

_INT_KEYS = {
    "n", "num_layers", "heads", "tree_depth", "branching", "max_len",
    "batch_size", "max_neighbors", "epochs", "seed", "kappa", "top_k",
    "window", "min_count", "knn_k",
}
_FLOAT_KEYS = {
    "curvature_k", "lambda_topic", "lambda_sup", "tau", "lr",
    "s_add", "s_prune", "train_fraction", "val_fraction",
}
_BOOL_KEYS = {
    "flat_tree", "fixed_tree", "euclidean",
    "no_tree_injection", "no_graph_injection", "supervised",
}


def _coerce(key: str, value):
    if key in _BOOL_KEYS:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"{key} expects true/false, got {value!r}")
    if key in _INT_KEYS:
        if isinstance(value, bool):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError as exc:
                raise ConfigError(f"{key} expects an integer, got {value!r}") from exc
        raise ConfigError(f"{key} expects an integer, got {value!r}")
    if key in _FLOAT_KEYS:
        if isinstance(value, bool):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError as exc:
                raise ConfigError(f"{key} expects a number, got {value!r}") from exc
        raise ConfigError(f"{key} expects a number, got {value!r}")
    if key == "max_vocab":
        if value is None or (isinstance(value, str) and value.lower() in ("none", "null", "")):
            return None
        return _coerce_positive_int(key, value)
    if key == "stopwords":
        if isinstance(value, str):
            return [w for w in value.replace(",", " ").split() if w]
        if isinstance(value, list) and all(isinstance(w, str) for w in value):
            return list(value)
        raise ConfigError(f"{key} expects a list of words, got {value!r}")
    if key == "edges":
        if value is None or (isinstance(value, str) and value.lower() in ("none", "null", "")):
            return None
        return str(value)
    return str(value)


def _coerce_positive_int(key: str, value) -> int:
    v = _coerce_int_like(key, value)
    if v < 1:
        raise ConfigError(f"{key} must be >= 1, got {v}")
    return v


def _coerce_int_like(key: str, value) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{key} expects an integer, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return int(value)
        except ValueError as exc:
            raise ConfigError(f"{key} expects an integer, got {value!r}") from exc
    raise ConfigError(f"{key} expects an integer, got {value!r}")


def make_config(*overlays: dict) -> RunConfig:
    """Merge override dicts (later wins) over defaults and validate."""
    merged: dict = {}
    for overlay in overlays:
        for key, value in overlay.items():
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, value)
    cfg = RunConfig(**merged)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    checks = [
        (cfg.n >= 1, "n must be >= 1"),
        (cfg.num_layers >= 2, "num_layers must be >= 2"),
        (1 <= cfg.heads <= cfg.n + 1, f"heads must be in [1, {cfg.n + 1}]"),
        (cfg.tree_depth >= 2, "tree_depth must be >= 2"),
        (cfg.branching >= 1, "branching must be >= 1"),
        (cfg.curvature_k > 0, "curvature_k must be > 0"),
        (cfg.max_len >= 1, "max_len must be >= 1"),
        (cfg.tau > 0, "tau must be > 0"),
        (cfg.batch_size >= 1, "batch_size must be >= 1"),
        (cfg.max_neighbors >= 1, "max_neighbors must be >= 1"),
        (cfg.lr > 0, "lr must be > 0"),
        (cfg.epochs >= 1, "epochs must be >= 1"),
        (0.0 < cfg.s_add < 1.0, "s_add must be in (0, 1)"),
        (0.0 < cfg.s_prune < 1.0, "s_prune must be in (0, 1)"),
        (cfg.kappa >= 1, "kappa must be >= 1"),
        (cfg.top_k >= 2, "top_k must be >= 2"),
        (cfg.window >= 1, "window must be >= 1"),
        (cfg.min_count >= 1, "min_count must be >= 1"),
        (cfg.knn_k >= 1, "knn_k must be >= 1"),
        (cfg.train_fraction > 0, "train_fraction must be > 0"),
        (cfg.val_fraction >= 0, "val_fraction must be >= 0"),
        (
            cfg.train_fraction + cfg.val_fraction < 1.0,
            "train_fraction + val_fraction must leave room for a test split",
        ),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)


def load_config_file(path: str) -> dict:
    """Read a JSON or key=value config file into a raw override dict."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    stripped = text.lstrip()
    if path.endswith(".json") or stripped.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return obj
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        out[key.strip()] = _parse_value(value.strip())
    return out


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_set_overrides(pairs: list[str]) -> dict:
    """Turn repeated --set key=value flags into an override dict."""
    out: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        out[key.strip()] = _parse_value(value.strip())
    return out
