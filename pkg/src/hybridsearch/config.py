"""Run configuration: INI-style sections with ``section.key=value`` overrides.

Example::

    [data]
    products = data/WANDS/product.csv
    queries = data/WANDS/query.csv
    labels = data/WANDS/label.csv
    brands = brands.txt          ; omit for a non-mt tokenizer
    title_only = false

    [tokenizer]
    kind = bpe                   ; bpe | unigram | word
    vocab_size = 8000

    [model]
    variant = H1                 ; H1 | DE | SE
    dim = 64

    [train]
    epochs = 10

    [index]
    gamma = calibrate            ; or a number, -inf, inf
    target_fraction = 0.01

    [eval]
    ks = 1, 12, 1000
    rescoring = both             ; accumulate | exact | both

    [run]
    output_dir = runs/h1-bpe-mt
    seed = 0
"""

from __future__ import annotations

import configparser
import copy
from pathlib import Path

from .errors import ConfigError

DEFAULTS: dict[str, dict[str, str]] = {
    "data": {"products": "", "queries": "", "labels": "", "brands": "", "auto_brands": "0",
             "title_only": "false"},
    "tokenizer": {"kind": "bpe", "vocab_size": "8000", "seed_multiplier": "4.0", "prune_fraction": "0.25"},
    "model": {"variant": "H1", "dim": "64"},
    "train": {"margin": "1.0", "learning_rate": "0.001", "batch_size": "256", "epochs": "10",
              "optimizer": "adam", "beta1": "0.9", "beta2": "0.999", "eps": "1e-8"},
    "index": {"gamma": "calibrate", "target_fraction": "0.01"},
    "eval": {"ks": "1, 12, 1000", "rescoring": "both", "include_partial": "false"},
    "run": {"output_dir": "run", "seed": "0"},
    "grid": {"tokenizers": "bpe, unigram, word", "mt": "true, false", "dims": "32, 64, 128",
             "variants": "H1, DE, SE", "parallel": "false"},
}

_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


class RunConfig:
    """Section -> key -> string mapping with typed accessors."""

    def __init__(self, values: dict[str, dict[str, str]] | None = None, base_dir: Path | None = None):
        self.values = copy.deepcopy(DEFAULTS)
        self.base_dir = Path(base_dir) if base_dir else Path.cwd()
        for section, kv in (values or {}).items():
            self.values.setdefault(section, {}).update({k: str(v) for k, v in kv.items()})

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        values = {s: dict(parser.items(s)) for s in parser.sections()}
        return cls(values, Path(path).resolve().parent)

    def override(self, assignments) -> "RunConfig":
        out = self.copy()
        for item in assignments or ():
            key, sep, value = item.partition("=")
            section, dot, name = key.strip().partition(".")
            if not sep or not dot or not name:
                raise ConfigError(f"override {item!r} must look like section.key=value")
            out.values.setdefault(section, {})[name] = value.strip()
        return out

    def copy(self) -> "RunConfig":
        return RunConfig(self.values, self.base_dir)

    def get(self, section: str, key: str) -> str:
        try:
            return self.values[section][key]
        except KeyError:
            raise ConfigError(f"missing config value {section}.{key}") from None

    def get_int(self, section, key) -> int:
        try:
            return int(self.get(section, key))
        except ValueError:
            raise ConfigError(f"{section}.{key} must be an integer") from None

    def get_float(self, section, key) -> float:
        try:
            return float(self.get(section, key))
        except ValueError:
            raise ConfigError(f"{section}.{key} must be a number") from None

    def get_bool(self, section, key) -> bool:
        v = self.get(section, key).strip().lower()
        if v not in _BOOL:
            raise ConfigError(f"{section}.{key} must be a boolean")
        return _BOOL[v]

    def get_enum(self, section, key, enum_cls, transform=str.lower):
        raw = transform(self.get(section, key).strip())
        try:
            return enum_cls(raw)
        except ValueError:
            choices = ", ".join(m.value for m in enum_cls)
            raise ConfigError(f"{section}.{key} must be one of {choices}, got {raw!r}") from None

    def get_list(self, section, key) -> list[str]:
        return [x.strip() for x in self.get(section, key).split(",") if x.strip()]

    def path(self, section, key) -> Path | None:
        v = self.get(section, key).strip()
        if not v:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def output_dir(self) -> Path:
        return self.path("run", "output_dir")

    def to_dict(self) -> dict:
        # output_dir is left out so identical runs in different directories stay byte-identical
        out = {s: dict(sorted(kv.items())) for s, kv in sorted(self.values.items())}
        out["run"].pop("output_dir", None)
        return out

    def to_ini(self) -> str:
        lines = []
        for s, kv in sorted(self.values.items()):
            lines.append(f"[{s}]")
            lines.extend(f"{k} = {v}" for k, v in sorted(kv.items()))
            lines.append("")
        return "\n".join(lines)
