"""Sectioned key-value run configuration with dotted overrides."""
from __future__ import annotations

import configparser
import hashlib
import io
from pathlib import Path
from types import SimpleNamespace

from .errors import ConfigInvalid

DEFAULTS = {
    "train": {
        "epochs": 50,
        "batch": 8,
        "lr_backbone": 5e-3,
        "lr_head": 5e-2,
        "momentum": 0.9,
        "weight_decay": 5e-4,
        "schedule": "cosine",
        "seed": 0,
        "max_steps": 0,  # 0: run all epochs
        "workers": 0,
        "split": "train",
        "val_split": "",
        "pretrained": True,
        "log_every": 1,
    },
    "model": {
        "backbone": "swinv2_b",
        "backbone_weights": "",
        "channels": 64,
        "kernels": 4,
        "kernel_size": 3,
        "reduction": 0.25,
    },
    "p2rnet": {
        "tau": 0.01,
        "theta": 0.85,
        "bin_thresh": 0.5,
        "min_area_frac": 0.001,
        "strategy": "max",
        "weight": 0.5,
        "se_radius": 3,
        "refine_input": "binary",
        "use_mask": True,
        "use_boxes": True,
        "use_points": False,
        "backend": "sam",
        "backend_weights": "",
        "scorer": "clip",
        "scorer_weights": "",
        "logit_scale": 100.0,
        "alpha_order": "bright_first",
    },
    "data": {
        "root": "",
        "resolution": 384,
        "flip_p": 0.5,
        "max_rotate_deg": 10.0,
        "crop_ratio": 0.8,
        "boundary_radius": 2,
    },
    "eval": {
        "thresholds": 256,
        "report_dir": "",
        "split": "test",
        "attributes": False,
    },
}

CHOICES = {
    ("train", "schedule"): ("cosine", "constant"),
    ("model", "backbone"): ("swinv2_b", "tiny"),
    ("p2rnet", "strategy"): ("max", "add", "weighted_add", "morphological"),
    ("p2rnet", "refine_input"): ("binary", "coarse"),
    ("p2rnet", "backend"): ("sam", "stub"),
    ("p2rnet", "scorer"): ("clip", "none"),
    ("p2rnet", "alpha_order"): ("bright_first", "dark_first"),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(section: str, key: str, raw):
    default = DEFAULTS[section][key]
    if not isinstance(raw, str):
        raw = str(raw)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in _TRUE | _FALSE:
                raise ValueError(raw)
            return low in _TRUE
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigInvalid(f"{section}.{key}: cannot parse {raw!r} as {type(default).__name__}") from exc
    return raw


class RunConfig:
    def __init__(self, values: dict | None = None):
        self.values = {s: dict(d) for s, d in DEFAULTS.items()}
        self.explicit: set = set()  # dotted keys set by a file or an override
        for section, entries in (values or {}).items():
            for key, v in entries.items():
                self.set(f"{section}.{key}", v)

    def __getattr__(self, section):
        values = self.__dict__.get("values", {})
        if section in values:
            return SimpleNamespace(**values[section])
        raise AttributeError(section)

    def get(self, dotted: str):
        section, key = self._split(dotted)
        return self.values[section][key]

    def set(self, dotted: str, raw) -> None:
        section, key = self._split(dotted)
        self.values[section][key] = _coerce(section, key, raw)
        self.explicit.add(f"{section}.{key}")

    @staticmethod
    def _split(dotted: str):
        section, _, key = dotted.partition(".")
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ConfigInvalid(f"unknown config key {dotted!r}")
        return section, key

    def validate(self) -> "RunConfig":
        t, p, d = self.values["train"], self.values["p2rnet"], self.values["data"]
        checks = [
            (t["epochs"] >= 1, "train.epochs must be >= 1"),
            (t["batch"] >= 1, "train.batch must be >= 1"),
            (t["lr_backbone"] > 0 and t["lr_head"] > 0, "learning rates must be > 0"),
            (t["max_steps"] >= 0, "train.max_steps must be >= 0"),
            (0 <= p["tau"] <= 1 and 0 <= p["theta"] <= 1, "p2rnet.tau and p2rnet.theta must lie in [0, 1]"),
            (0 <= p["bin_thresh"] <= 1, "p2rnet.bin_thresh must lie in [0, 1]"),
            (0 <= p["min_area_frac"] < 1, "p2rnet.min_area_frac must lie in [0, 1)"),
            (0 <= p["weight"] <= 1, "p2rnet.weight must lie in [0, 1]"),
            (p["se_radius"] >= 1, "p2rnet.se_radius must be >= 1"),
            (d["resolution"] > 0 and d["resolution"] % 32 == 0, "data.resolution must be a positive multiple of 32"),
            (0 < d["crop_ratio"] <= 1, "data.crop_ratio must lie in (0, 1]"),
            (self.values["eval"]["thresholds"] == 256, "eval.thresholds is fixed at 256 (8-bit levels)"),
            (self.values["model"]["channels"] >= 1 and self.values["model"]["kernels"] >= 1, "model sizes must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigInvalid(msg)
        for (section, key), allowed in CHOICES.items():
            if self.values[section][key] not in allowed:
                raise ConfigInvalid(f"{section}.{key} must be one of {allowed}, got {self.values[section][key]!r}")
        return self

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for section, entries in self.values.items():
            parser[section] = {k: _fmt(v) for k, v in entries.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def hash(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigInvalid(f"malformed config: {exc}") from exc
        cfg = cls()
        for section in parser.sections():
            if section not in DEFAULTS:
                raise ConfigInvalid(f"unknown config section [{section}]")
            for key, raw in parser[section].items():
                cfg.set(f"{section}.{key}", raw)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigInvalid(f"config file not found: {path}")
        return cls.from_ini(path.read_text())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def parse_overrides(tokens) -> dict:
    """``["--p2rnet.tau", "0.02", "--train.epochs=3"]`` -> {"p2rnet.tau": "0.02", "train.epochs": "3"}."""
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--") or "." not in tok:
            raise ConfigInvalid(f"unrecognised argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            value = next(it, None)
            if value is None:
                raise ConfigInvalid(f"missing value for {tok}")
        RunConfig._split(key)
        out[key] = value
    return out
