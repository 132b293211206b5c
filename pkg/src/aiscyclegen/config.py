"""INI run configuration with a fixed, validated key schema.

Every section and key is declared in :data:`SCHEMA`; unknown sections or keys
and values that fail to parse are rejected before any work starts.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field

from .errors import ConfigError


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _names(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


def _choice(*options):
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {options}, got {t!r}")
        return t
    return parse


def _target(text: str):
    t = text.strip()
    return int(t) if t.lstrip("-").isdigit() else t


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "seed": (int, 0),
    },
    "ingest": {
        "column_map": (json.loads, {}),
        "sequence_length": (int, 64),
        "stride": (int, 32),
        "features": (_names, ("lat", "lon", "sog", "cog", "heading")),
        "max_gap": (float, 3600.0),
        "partition": (_choice("meridian", "bbox", "attribute"), "meridian"),
        "meridian_lon": (float, -85.0),
        "west": (_choice("source", "target"), "source"),
        "source_box": (_floats, ()),
        "target_box": (_floats, ()),
        "attribute": (str, "length"),
        "threshold": (float, 0.0),
        "below": (_choice("source", "target"), "source"),
    },
    "preprocess": {
        "window": (int, 5),
        "smoothing": (_choice("sma", "gaussian"), "sma"),
        "target": (str, "sog"),
        "train_frac": (float, 0.8),
        "val_frac": (float, 0.1),
        "test_frac": (float, 0.1),
    },
    "model": {
        "base_channels": (int, 8),
        "num_conv_layers": (int, 3),
        "num_residual_blocks": (int, 3),
        "noise_alpha": (float, 0.0),
        "disc_base_channels": (int, 8),
        "disc_num_conv_layers": (int, 3),
    },
    "training": {
        "learning_rate": (float, 1e-4),
        "batch_size": (int, 16),
        "epochs": (int, 1),
        "steps": (_opt_int, None),
        "critic_iters": (int, 5),
        "lambda_cyc": (float, 0.101),
        "lambda_id": (float, 0.102),
        "lambda_gp": (float, 10.0),
        "fd_epsilon": (float, 1e-3),
        "gp_directions": (_choice("gradient", "random"), "gradient"),
        "gp_probes": (int, 4),
        "adam_beta1": (float, 0.9),
        "adam_beta2": (float, 0.999),
        "checkpoint_interval": (int, 0),
    },
    "tuning": {
        "methods": (_names, ("grid", "random", "gwo")),
        "budget": (int, 8),
        "pack_size": (int, 4),
        "proxy_steps": (int, 50),
        "grid_levels": (int, 2),
    },
    "metrics": {
        "extractor_seed": (int, 0),
        "extractor_k": (int, 16),
    },
    "bench": {
        "target": (_target, "sog"),
        "ratio": (float, 1.0),
        "train_frac": (float, 0.8),
        "val_frac": (float, 0.1),
        "test_frac": (float, 0.1),
        "seeds": (_ints, (0, 1, 2, 3, 4)),
        "regressor_epochs": (int, 150),
        "regressor_channels": (int, 8),
        "regressor_layers": (int, 2),
        "depths": (_ints, (1, 2, 3, 5, 7)),
        "ablation_steps": (int, 200),
    },
}


@dataclass
class RunConfig:
    sections: dict = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    def get(self, section: str, key: str):
        return self.sections[section][key]

    @property
    def seed(self) -> int:
        return self.sections["run"]["seed"]

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        sections = {k: dict(v) for k, v in self.sections.items()}
        sections["run"]["seed"] = int(seed)
        return RunConfig(sections)

    def to_ini(self) -> str:
        """Resolved configuration, every key spelled out, in schema order."""
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_format(self.sections[section][key])}")
            lines.append("")
        return "\n".join(lines)


def _format(value) -> str:
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True)
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def defaults() -> RunConfig:
    return RunConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})


def parse_config(text: str, origin: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    cfg = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{origin}: unknown key {section}.{key}")
            conv = SCHEMA[section][key][0]
            try:
                cfg.sections[section][key] = conv(raw)
            except (ValueError, TypeError, json.JSONDecodeError) as exc:
                raise ConfigError(f"{origin}: bad value for {section}.{key} = {raw!r} ({exc})") from None
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    if path is None:
        return defaults()
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def validate(cfg: RunConfig) -> None:
    """Cross-key checks; failures name the offending key."""
    ing, pre, tr = cfg["ingest"], cfg["preprocess"], cfg["training"]
    if ing["sequence_length"] < 2:
        raise ConfigError("ingest.sequence_length must be >= 2")
    if ing["stride"] < 1:
        raise ConfigError("ingest.stride must be >= 1")
    if ing["partition"] == "bbox":
        for key in ("source_box", "target_box"):
            if len(ing[key]) != 4:
                raise ConfigError(f"ingest.{key} needs 4 numbers: lat_min, lat_max, lon_min, lon_max")
    if pre["window"] < 1:
        raise ConfigError("preprocess.window must be >= 1")
    for section in ("preprocess", "bench"):
        s = cfg[section]
        total = s["train_frac"] + s["val_frac"] + s["test_frac"]
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"{section}.train_frac + val_frac + test_frac must sum to 1, got {total}")
    for key in ("learning_rate", "fd_epsilon"):
        if not tr[key] > 0:
            raise ConfigError(f"training.{key} must be > 0")
    for key in ("batch_size", "critic_iters"):
        if tr[key] < 1:
            raise ConfigError(f"training.{key} must be >= 1")
    for key in ("lambda_cyc", "lambda_id", "lambda_gp"):
        if tr[key] < 0:
            raise ConfigError(f"training.{key} must be >= 0")
    for m in cfg["tuning"]["methods"]:
        if m not in ("grid", "random", "gwo"):
            raise ConfigError(f"tuning.methods: unknown method {m!r}")
    if cfg["tuning"]["budget"] < 1:
        raise ConfigError("tuning.budget must be >= 1")
    if cfg["bench"]["ratio"] < 0:
        raise ConfigError("bench.ratio must be >= 0")


def train_config(cfg: RunConfig, **overrides):
    from .training import LossWeights, TrainConfig

    tr = cfg["training"]
    weights = LossWeights(tr["lambda_cyc"], tr["lambda_id"], tr["lambda_gp"])
    kw = dict(
        learning_rate=tr["learning_rate"], batch_size=tr["batch_size"], epochs=tr["epochs"], steps=tr["steps"],
        critic_iters=tr["critic_iters"], weights=weights, fd_epsilon=tr["fd_epsilon"],
        gp_directions=tr["gp_directions"], gp_probes=tr["gp_probes"], adam_beta1=tr["adam_beta1"],
        adam_beta2=tr["adam_beta2"], seed=cfg.seed, checkpoint_interval=tr["checkpoint_interval"],
    )
    kw.update(overrides)
    return TrainConfig(**kw)


def model_configs(cfg: RunConfig, d: int, T: int):
    from .model import DiscriminatorConfig, GeneratorConfig

    m = cfg["model"]
    return (GeneratorConfig(d, T, m["base_channels"], m["num_conv_layers"], m["num_residual_blocks"],
                            m["noise_alpha"], cfg.seed),
            DiscriminatorConfig(d, T, m["disc_base_channels"], m["disc_num_conv_layers"], cfg.seed))
