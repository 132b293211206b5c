"""1-D convolutional CycleGAN generator / WGAN critic and the checkpoint container.

Generator:  FC embed -> (Conv1D + BN + ReLU) x n -> residual blocks -> noise
            injection -> ConvT upsample -> tanh, rescaled to [0, 1].
Critic:     (Conv1D stride 2 + leaky ReLU) x n -> flatten -> FC -> score.

The last generator conv halves the length (kernel 4, stride 2, pad 1) and the
transposed conv restores it, so ``sequence_length`` must be even.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, CorruptCheckpointError, DimensionError, ParameterError, VersionMismatchError
from .tensor import RunningStats, Tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class GeneratorConfig:
    input_features: int
    sequence_length: int
    base_channels: int = 32
    num_conv_layers: int = 3
    num_residual_blocks: int = 3
    noise_alpha: float = 0.0
    seed: int = 0

    def validate(self) -> "GeneratorConfig":
        for name in ("input_features", "sequence_length", "base_channels", "num_conv_layers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"generator {name} must be positive, got {getattr(self, name)}")
        if self.num_residual_blocks < 0:
            raise ConfigError("num_residual_blocks must be >= 0")
        if self.noise_alpha < 0:
            raise ConfigError(f"noise_alpha must be >= 0, got {self.noise_alpha}")
        if self.sequence_length % 2:
            raise ConfigError(f"sequence_length must be even for the down/up-sampling pair, got {self.sequence_length}")
        return self


@dataclass(frozen=True)
class DiscriminatorConfig:
    input_features: int
    sequence_length: int
    base_channels: int = 32
    num_conv_layers: int = 3
    seed: int = 0

    def validate(self) -> "DiscriminatorConfig":
        for name in ("input_features", "sequence_length", "base_channels", "num_conv_layers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"discriminator {name} must be positive, got {getattr(self, name)}")
        return self

    def channels(self, i: int) -> int:
        return self.base_channels * 2 ** min(i, 2)

    def lengths(self) -> list[int]:
        L = [self.sequence_length]
        for _ in range(self.num_conv_layers):
            L.append((L[-1] - 1) // 2 + 1)
        return L


@dataclass
class NetworkParams:
    """Named trainable tensors (stable order) plus batch-norm running statistics."""

    config: object
    tensors: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)

    def names(self) -> list[str]:
        return list(self.tensors)

    def arrays(self) -> dict:
        return {k: t.data for k, t in self.tensors.items()}

    def count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def copy(self):
        return type(self)(
            self.config,
            {k: Tensor(t.data.copy(), requires_grad=True) for k, t in self.tensors.items()},
            {k: RunningStats(b.mean.copy(), b.var.copy()) for k, b in self.buffers.items()},
        )

    def state_arrays(self, prefix: str = "") -> dict:
        out = {prefix + k: t.data for k, t in self.tensors.items()}
        for k, b in self.buffers.items():
            out[f"{prefix}{k}.running_mean"] = b.mean
            out[f"{prefix}{k}.running_var"] = b.var
        return out

    def load_state_arrays(self, arrays: dict, prefix: str = "") -> None:
        for k, t in self.tensors.items():
            src = arrays[prefix + k]
            if src.shape != t.shape:
                raise ContractError(f"{prefix}{k}: checkpoint shape {src.shape} != model shape {t.shape}")
            t.data = np.array(src, dtype=t.dtype)
        for k, b in self.buffers.items():
            b.mean[...] = arrays[f"{prefix}{k}.running_mean"]
            b.var[...] = arrays[f"{prefix}{k}.running_var"]


class GeneratorParams(NetworkParams):
    pass


class DiscriminatorParams(NetworkParams):
    pass


@dataclass
class CycleGanModel:
    g_st: GeneratorParams
    g_ts: GeneratorParams
    d_s: DiscriminatorParams
    d_t: DiscriminatorParams

    def networks(self) -> dict:
        return {"g_st": self.g_st, "g_ts": self.g_ts, "d_s": self.d_s, "d_t": self.d_t}

    @classmethod
    def create(cls, gen_config: GeneratorConfig, disc_config: DiscriminatorConfig, seed: int = 0) -> "CycleGanModel":
        return cls(
            init_generator(gen_config, seed),
            init_generator(gen_config, seed + 1),
            init_discriminator(disc_config, seed + 2),
            init_discriminator(disc_config, seed + 3),
        )


# ---------------------------------------------------------------- init


def _normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) / math.sqrt(fan_in)).astype(dtype)


def generator_shapes(cfg: GeneratorConfig) -> dict:
    """Trainable parameter shapes, in iteration order."""
    d, C = cfg.input_features, cfg.base_channels
    C2 = 2 * C
    shapes = {"embed.W": (d, C), "embed.b": (C,)}
    for i in range(cfg.num_conv_layers - 1):
        shapes[f"conv{i}.k"] = (C, C, 3)
        shapes[f"conv{i}.bn.gamma"] = (C,)
        shapes[f"conv{i}.bn.beta"] = (C,)
    last = cfg.num_conv_layers - 1
    shapes[f"conv{last}.k"] = (C2, C, 4)
    shapes[f"conv{last}.bn.gamma"] = (C2,)
    shapes[f"conv{last}.bn.beta"] = (C2,)
    for j in range(cfg.num_residual_blocks):
        for s in (1, 2):
            shapes[f"res{j}.conv{s}.k"] = (C2, C2, 3)
            shapes[f"res{j}.bn{s}.gamma"] = (C2,)
            shapes[f"res{j}.bn{s}.beta"] = (C2,)
    shapes["up.k"] = (C2, d, 4)
    shapes["up.b"] = (d,)
    return shapes


def discriminator_shapes(cfg: DiscriminatorConfig) -> dict:
    shapes = {}
    c_in = cfg.input_features
    for i in range(cfg.num_conv_layers):
        c_out = cfg.channels(i)
        shapes[f"conv{i}.k"] = (c_out, c_in, 3)
        shapes[f"conv{i}.b"] = (c_out,)
        c_in = c_out
    flat = c_in * cfg.lengths()[-1]
    shapes["fc.W"] = (flat, 1)
    shapes["fc.b"] = (1,)
    return shapes


def _init_tensors(shapes: dict, rng, dtype) -> dict:
    tensors = {}
    for name, shape in shapes.items():
        if name.endswith(".gamma"):
            arr = np.ones(shape, dtype=dtype)
        elif name.endswith((".beta", ".b")):
            arr = np.zeros(shape, dtype=dtype)
        elif name == "up.k":
            arr = _normal(rng, shape, shape[0] * shape[2], dtype)
        elif len(shape) == 3:
            arr = _normal(rng, shape, shape[1] * shape[2], dtype)
        else:
            arr = _normal(rng, shape, shape[0], dtype)
        tensors[name] = Tensor(arr, requires_grad=True)
    return tensors


def init_generator(config: GeneratorConfig, seed: int | None = None, dtype=None) -> GeneratorParams:
    config.validate()
    dtype = dtype or T.get_default_dtype()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    tensors = _init_tensors(generator_shapes(config), rng, dtype)
    buffers = {k[: -len(".gamma")]: RunningStats.fresh(t.shape[0], dtype)
               for k, t in tensors.items() if k.endswith(".gamma")}
    return GeneratorParams(config, tensors, buffers)


def init_discriminator(config: DiscriminatorConfig, seed: int | None = None, dtype=None) -> DiscriminatorParams:
    config.validate()
    dtype = dtype or T.get_default_dtype()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    return DiscriminatorParams(config, _init_tensors(discriminator_shapes(config), rng, dtype), {})


# ---------------------------------------------------------------- forward


def _as_input(x, dtype) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def _bn(params: NetworkParams, name: str, h: Tensor, mode: str, update_stats: bool) -> Tensor:
    p = params.tensors
    return T.batch_norm(h, p[f"{name}.gamma"], p[f"{name}.beta"], BN_EPS, mode,
                        params.buffers[name], BN_MOMENTUM, update_stats)


def residual_block(h: Tensor, params: GeneratorParams, prefix: str, mode: str = "train",
                   update_stats: bool = True) -> Tensor:
    """``h + F(h)`` with ``F = Conv1D -> BN -> ReLU -> Conv1D -> BN`` (kernel 3, pad 1)."""
    p = params.tensors
    k1 = p[f"{prefix}.conv1.k"]
    if h.ndim != 3 or h.shape[1] != k1.shape[1]:
        raise DimensionError(f"residual block {prefix} expects {k1.shape[1]} channels, got input shape {h.shape}")
    f = T.conv1d(h, k1, 1, 1)
    f = T.relu(_bn(params, f"{prefix}.bn1", f, mode, update_stats))
    f = T.conv1d(f, p[f"{prefix}.conv2.k"], 1, 1)
    f = _bn(params, f"{prefix}.bn2", f, mode, update_stats)
    return h + f


def generator_forward(params: GeneratorParams, x, rng: np.random.Generator | None = None,
                      mode: str = "train", update_stats: bool = True) -> Tensor:
    """Translate ``x[B, d, T]`` (values in [0, 1]) to a same-shape sequence in [0, 1]."""
    cfg: GeneratorConfig = params.config
    p = params.tensors
    dtype = p["embed.W"].dtype
    x = _as_input(x, dtype)
    if x.ndim != 3 or x.shape[1:] != (cfg.input_features, cfg.sequence_length):
        raise DimensionError(
            f"generator expects [B, {cfg.input_features}, {cfg.sequence_length}], got {x.shape}")
    B, d, L = x.shape
    h = x * 2.0 - 1.0
    h = T.reshape(T.transpose(h, (0, 2, 1)), (B * L, d))
    h = T.dense(h, p["embed.W"], p["embed.b"])
    h = T.transpose(T.reshape(h, (B, L, cfg.base_channels)), (0, 2, 1))
    for i in range(cfg.num_conv_layers):
        last = i == cfg.num_conv_layers - 1
        h = T.conv1d(h, p[f"conv{i}.k"], 2 if last else 1, 1)
        h = T.relu(_bn(params, f"conv{i}.bn", h, mode, update_stats))
    for j in range(cfg.num_residual_blocks):
        h = residual_block(h, params, f"res{j}", mode, update_stats)
    if cfg.noise_alpha > 0:
        if rng is None:
            raise ParameterError("noise injection (noise_alpha > 0) needs an rng")
        eps = rng.standard_normal(h.shape).astype(dtype)
        h = h + Tensor(eps * dtype.type(cfg.noise_alpha))
    y = T.conv_transpose1d(h, p["up.k"], 2, 1) + T.reshape(p["up.b"], (1, d, 1))
    return (T.tanh(y) + 1.0) * 0.5


def _critic_trunk(params: DiscriminatorParams, y: Tensor) -> Tensor:
    cfg: DiscriminatorConfig = params.config
    p = params.tensors
    if y.ndim != 3 or y.shape[1:] != (cfg.input_features, cfg.sequence_length):
        raise DimensionError(
            f"discriminator expects [B, {cfg.input_features}, {cfg.sequence_length}], got {y.shape}")
    h = y
    for i in range(cfg.num_conv_layers):
        h = T.conv1d(h, p[f"conv{i}.k"], 2, 1) + T.reshape(p[f"conv{i}.b"], (1, -1, 1))
        h = T.leaky_relu(h, LEAKY_SLOPE)
    return T.reshape(h, (h.shape[0], -1))


def discriminator_forward(params: DiscriminatorParams, y) -> Tensor:
    """Unbounded critic score per batch element, shape ``[B, 1]``."""
    y = _as_input(y, params.tensors["fc.W"].dtype)
    h = _critic_trunk(params, y)
    return T.dense(h, params.tensors["fc.W"], params.tensors["fc.b"])


def discriminator_features(params: DiscriminatorParams, y) -> np.ndarray:
    """Flattened activations feeding the critic's final FC layer."""
    with T.no_grad():
        return _critic_trunk(params, _as_input(y, params.tensors["fc.W"].dtype)).data


def translate(params: GeneratorParams, X: np.ndarray, rng=None, batch_size: int = 256) -> np.ndarray:
    """Inference-mode translation of ``X[N, d, T]`` using running BN statistics."""
    outs = []
    with T.no_grad():
        for i in range(0, len(X), batch_size):
            outs.append(generator_forward(params, X[i:i + batch_size], rng, mode="eval").data)
    if not outs:
        return np.zeros_like(X)
    return np.concatenate(outs)


# ---------------------------------------------------------------- checkpoint container

MAGIC = b"AISCGCK\x00"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<8sIQ")


def write_container(path, header: dict, arrays: dict, version: int = FORMAT_VERSION) -> None:
    """Write ``MAGIC | u32 version | u64 header_len | JSON header | LE payloads in name order``."""
    entries = []
    payloads = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.kind == "f" else np.dtype("<f4")
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dt.str})
        payloads.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    full = dict(header)
    full["format_version"] = version
    full["arrays"] = entries
    blob = json.dumps(full, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREAMBLE.pack(MAGIC, version, len(blob)))
        fh.write(blob)
        for p in payloads:
            fh.write(p)


def read_container(path, expected_version: int = FORMAT_VERSION) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PREAMBLE.size:
        raise CorruptCheckpointError(f"{path}: file too short for a checkpoint header")
    magic, version, hlen = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic bytes")
    if version != expected_version:
        raise VersionMismatchError(version, expected_version)
    start = _PREAMBLE.size
    if len(raw) < start + hlen:
        raise CorruptCheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable header ({exc})") from None
    offset = start + hlen
    arrays = {}
    for e in header["arrays"]:
        dt = np.dtype(e["dtype"])
        n = int(np.prod(e["shape"], dtype=np.int64)) * dt.itemsize
        if len(raw) < offset + n:
            raise CorruptCheckpointError(f"{path}: truncated payload for {e['name']}")
        arrays[e["name"]] = np.frombuffer(raw, dtype=dt, count=n // dt.itemsize, offset=offset).reshape(e["shape"]).astype(dt.newbyteorder("="))
        offset += n
    if offset != len(raw):
        raise CorruptCheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, arrays


def config_dict(cfg) -> dict:
    return asdict(cfg)


def save_model(path, model: CycleGanModel, extra: dict | None = None) -> None:
    arrays = {}
    for net, params in model.networks().items():
        arrays.update(params.state_arrays(f"{net}/"))
    header = {
        "kind": "model",
        "config": {"generator": config_dict(model.g_st.config), "discriminator": config_dict(model.d_s.config)},
    }
    header.update(extra or {})
    write_container(path, header, arrays)


def model_from_header(header: dict, dtype=None) -> CycleGanModel:
    gcfg = GeneratorConfig(**header["config"]["generator"])
    dcfg = DiscriminatorConfig(**header["config"]["discriminator"])
    return CycleGanModel(init_generator(gcfg, 0, dtype), init_generator(gcfg, 0, dtype),
                         init_discriminator(dcfg, 0, dtype), init_discriminator(dcfg, 0, dtype))


def load_model(path) -> CycleGanModel:
    header, arrays = read_container(path)
    dtype = next(iter(arrays.values())).dtype if arrays else None
    model = model_from_header(header, dtype)
    for net, params in model.networks().items():
        params.load_state_arrays(arrays, f"{net}/")
    return model
