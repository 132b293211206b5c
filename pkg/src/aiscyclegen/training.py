"""WGAN-GP / cycle / identity losses, Adam, and the CycleGAN training loop."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DataError, DimensionError, ParameterError, TrainingDivergedError
from .ingest import DomainSplit
from .model import (
    CycleGanModel, DiscriminatorConfig, GeneratorConfig, config_dict, discriminator_forward,
    generator_forward, read_container, translate, write_container,
)
from .tensor import Tensor

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("step", "loss_D_S", "loss_D_T", "loss_adv", "loss_cyc", "loss_id", "loss_total")


@dataclass(frozen=True)
class LossWeights:
    lambda_cyc: float = 0.101
    lambda_id: float = 0.102
    lambda_gp: float = 10.0

    def validate(self) -> "LossWeights":
        for name, value in asdict(self).items():
            if not value >= 0:
                raise ConfigError(f"{name} must be >= 0, got {value}")
        return self


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 1
    steps: int | None = None  # generator steps; overrides epochs when set
    critic_iters: int = 5
    weights: LossWeights = field(default_factory=LossWeights)
    fd_epsilon: float = 1e-3
    gp_directions: str = "gradient"
    gp_probes: int = 4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    seed: int = 0
    checkpoint_interval: int = 0
    checkpoint_dir: str | None = None

    def validate(self) -> "TrainConfig":
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.critic_iters < 1:
            raise ConfigError(f"critic_iters must be >= 1, got {self.critic_iters}")
        if self.steps is None and self.epochs < 1:
            raise ConfigError("epochs must be >= 1 when steps is unset")
        if self.fd_epsilon <= 0:
            raise ConfigError("fd_epsilon must be > 0")
        if self.gp_directions not in ("gradient", "random"):
            raise ConfigError(f"gp_directions must be 'gradient' or 'random', got {self.gp_directions!r}")
        self.weights.validate()
        return self


# ---------------------------------------------------------------- losses


def _const(x, dtype=None) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=dtype or T.get_default_dtype())


def _penalty_probes(D, real, fake, fd_eps, rng, directions="gradient", probes=4):
    """Probe inputs for the finite-difference gradient penalty and a reducer for their scores.

    ``x_hat = u * real + (1 - u) * fake`` with ``u ~ U(0, 1)`` per sample.  In
    ``"gradient"`` mode the single probe direction per sample is the unit
    input gradient of ``D`` at ``x_hat``; the symmetric difference along it is
    the gradient norm, and its parameter derivative equals that of the true
    norm.  In ``"random"`` mode ``probes`` random unit directions give the
    estimate ``sqrt(dim / r * sum_j g_j^2)``.
    """
    if fd_eps <= 0:
        raise ParameterError(f"fd_eps must be > 0, got {fd_eps}")
    real = _const(real)
    fake = _const(fake, real.dtype)
    if real.shape != fake.shape:
        raise DimensionError(f"real {real.shape} and fake {fake.shape} must have the same shape")
    dtype = real.dtype
    B = real.shape[0]
    dim = int(np.prod(real.shape[1:]))
    u = rng.uniform(size=(B,) + (1,) * (real.ndim - 1)).astype(dtype)
    x_hat = u * real + (1 - u) * fake
    eps = dtype.type(fd_eps)

    def unit(v):
        norms = np.sqrt((v.reshape(len(v), -1).astype(np.float64) ** 2).sum(1))
        return norms, (v / np.where(norms > 0, norms, 1.0).reshape((-1,) + (1,) * (v.ndim - 1))).astype(dtype)

    if directions == "gradient":
        xh = Tensor(x_hat, requires_grad=True)
        with_grad = T.is_grad_enabled()
        try:
            T._local.grad_enabled = True
            (gx,) = T.grad(T.sum(D(xh)), [xh])
        finally:
            T._local.grad_enabled = with_grad
        norms, v = unit(gx)
        flat_zero = norms < 1e-12
        if flat_zero.any():
            _, fallback = unit(rng.standard_normal((int(flat_zero.sum()),) + real.shape[1:]))
            v[flat_zero] = fallback
        X = np.concatenate([x_hat + eps * v, x_hat - eps * v])

        def reduce(scores: Tensor) -> Tensor:
            g = (scores[:B] - scores[B:]) * (1.0 / (2.0 * fd_eps))
            norm = T.absolute(g)
            return T.mean((norm - 1.0) ** 2)

    elif directions == "random":
        if probes < 1:
            raise ParameterError("need at least one probe direction")
        _, v = unit(rng.standard_normal((probes * B,) + real.shape[1:]))
        v = v.reshape((probes, B) + real.shape[1:])
        plus = (x_hat[None] + eps * v).reshape((probes * B,) + real.shape[1:])
        minus = (x_hat[None] - eps * v).reshape((probes * B,) + real.shape[1:])
        X = np.concatenate([plus, minus])

        def reduce(scores: Tensor) -> Tensor:
            n = probes * B
            g = (scores[:n] - scores[n:]) * (1.0 / (2.0 * fd_eps))
            g = T.reshape(g, (probes, B))
            sq = T.sum(g * g, axis=0) * (dim / probes)
            return T.mean((T.sqrt(sq) - 1.0) ** 2)

    else:
        raise ParameterError(f"unknown probe directions {directions!r}")
    return X, reduce


def gradient_penalty(D, real, fake, fd_eps: float = 1e-3, rng: np.random.Generator | None = None,
                     directions: str = "gradient", probes: int = 4) -> Tensor:
    """Mean over the batch of ``(||grad_x D(x_hat)|| - 1)^2`` as a first-order differentiable scalar."""
    rng = rng if rng is not None else np.random.default_rng()
    X, reduce = _penalty_probes(D, real, fake, fd_eps, rng, directions, probes)
    return reduce(D(Tensor(X)))


def critic_loss(D, real, fake, lambda_gp: float, fd_eps: float, rng, directions="gradient",
                probes: int = 4) -> tuple[Tensor, Tensor]:
    """``mean D(fake) - mean D(real) + lambda_gp * GP`` with one batched critic pass.

    Returns ``(loss, penalty)``; ``fake`` is treated as a constant.
    """
    real_np = _const(real)
    fake_np = _const(fake, real_np.dtype)
    B = real_np.shape[0]
    X, reduce = _penalty_probes(D, real_np, fake_np, fd_eps, rng, directions, probes)
    scores = D(Tensor(np.concatenate([real_np, fake_np, X])))
    penalty = reduce(scores[2 * B:])
    loss = T.mean(scores[B:2 * B]) - T.mean(scores[:B]) + penalty * lambda_gp
    return loss, penalty


def generator_adversarial_loss(D, fake: Tensor) -> Tensor:
    return -T.mean(D(fake))


def wgan_losses(D, real, fake, lambda_gp: float = 10.0, fd_eps: float = 1e-3, rng=None,
                directions: str = "gradient", probes: int = 4) -> tuple[Tensor, Tensor]:
    """``(critic_loss, generator_adv_loss)`` for one critic and one batch."""
    rng = rng if rng is not None else np.random.default_rng()
    c_loss, _ = critic_loss(D, real, fake, lambda_gp, fd_eps, rng, directions, probes)
    fake_t = fake if isinstance(fake, Tensor) else Tensor(np.asarray(fake, dtype=_const(real).dtype))
    return c_loss, generator_adversarial_loss(D, fake_t)


def l1(a: Tensor, b) -> Tensor:
    """Mean absolute difference over all elements."""
    if a.shape != (b.shape if isinstance(b, Tensor) else np.shape(b)):
        raise DimensionError(f"L1 shape mismatch: {a.shape} vs {np.shape(b.data if isinstance(b, Tensor) else b)}")
    return T.mean(T.absolute(a - b))


def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def cycle_loss(G, F, x, y) -> Tensor:
    """``mean|F(G(x)) - x| + mean|G(F(y)) - y|`` with G: S->T and F: T->S."""
    x, y = _tensor(x), _tensor(y)
    return l1(F(G(x)), x) + l1(G(F(y)), y)


def identity_loss(G, F, x, y) -> Tensor:
    """``mean|G(y) - y| + mean|F(x) - x|``."""
    x, y = _tensor(x), _tensor(y)
    return l1(G(y), y) + l1(F(x), x)


@dataclass
class LossComponents:
    adv: object  # both adversarial directions summed
    cyc: object
    idt: object


def total_generator_loss(components: LossComponents, weights: LossWeights):
    """``adv_ST + adv_TS + lambda_cyc * L_cyc + lambda_id * L_id``."""
    weights.validate()
    return components.adv + components.cyc * weights.lambda_cyc + components.idt * weights.lambda_id


# ---------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays: dict) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in arrays.items()},
                   {k: np.zeros_like(a) for k, a in arrays.items()}, 0)


def adam_step(params: dict, grads: dict, moments: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, t: int | None = None) -> AdamState:
    """Bias-corrected Adam update applied in place to the arrays in ``params``."""
    if not lr > 0:
        raise ConfigError(f"learning rate must be > 0, got {lr}")
    t = moments.t + 1 if t is None else t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = moments.m[name]
        v = moments.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        step = (lr / c1) * m / (np.sqrt(v / c2) + eps)
        p -= step.astype(p.dtype)
    moments.t = t
    return moments


# ---------------------------------------------------------------- data streams


def as_network_arrays(data, dtype=None) -> np.ndarray:
    """Stack sequences (AisSequence list or N x T x d array) into an ``[N, d, T]`` array."""
    dtype = dtype or T.get_default_dtype()
    if isinstance(data, np.ndarray):
        arr = data
    else:
        if len(data) == 0:
            return np.zeros((0, 0, 0), dtype=dtype)
        arr = np.stack([getattr(s, "values", s) for s in data])
    if arr.ndim != 3:
        raise DimensionError(f"expected N x T x d sequences, got {arr.shape}")
    return np.ascontiguousarray(arr.transpose(0, 2, 1), dtype=dtype)


@dataclass
class BatchStream:
    """Uniform sampling without replacement, reshuffled after each pass."""

    n: int
    perm: np.ndarray
    cursor: int = 0

    @classmethod
    def start(cls, n: int, rng) -> "BatchStream":
        return cls(n, rng.permutation(n), 0)

    def next(self, batch_size: int, rng) -> np.ndarray:
        out = []
        need = batch_size
        while need > 0:
            if self.cursor >= self.n:
                self.perm = rng.permutation(self.n)
                self.cursor = 0
            take = min(need, self.n - self.cursor)
            out.append(self.perm[self.cursor:self.cursor + take])
            self.cursor += take
            need -= take
        return np.concatenate(out)


# ---------------------------------------------------------------- state


@dataclass
class TrainState:
    model: CycleGanModel
    optim: dict
    rng: np.random.Generator
    streams: dict
    step: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self):
        for net, params in self.model.networks().items():
            for name, arr in params.arrays().items():
                if self.optim[net].m[name].shape != arr.shape:
                    raise ContractError(f"moment buffer {net}/{name} does not match its parameter")


def _default_configs(d: int, L: int, seed: int):
    return (GeneratorConfig(d, L, base_channels=8, seed=seed),
            DiscriminatorConfig(d, L, base_channels=8, seed=seed))


def init_state(source: np.ndarray, target: np.ndarray, config: TrainConfig,
               gen_config: GeneratorConfig | None = None,
               disc_config: DiscriminatorConfig | None = None) -> TrainState:
    d, L = source.shape[1], source.shape[2]
    dg, dd = _default_configs(d, L, config.seed)
    model = CycleGanModel.create(gen_config or dg, disc_config or dd, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    optim = {net: AdamState.zeros_like(p.arrays()) for net, p in model.networks().items()}
    streams = {"source": BatchStream.start(len(source), rng), "target": BatchStream.start(len(target), rng)}
    return TrainState(model, optim, rng, streams)


def total_steps(config: TrainConfig, n_source: int, n_target: int) -> int:
    if config.steps is not None:
        return config.steps
    per_epoch = max(1, math.ceil(max(n_source, n_target) / config.batch_size))
    return per_epoch * config.epochs


def _check_finite(name, value, step):
    if not math.isfinite(value):
        raise TrainingDivergedError(name, step, value)


def _split_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, DomainSplit):
        return as_network_arrays(data.source), as_network_arrays(data.target)
    source, target = data
    return as_network_arrays(source), as_network_arrays(target)


def train_step(state: TrainState, source: np.ndarray, target: np.ndarray, config: TrainConfig) -> dict:
    """One generator update preceded by ``critic_iters`` updates of both critics."""
    m = state.model
    rng = state.rng
    w = config.weights
    B = config.batch_size
    lr, b1, b2 = config.learning_rate, config.adam_beta1, config.adam_beta2
    gp_args = (w.lambda_gp, config.fd_epsilon, rng, config.gp_directions, config.gp_probes)

    def D_s(z):
        return discriminator_forward(m.d_s, z)

    def D_t(z):
        return discriminator_forward(m.d_t, z)

    d_params = list(m.d_s.tensors.values()) + list(m.d_t.tensors.values())
    for _ in range(config.critic_iters):
        x = source[state.streams["source"].next(B, rng)]
        y = target[state.streams["target"].next(B, rng)]
        with T.no_grad():
            fake_t = generator_forward(m.g_st, x, rng, update_stats=False).data
            fake_s = generator_forward(m.g_ts, y, rng, update_stats=False).data
        loss_dt, _ = critic_loss(D_t, y, fake_t, *gp_args)
        loss_ds, _ = critic_loss(D_s, x, fake_s, *gp_args)
        grads = T.grad(loss_dt + loss_ds, d_params)
        n_s = len(m.d_s.tensors)
        adam_step(m.d_s.arrays(), dict(zip(m.d_s.tensors, grads[:n_s])), state.optim["d_s"], lr, b1, b2)
        adam_step(m.d_t.arrays(), dict(zip(m.d_t.tensors, grads[n_s:])), state.optim["d_t"], lr, b1, b2)

    x = Tensor(source[state.streams["source"].next(B, rng)])
    y = Tensor(target[state.streams["target"].next(B, rng)])
    fake_t = generator_forward(m.g_st, x, rng)
    fake_s = generator_forward(m.g_ts, y, rng)
    rec_x = generator_forward(m.g_ts, fake_t, rng, update_stats=False)
    rec_y = generator_forward(m.g_st, fake_s, rng, update_stats=False)
    id_y = generator_forward(m.g_st, y, rng, update_stats=False)
    id_x = generator_forward(m.g_ts, x, rng, update_stats=False)
    adv = generator_adversarial_loss(D_t, fake_t) + generator_adversarial_loss(D_s, fake_s)
    cyc = l1(rec_x, x) + l1(rec_y, y)
    idt = l1(id_y, y) + l1(id_x, x)
    total = total_generator_loss(LossComponents(adv, cyc, idt), w)
    g_params = list(m.g_st.tensors.values()) + list(m.g_ts.tensors.values())
    grads = T.grad(total, g_params)
    n_g = len(m.g_st.tensors)
    adam_step(m.g_st.arrays(), dict(zip(m.g_st.tensors, grads[:n_g])), state.optim["g_st"], lr, b1, b2)
    adam_step(m.g_ts.arrays(), dict(zip(m.g_ts.tensors, grads[n_g:])), state.optim["g_ts"], lr, b1, b2)

    record = {
        "step": state.step,
        "loss_D_S": float(loss_ds.item()),
        "loss_D_T": float(loss_dt.item()),
        "loss_adv": float(adv.item()),
        "loss_cyc": float(cyc.item()),
        "loss_id": float(idt.item()),
        "loss_total": float(total.item()),
    }
    for key in HISTORY_COLUMNS[1:]:
        _check_finite(key.replace("loss_", ""), record[key], state.step)
    state.history.append(record)
    state.step += 1
    return record


def fit(data, config: TrainConfig, gen_config: GeneratorConfig | None = None,
        disc_config: DiscriminatorConfig | None = None, state: TrainState | None = None,
        until_step: int | None = None, callback=None) -> TrainState:
    """Train (or resume training) until the configured number of generator steps.

    ``data`` is a :class:`DomainSplit` of normalized sequences or a
    ``(source, target)`` pair of N x T x d arrays.  ``until_step`` stops early
    (used to checkpoint mid-run).  ``callback(state, record)`` runs after every
    step.
    """
    config.validate()
    source, target = _split_arrays(data)
    if len(source) == 0 or len(target) == 0:
        raise DataError(f"both domains must be non-empty (source={len(source)}, target={len(target)})")
    if state is None:
        state = init_state(source, target, config, gen_config, disc_config)
    end = total_steps(config, len(source), len(target))
    if until_step is not None:
        end = min(end, until_step)
    while state.step < end:
        record = train_step(state, source, target, config)
        if callback is not None:
            callback(state, record)
        if config.checkpoint_interval and config.checkpoint_dir and state.step % config.checkpoint_interval == 0:
            save_checkpoint(state, os.path.join(config.checkpoint_dir, f"step{state.step:06d}.ckpt"), config)
    if config.checkpoint_dir:
        save_checkpoint(state, os.path.join(config.checkpoint_dir, "final.ckpt"), config)
    return state


def train(data, config: TrainConfig, gen_config=None, disc_config=None) -> tuple[CycleGanModel, list]:
    state = fit(data, config, gen_config, disc_config)
    return state.model, state.history


# ---------------------------------------------------------------- evaluation helpers


def cycle_reconstruction_l1(model: CycleGanModel, source: np.ndarray) -> float:
    """Held-out ``mean|F(G(x)) - x|`` with inference-mode batch norm and no noise."""
    fake = translate(model.g_st, source)
    rec = translate(model.g_ts, fake)
    return float(np.mean(np.abs(rec - source)))


def translation_scores(model: CycleGanModel, source: np.ndarray, target: np.ndarray,
                       extractor=None) -> tuple[float, float]:
    """``(PSNR of x vs F(G(x)), FID of G(S) vs T)`` on ``[N, d, T]`` arrays, inference mode."""
    from .metrics import feature_embed, fid, psnr, random_projection

    extractor = extractor or random_projection(0, 16)
    fake = translate(model.g_st, source)
    rec = translate(model.g_ts, fake)
    emb_real = feature_embed(target.transpose(0, 2, 1), extractor)
    emb_fake = feature_embed(fake.transpose(0, 2, 1), extractor)
    return psnr(source, rec), fid(emb_real, emb_fake)


def write_history_csv(history: list, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for rec in history:
            w.writerow([rec["step"]] + [repr(rec[k]) for k in HISTORY_COLUMNS[1:]])


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(state: TrainState, path, config: TrainConfig | None = None) -> None:
    arrays = {}
    for net, params in state.model.networks().items():
        arrays.update(params.state_arrays(f"{net}/"))
    for net, opt in state.optim.items():
        for name in opt.m:
            arrays[f"adam.m/{net}/{name}"] = opt.m[name]
            arrays[f"adam.v/{net}/{name}"] = opt.v[name]
    for dom, stream in state.streams.items():
        arrays[f"stream/{dom}/perm"] = stream.perm.astype(np.float64)
    header = {
        "kind": "train_state",
        "config": {
            "generator": config_dict(state.model.g_st.config),
            "discriminator": config_dict(state.model.d_s.config),
            "train": _train_config_dict(config) if config is not None else None,
        },
        "step": state.step,
        "adam_t": {net: opt.t for net, opt in state.optim.items()},
        "streams": {dom: {"n": s.n, "cursor": s.cursor} for dom, s in state.streams.items()},
        "rng_state": state.rng.bit_generator.state,
        "history": state.history,
    }
    write_container(path, header, arrays)


def _train_config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    return d


def load_checkpoint(path) -> TrainState:
    from .model import model_from_header

    header, arrays = read_container(path)
    if header.get("kind") != "train_state":
        raise ContractError(f"{path} is not a training checkpoint (kind={header.get('kind')!r})")
    param_dtype = arrays["g_st/embed.W"].dtype
    model = model_from_header(header, param_dtype)
    optim = {}
    for net, params in model.networks().items():
        params.load_state_arrays(arrays, f"{net}/")
        names = params.names()
        optim[net] = AdamState(
            {n: np.array(arrays[f"adam.m/{net}/{n}"]) for n in names},
            {n: np.array(arrays[f"adam.v/{net}/{n}"]) for n in names},
            header["adam_t"][net],
        )
    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng_state"]
    streams = {
        dom: BatchStream(s["n"], arrays[f"stream/{dom}/perm"].astype(np.int64), s["cursor"])
        for dom, s in header["streams"].items()
    }
    return TrainState(model, optim, rng, streams, header["step"], list(header["history"]))


def train_config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d["weights"] = LossWeights(**d.get("weights", {}))
    return TrainConfig(**d)


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **kw)
