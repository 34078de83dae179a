"""The three networks: speaker-blind encoder, conditional generator, critic.

The encoder maps normalized frames to a diagonal-Gaussian posterior
(mu, log-variance) over the phonetic content z; it never sees a speaker
id, which the API makes unrepresentable. The generator blends z with a
learned speaker embedding row and decodes back to frame space through
upsample+conv stages ending in tanh, so outputs stay in (-1, 1). The
critic scores frames with an unbounded real number (no sigmoid); with
its weights clipped it is Lipschitz, and `critic_lipschitz_bound`
certifies a constant from per-layer operator norms.

Layer counts, kernels and strides are config-driven defaults sized for
CPU training, not a reproduction of any particular architecture.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import DataError, NumericError, ShapeError, UnknownSpeakerError
from .numerics import RngState, Tensor


@dataclass(frozen=True)
class NetworkConfig:
    """Shared architecture knobs for all three networks."""

    dim: int
    z_dim: int = 64
    num_speakers: int = 2
    embedding_dim: int = 16
    kernel_size: int = 3
    encoder_channels: tuple[int, ...] = (8, 8, 8)
    encoder_strides: tuple[int, ...] = (1, 2, 2)
    generator_channels: tuple[int, ...] = (8, 8, 8)
    generator_upsamples: tuple[int, ...] = (2, 2, 2)
    critic_channels: tuple[int, ...] = (8, 8, 8)
    critic_strides: tuple[int, ...] = (1, 2, 2)
    leaky_slope: float = 0.2
    logvar_bound: float = 14.0

    def __post_init__(self):
        if len(self.encoder_channels) != len(self.encoder_strides):
            raise DataError("encoder_channels and encoder_strides must have equal length")
        if len(self.generator_channels) != len(self.generator_upsamples):
            raise DataError("generator_channels and generator_upsamples must have equal length")
        if len(self.critic_channels) != len(self.critic_strides):
            raise DataError("critic_channels and critic_strides must have equal length")
        up = int(np.prod(self.generator_upsamples)) if self.generator_upsamples else 1
        if self.dim % up != 0:
            raise DataError(
                f"feature dim {self.dim} is not divisible by the upsample product {up}"
            )
        # padding = kernel // 2 keeps every conv output length >= 1, so strided
        # stacks cannot collapse the signal; conv1d still guards the general case

    @property
    def padding(self) -> int:
        return self.kernel_size // 2

    @property
    def generator_seed_length(self) -> int:
        up = int(np.prod(self.generator_upsamples)) if self.generator_upsamples else 1
        return self.dim // up

    def conv_lengths(self, strides) -> list[int]:
        lengths = [self.dim]
        for s in strides:
            lengths.append((lengths[-1] + 2 * self.padding - self.kernel_size) // s + 1)
        return lengths


@dataclass
class EncoderParams:
    """phi: conv trunk plus mean and log-variance heads."""

    config: NetworkConfig
    tensors: dict[str, Tensor]


@dataclass
class GeneratorParams:
    """theta: dense merge of [z || y], upsample+conv stack, speaker embeddings."""

    config: NetworkConfig
    tensors: dict[str, Tensor]

    @property
    def num_speakers(self) -> int:
        return self.tensors["embedding"].shape[0]


@dataclass
class CriticParams:
    """psi: conv stack to a single unbounded score; clip_bound caps every weight."""

    config: NetworkConfig
    tensors: dict[str, Tensor]
    clip_bound: float = 0.01


@dataclass
class ModelParams:
    encoder: EncoderParams
    generator: GeneratorParams
    critic: CriticParams

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for prefix, group in (
            ("enc", self.encoder.tensors),
            ("gen", self.generator.tensors),
            ("critic", self.critic.tensors),
        ):
            for name, t in group.items():
                out[f"{prefix}.{name}"] = t
        return out

    def zero_grad(self):
        for t in self.named_parameters().values():
            t.zero_grad()

    def set_requires_grad(self, encoder=None, generator=None, critic=None):
        for flag, group in (
            (encoder, self.encoder.tensors),
            (generator, self.generator.tensors),
            (critic, self.critic.tensors),
        ):
            if flag is None:
                continue
            for t in group.values():
                t.requires_grad = flag


@dataclass
class LatentBatch:
    """Per-frame posterior statistics and the drawn sample."""

    mu: Tensor
    log_var: Tensor
    z: Tensor
    eps: np.ndarray


# ---------------------------------------------------------------------------
# initialization


def _init_tensor(rng: RngState, shape, fan_in: int, dtype) -> Tensor:
    scale = np.sqrt(2.0 / max(fan_in, 1))
    return Tensor(scale * rng.standard_normal(shape, dtype=dtype), requires_grad=True)


def _zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def init_encoder(config: NetworkConfig, rng: RngState, dtype=np.float32) -> EncoderParams:
    k = config.kernel_size
    tensors = {}
    c_prev = 1
    for i, c in enumerate(config.encoder_channels):
        tensors[f"conv{i}.w"] = _init_tensor(rng, (c, c_prev, k), c_prev * k, dtype)
        tensors[f"conv{i}.b"] = _zeros((c, 1), dtype)
        c_prev = c
    flat = c_prev * config.conv_lengths(config.encoder_strides)[-1]
    for head in ("mu", "logvar"):
        tensors[f"{head}.w"] = _init_tensor(rng, (flat, config.z_dim), flat, dtype)
        tensors[f"{head}.b"] = _zeros((config.z_dim,), dtype)
    return EncoderParams(config=config, tensors=tensors)


def init_generator(config: NetworkConfig, rng: RngState, dtype=np.float32) -> GeneratorParams:
    k = config.kernel_size
    tensors = {
        "embedding": Tensor(
            0.5 * rng.standard_normal((config.num_speakers, config.embedding_dim), dtype=dtype),
            requires_grad=True,
        )
    }
    merged = config.z_dim + config.embedding_dim
    channels = config.generator_channels
    seed_width = channels[0] if channels else 1
    seed_len = config.generator_seed_length
    tensors["merge.w"] = _init_tensor(rng, (merged, seed_width * seed_len), merged, dtype)
    tensors["merge.b"] = _zeros((seed_width * seed_len,), dtype)
    c_prev = seed_width
    for i, c in enumerate(channels):
        tensors[f"conv{i}.w"] = _init_tensor(rng, (c, c_prev, k), c_prev * k, dtype)
        tensors[f"conv{i}.b"] = _zeros((c, 1), dtype)
        c_prev = c
    tensors["out.w"] = _init_tensor(rng, (1, c_prev, k), c_prev * k, dtype)
    tensors["out.b"] = _zeros((1, 1), dtype)
    return GeneratorParams(config=config, tensors=tensors)


def init_critic(
    config: NetworkConfig, rng: RngState, clip_bound: float = 0.01, dtype=np.float32
) -> CriticParams:
    k = config.kernel_size
    tensors = {}
    c_prev = 1
    for i, c in enumerate(config.critic_channels):
        tensors[f"conv{i}.w"] = _init_tensor(rng, (c, c_prev, k), c_prev * k, dtype)
        tensors[f"conv{i}.b"] = _zeros((c, 1), dtype)
        c_prev = c
    flat = c_prev * config.conv_lengths(config.critic_strides)[-1]
    tensors["out.w"] = _init_tensor(rng, (flat, 1), flat, dtype)
    tensors["out.b"] = _zeros((1,), dtype)
    return CriticParams(config=config, tensors=tensors, clip_bound=clip_bound)


def init_model(
    config: NetworkConfig, rng: RngState, clip_bound: float = 0.01, dtype=np.float32
) -> ModelParams:
    return ModelParams(
        encoder=init_encoder(config, rng, dtype),
        generator=init_generator(config, rng, dtype),
        critic=init_critic(config, rng, clip_bound, dtype),
    )


# ---------------------------------------------------------------------------
# forward passes


def _ensure_finite(t: Tensor, where: str):
    if not np.isfinite(t.data).all():
        raise NumericError(f"non-finite activation in {where}")


def _conv_block(h: Tensor, tensors, idx: int, stride: int, config: NetworkConfig, net: str):
    h = nm.conv1d(h, tensors[f"conv{idx}.w"], stride=stride, padding=config.padding)
    h = nm.add(h, tensors[f"conv{idx}.b"])
    h = nm.leaky_relu(h, slope=config.leaky_slope)
    _ensure_finite(h, f"{net} conv layer {idx}")
    return h


def encode(x, params: EncoderParams):
    """Posterior statistics for a batch of normalized frames: (mu, log_var)."""
    cfg = params.config
    x = nm.as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] != cfg.dim:
        raise ShapeError(f"encode: expected (batch, {cfg.dim}) frames, got {x.shape}")
    batch = x.shape[0]
    h = nm.reshape(x, (batch, 1, cfg.dim))
    for i, stride in enumerate(cfg.encoder_strides):
        h = _conv_block(h, params.tensors, i, stride, cfg, "encoder")
    h = nm.reshape(h, (batch, h.shape[1] * h.shape[2]))
    mu = nm.add(nm.matmul(h, params.tensors["mu.w"]), params.tensors["mu.b"])
    log_var = nm.add(nm.matmul(h, params.tensors["logvar.w"]), params.tensors["logvar.b"])
    log_var = nm.clip(log_var, -cfg.logvar_bound, cfg.logvar_bound)
    _ensure_finite(mu, "encoder mu head")
    _ensure_finite(log_var, "encoder logvar head")
    return mu, log_var


def reparameterize(mu: Tensor, log_var: Tensor, rng: RngState, eps=None) -> LatentBatch:
    """z = mu + exp(0.5 * log_var) * eps with eps ~ N(0, I); differentiable in both."""
    if mu.shape != log_var.shape:
        raise ShapeError(f"reparameterize: mu {mu.shape} vs log_var {log_var.shape}")
    if eps is None:
        eps = rng.standard_normal(mu.shape, dtype=mu.data.dtype)
    else:
        eps = np.asarray(eps, dtype=mu.data.dtype)
    std = nm.exp(nm.mul(log_var, 0.5))
    z = nm.add(mu, nm.mul(std, Tensor(eps)))
    return LatentBatch(mu=mu, log_var=log_var, z=z, eps=eps)


def _upsample(h: Tensor, factor: int) -> Tensor:
    if factor == 1:
        return h
    b, c, length = h.shape
    h = nm.reshape(h, (b, c, length, 1))
    h = nm.broadcast_to(h, (b, c, length, factor))
    return nm.reshape(h, (b, c, length * factor))


def generate(z, speaker_id: int, params: GeneratorParams) -> Tensor:
    """Decode latent content conditioned on a speaker; output in (-1, 1)."""
    cfg = params.config
    z = nm.as_tensor(z)
    if z.data.ndim != 2 or z.shape[1] != cfg.z_dim:
        raise ShapeError(f"generate: expected (batch, {cfg.z_dim}) latents, got {z.shape}")
    n_speakers = params.num_speakers
    if not 0 <= speaker_id < n_speakers:
        raise UnknownSpeakerError(
            f"speaker id {speaker_id} outside embedding table of size {n_speakers}"
        )
    batch = z.shape[0]

    onehot = np.zeros((1, n_speakers), dtype=z.data.dtype)
    onehot[0, speaker_id] = 1.0
    y = nm.matmul(Tensor(onehot), params.tensors["embedding"])
    y = nm.broadcast_to(y, (batch, cfg.embedding_dim))

    h = nm.concat([z, y], axis=1)
    h = nm.add(nm.matmul(h, params.tensors["merge.w"]), params.tensors["merge.b"])
    h = nm.leaky_relu(h, slope=cfg.leaky_slope)
    _ensure_finite(h, "generator merge layer")

    channels = cfg.generator_channels
    seed_width = channels[0] if channels else 1
    h = nm.reshape(h, (batch, seed_width, cfg.generator_seed_length))
    for i, factor in enumerate(cfg.generator_upsamples):
        h = _upsample(h, factor)
        h = nm.conv1d(h, params.tensors[f"conv{i}.w"], stride=1, padding=cfg.padding)
        h = nm.add(h, params.tensors[f"conv{i}.b"])
        h = nm.leaky_relu(h, slope=cfg.leaky_slope)
        _ensure_finite(h, f"generator conv layer {i}")
    h = nm.conv1d(h, params.tensors["out.w"], stride=1, padding=cfg.padding)
    h = nm.add(h, params.tensors["out.b"])
    h = nm.tanh(h)
    return nm.reshape(h, (batch, cfg.dim))


def criticize(x, params: CriticParams) -> Tensor:
    """Unbounded real score per frame; higher means more target-like."""
    cfg = params.config
    x = nm.as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] != cfg.dim:
        raise ShapeError(f"criticize: expected (batch, {cfg.dim}) frames, got {x.shape}")
    batch = x.shape[0]
    h = nm.reshape(x, (batch, 1, cfg.dim))
    for i, stride in enumerate(cfg.critic_strides):
        h = _conv_block(h, params.tensors, i, stride, cfg, "critic")
    h = nm.reshape(h, (batch, h.shape[1] * h.shape[2]))
    h = nm.add(nm.matmul(h, params.tensors["out.w"]), params.tensors["out.b"])
    return nm.reshape(h, (batch,))


# ---------------------------------------------------------------------------
# Lipschitz certificate


def _conv_operator_matrix(w: np.ndarray, length: int, stride: int, padding: int) -> np.ndarray:
    """Unroll a conv layer at a fixed input length into its dense matrix."""
    c_out, c_in, kernel = w.shape
    l_out = (length + 2 * padding - kernel) // stride + 1
    basis = np.eye(c_in * length, dtype=np.float64).reshape(c_in * length, c_in, length)
    xp = np.pad(basis, ((0, 0), (0, 0), (padding, padding)))
    out = np.zeros((c_in * length, c_out, l_out))
    for k in range(kernel):
        seg = xp[:, :, k : k + stride * l_out : stride]
        out += np.tensordot(seg, w[:, :, k].astype(np.float64), axes=([1], [1])).transpose(0, 2, 1)
    return out.reshape(c_in * length, c_out * l_out).T


def critic_lipschitz_bound(params: CriticParams) -> float:
    """Certified Lipschitz constant: product of per-layer operator norms.

    Convolutions are unrolled at the critic's actual signal lengths and
    measured by spectral norm; leaky-ReLU contributes max(1, slope).
    """
    cfg = params.config
    bound = 1.0
    length = cfg.dim
    act = max(1.0, cfg.leaky_slope)
    for i, stride in enumerate(cfg.critic_strides):
        w = params.tensors[f"conv{i}.w"].data
        mat = _conv_operator_matrix(w, length, stride, cfg.padding)
        bound *= np.linalg.svd(mat, compute_uv=False)[0] * act
        length = (length + 2 * cfg.padding - cfg.kernel_size) // stride + 1
    out_w = params.tensors["out.w"].data.astype(np.float64)
    bound *= np.linalg.svd(out_w, compute_uv=False)[0]
    return float(bound)


def clone_params(params: ModelParams) -> ModelParams:
    """Deep copy of all parameter tensors (data only, no gradients)."""

    def copy_group(group):
        return {k: Tensor(t.data.copy(), requires_grad=t.requires_grad) for k, t in group.items()}

    return ModelParams(
        encoder=EncoderParams(params.encoder.config, copy_group(params.encoder.tensors)),
        generator=GeneratorParams(params.generator.config, copy_group(params.generator.tensors)),
        critic=CriticParams(
            params.critic.config, copy_group(params.critic.tensors), params.critic.clip_bound
        ),
    )
