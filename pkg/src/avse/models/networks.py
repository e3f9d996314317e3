"""Encoder, decoder, prior and visual-embedding networks for the four model kinds."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .. import autodiff as ad
from ..autodiff import MlpParams, Tape, init_mlp, mlp_forward
from ..errors import ValidationError

VAR_FLOOR = 1e-10

MODEL_KINDS = ("A-VAE", "V-VAE", "AV-VAE", "AV-CVAE")
_ALIASES = {k.replace("-", "").lower(): k for k in MODEL_KINDS}


def canonical_kind(kind: str) -> str:
    key = kind.replace("-", "").replace("_", "").lower()
    if key not in _ALIASES:
        raise ValidationError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return _ALIASES[key]


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "AV-CVAE"
    n_freq: int = 513
    latent_dim: int = 32
    visual_dim: int = 128
    hidden: int = 128
    visual_hidden: int = 512
    visual_input_dim: int = 128
    alpha: float = 0.9
    beta: float = 1.0
    n_samples: int = 1
    share_embedder: bool = True
    use_embedder: bool | None = None
    encoder_input: str = "log-power"

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        if self.use_embedder is None:
            object.__setattr__(self, "use_embedder", self.visual_input_dim != self.visual_dim)
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must lie in [0, 1]")
        if self.beta < 1.0:
            raise ValidationError("beta must be >= 1")
        if self.latent_dim >= self.n_freq:
            raise ValidationError("latent_dim must be much smaller than n_freq")
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        if not self.use_embedder and self.visual_input_dim != self.visual_dim:
            raise ValidationError("pass-through visual features need visual_input_dim == visual_dim")
        if self.encoder_input not in ("power", "log-power"):
            raise ValidationError(f"unknown encoder_input {self.encoder_input!r}")

    @property
    def uses_audio_encoder(self) -> bool:
        return self.kind in ("A-VAE", "AV-VAE", "AV-CVAE")

    @property
    def uses_visual(self) -> bool:
        return self.kind != "A-VAE"

    @property
    def conditional_decoder(self) -> bool:
        return self.kind in ("AV-VAE", "AV-CVAE")

    @property
    def conditional_prior(self) -> bool:
        return self.kind == "AV-CVAE"

    def to_dict(self) -> dict:
        return asdict(self)

    def with_updates(self, **kw) -> ModelConfig:
        return replace(self, **kw)


@dataclass(frozen=True)
class LatentGaussian:
    mean: np.ndarray
    variance: np.ndarray

    @classmethod
    def standard(cls, shape) -> LatentGaussian:
        return cls(np.zeros(shape), np.ones(shape))


# Visual paths: which network consumes the embedded feature.
VISUAL_PATHS = ("enc", "dec", "prior")


@dataclass
class GenerativeModel:
    config: ModelConfig
    nets: dict[str, MlpParams] = field(default_factory=dict)

    # -- parameter bookkeeping --------------------------------------------

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for net_name in sorted(self.nets):
            out.update(self.nets[net_name].named_arrays(prefix=f"{net_name}."))
        return out

    def with_params(self, arrays) -> GenerativeModel:
        nets = {name: net.replace_arrays(arrays, prefix=f"{name}.") for name, net in self.nets.items()}
        return GenerativeModel(self.config, nets)

    def copy(self) -> GenerativeModel:
        return self.with_params({k: v.copy() for k, v in self.named_params().items()})

    @property
    def decoder(self) -> MlpParams:
        return self.nets["decoder"]

    @property
    def encoder(self) -> MlpParams:
        return self.nets["encoder"]

    @property
    def prior_net(self) -> MlpParams | None:
        return self.nets.get("prior")

    def embedder_for(self, path: str) -> MlpParams | None:
        if not self.config.use_embedder:
            return None
        if self.config.share_embedder:
            return self.nets["embed"]
        return self.nets[f"embed_{path}"]

    def visual_paths(self) -> tuple[str, ...]:
        cfg = self.config
        paths = []
        if cfg.uses_visual:
            paths.append("enc")
        if cfg.conditional_decoder:
            paths.append("dec")
        if cfg.conditional_prior:
            paths.append("prior")
        return tuple(paths)


def build_model(config: ModelConfig, seed: int = 0, zero: bool = False) -> GenerativeModel:
    """Create a model with Glorot-initialized weights (or all zeros)."""
    rng = np.random.default_rng(seed)
    F, L, M, H = config.n_freq, config.latent_dim, config.visual_dim, config.hidden
    kind = config.kind
    enc_in = {"A-VAE": F, "V-VAE": M, "AV-VAE": F + M, "AV-CVAE": F + M}[kind]
    dec_in = L + M if config.conditional_decoder else L
    nets = {
        "encoder": init_mlp([enc_in, H, 2 * L], ["tanh", "identity"], rng, zero),
        "decoder": init_mlp([dec_in, H, F], ["tanh", "identity"], rng, zero),
    }
    if config.conditional_prior:
        nets["prior"] = init_mlp([M, H, 2 * L], ["tanh", "identity"], rng, zero)
    if config.use_embedder and config.uses_visual:
        sizes = [config.visual_input_dim, config.visual_hidden, M]
        if config.share_embedder:
            nets["embed"] = init_mlp(sizes, ["tanh", "tanh"], rng, zero)
        else:
            for path in GenerativeModel(config).visual_paths():
                nets[f"embed_{path}"] = init_mlp(sizes, ["tanh", "tanh"], rng, zero)
    return GenerativeModel(config, nets)


# -- forward maps (numpy or taped) ---------------------------------------


def embed_visual(m: GenerativeModel, raw_visual, path: str = "enc", tape: Tape | None = None):
    """Map a raw visual vector (or batch) to the M-dimensional feature ``v``."""
    cfg = m.config
    raw = raw_visual.value if isinstance(raw_visual, ad.Tensor) else np.asarray(raw_visual, dtype=np.float64)
    if raw.shape[-1] != cfg.visual_input_dim:
        raise ValidationError(f"visual input length {raw.shape[-1]} != {cfg.visual_input_dim}")
    net = m.embedder_for(path)
    if net is None:
        return raw_visual if tape is None else tape.constant(np.atleast_2d(raw))
    return mlp_forward(net, raw_visual, tape)


def _encoder_audio(m: GenerativeModel, s_power):
    s = np.asarray(s_power, dtype=np.float64)
    if m.config.encoder_input == "log-power":
        return np.log(np.maximum(s, VAR_FLOOR))
    return s


def _gaussian_from_output(out, L, tape):
    if tape is None:
        mean, logvar = out[..., :L], out[..., L:]
        return LatentGaussian(mean, np.maximum(np.exp(logvar), VAR_FLOOR))
    mean, logvar = ad.split(out, [L, L])
    return LatentGaussian(mean, ad.floor(ad.exp(logvar), VAR_FLOOR))


def _require_visual(m, v, what):
    if v is None:
        raise ValidationError(f"{m.config.kind} {what} requires visual features")


def encode(m: GenerativeModel, s_power=None, v=None, tape: Tape | None = None) -> LatentGaussian:
    """Approximate posterior q(z | s, v) for one frame or a batch of frames.

    ``v`` is the embedded visual feature (output of :func:`embed_visual`).
    """
    cfg = m.config
    if cfg.kind == "V-VAE":
        _require_visual(m, v, "encoder")
        inp = v
    else:
        if s_power is None:
            raise ValidationError(f"{cfg.kind} encoder requires the audio power spectrum")
        audio = _encoder_audio(m, s_power)
        if audio.shape[-1] != cfg.n_freq:
            raise ValidationError(f"audio input length {audio.shape[-1]} != {cfg.n_freq}")
        if cfg.kind == "A-VAE":
            inp = audio
        else:
            _require_visual(m, v, "encoder")
            if tape is None:
                vv = np.asarray(v, dtype=np.float64)
                if vv.shape[-1] != cfg.visual_dim:
                    raise ValidationError(f"visual feature length {vv.shape[-1]} != {cfg.visual_dim}")
                inp = np.concatenate([audio, vv], axis=-1)
            else:
                vt = v if isinstance(v, ad.Tensor) else tape.constant(np.atleast_2d(v))
                inp = ad.concat([tape.constant(np.atleast_2d(audio)), vt])
    if tape is not None and not isinstance(inp, ad.Tensor):
        inp = tape.constant(np.atleast_2d(inp))
    out = mlp_forward(m.encoder, inp, tape)
    return _gaussian_from_output(out, cfg.latent_dim, tape)


def prior(m: GenerativeModel, v=None, n: int | None = None, tape: Tape | None = None) -> LatentGaussian:
    """Latent prior: N(0, I) unless the model is conditional, then p(z | v)."""
    cfg = m.config
    L = cfg.latent_dim
    if not cfg.conditional_prior:
        if n is None:
            n = None if v is None or np.ndim(getattr(v, "value", v)) == 1 else np.shape(getattr(v, "value", v))[0]
        shape = (L,) if n is None else (n, L)
        return LatentGaussian.standard(shape)
    _require_visual(m, v, "prior")
    out = mlp_forward(m.prior_net, v, tape)
    return _gaussian_from_output(out, L, tape)


def decode(m: GenerativeModel, z, v=None, tape: Tape | None = None):
    """Speech variance sigma_f(z[, v]) for every frequency, floored at 1e-10."""
    cfg = m.config
    zv = z.value if isinstance(z, ad.Tensor) else np.asarray(z)
    if zv.shape[-1] != cfg.latent_dim:
        raise ValidationError(f"latent length {zv.shape[-1]} != {cfg.latent_dim}")
    if cfg.conditional_decoder:
        _require_visual(m, v, "decoder")
        if tape is None:
            inp = np.concatenate([zv, np.asarray(v, dtype=np.float64)], axis=-1)
        else:
            zt = z if isinstance(z, ad.Tensor) else tape.constant(np.atleast_2d(z))
            vt = v if isinstance(v, ad.Tensor) else tape.constant(np.atleast_2d(v))
            inp = ad.concat([zt, vt])
    else:
        inp = z
    out = mlp_forward(m.decoder, inp, tape)
    if tape is None:
        return np.maximum(np.exp(out), VAR_FLOOR)
    return ad.floor(ad.exp(out), VAR_FLOOR)
