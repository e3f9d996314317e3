"""Monte Carlo EM for the noise parameters: random-walk Metropolis-Hastings
E-step over the latent codes, multiplicative-update M-step."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ValidationError
from .models import GenerativeModel, LatentGaussian, decode, embed_visual, encode, prior
from .nmf import NoiseModel, VAR_FLOOR, m_step, mixture_power, model_variance
from .signal import ComplexSpectrogram

LOG_PI = math.log(math.pi)
LOG_2PI = math.log(2 * math.pi)


class AcceptanceRateWarning(UserWarning):
    pass


@dataclass(frozen=True)
class McemConfig:
    em_iters: int = 100
    mh_steps: int = 40
    burn_in: int = 30
    epsilon2: float = 0.01
    noise_rank: int = 10
    seed: int = 0
    early_stop: bool = False
    early_stop_tol: float = 1e-5
    early_stop_window: int = 5
    recon_burn_in: int = 50

    def __post_init__(self):
        if not 0 <= self.burn_in < self.mh_steps:
            raise ValidationError("need 0 <= burn_in < mh_steps")
        if self.epsilon2 <= 0:
            raise ValidationError("epsilon2 must be positive")
        if self.em_iters < 0 or self.noise_rank < 1:
            raise ValidationError("em_iters must be >= 0 and noise_rank >= 1")

    @property
    def n_kept(self) -> int:
        return self.mh_steps - self.burn_in


@dataclass
class ChainState:
    z: np.ndarray  # (N, L)
    accept_count: np.ndarray = None  # (N,)
    n_proposed: int = 0

    def __post_init__(self):
        self.z = np.array(self.z, dtype=np.float64)
        if self.accept_count is None:
            self.accept_count = np.zeros(self.z.shape[0], dtype=np.int64)
        if not np.all(np.isfinite(self.z)):
            raise DivergenceError("latent chain contains non-finite values")

    def acceptance_rate(self) -> np.ndarray:
        if self.n_proposed == 0:
            return np.zeros_like(self.accept_count, dtype=float)
        return self.accept_count / self.n_proposed

    def copy(self) -> ChainState:
        return ChainState(self.z.copy(), self.accept_count.copy(), self.n_proposed)


class Posterior:
    """Unnormalized log posterior of every frame's latent code given the mixture.

    Holds the embedded visual features, the per-frame latent prior, and the
    current noise parameters.
    """

    def __init__(self, mixture, visual, model: GenerativeModel, noise: NoiseModel):
        self.model = model
        values = mixture.values if isinstance(mixture, ComplexSpectrogram) else np.asarray(mixture)
        self.power = mixture_power(values)  # (F, N)
        F, N = self.power.shape
        if F != model.config.n_freq:
            raise ValidationError(f"mixture has {F} bins, model expects {model.config.n_freq}")
        self.vis = embed_all(model, visual, N)
        self.prior = prior(model, self.vis.get("prior"), n=N)
        self.set_noise(noise)

    def set_noise(self, noise: NoiseModel):
        self.noise = noise
        self.noise_var = (noise.W @ noise.H).T  # (N, F)

    @property
    def n_frames(self) -> int:
        return self.power.shape[1]

    def speech_variance(self, z: np.ndarray) -> np.ndarray:
        """sigma(z_n, v_n) for z of shape (N, L) or (R, N, L); returns (..., N, F)."""
        dec_v = self.vis.get("dec")
        if z.ndim == 3:
            R, N, L = z.shape
            v = None if dec_v is None else np.tile(dec_v, (R, 1))
            return decode(self.model, z.reshape(R * N, L), v).reshape(R, N, -1)
        return decode(self.model, z, dec_v)

    def log_likelihood(self, z: np.ndarray, speech_var: np.ndarray | None = None) -> np.ndarray:
        sv = self.speech_variance(z) if speech_var is None else speech_var
        V = np.maximum(self.noise.g[:, None] * sv + self.noise_var, VAR_FLOOR)
        return np.sum(-LOG_PI - np.log(V) - self.power.T / V, axis=-1)

    def log_prior(self, z: np.ndarray) -> np.ndarray:
        return log_gaussian(z, self.prior)

    def log_target(self, z: np.ndarray) -> np.ndarray:
        return self.log_likelihood(z) + self.log_prior(z)


def embed_all(model: GenerativeModel, visual, n_frames: int) -> dict[str, np.ndarray]:
    cfg = model.config
    if not cfg.uses_visual:
        return {}
    if visual is None:
        raise ValidationError(f"{cfg.kind} enhancement requires visual features")
    raw = np.asarray(visual, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] != n_frames:
        raise ValidationError(f"visual features must have {n_frames} rows, got shape {raw.shape}")
    return {path: np.asarray(embed_visual(model, raw, path)) for path in model.visual_paths()}


def log_gaussian(z: np.ndarray, g: LatentGaussian) -> np.ndarray:
    return -0.5 * np.sum(LOG_2PI + np.log(g.variance) + (z - g.mean) ** 2 / g.variance, axis=-1)


def log_likelihood_frame(x_n, z_n, v_n, noise: NoiseModel, model: GenerativeModel, n: int) -> float:
    """ln p(x_n | z_n, v_n) for frame ``n`` under the speech-plus-NMF-noise model.

    ``v_n`` is the embedded visual feature used by the decoder (ignored by
    audio-only decoders).
    """
    sigma = decode(model, np.asarray(z_n, float), v_n if model.config.conditional_decoder else None)
    V = np.maximum(noise.g[n] * sigma + (noise.W @ noise.H[:, n]), VAR_FLOOR)
    x = np.asarray(x_n)
    value = float(np.sum(-LOG_PI - np.log(V) - (np.abs(x) ** 2) / V))
    if not math.isfinite(value):
        raise DivergenceError(f"log-likelihood of frame {n} is not finite")
    return value


def frame_streams(seed, frame_keys, stream) -> list[np.random.Generator]:
    """Independent generators keyed by (seed, frame key, stream)."""
    return [np.random.default_rng([int(seed), int(k), *stream]) for k in frame_keys]


def draw_mh_randomness(seed, frame_keys, stream, n_sweeps: int, latent_dim: int):
    gens = frame_streams(seed, frame_keys, stream)
    steps = np.empty((n_sweeps, len(gens), latent_dim))
    uniforms = np.empty((n_sweeps, len(gens)))
    for i, g in enumerate(gens):
        steps[:, i, :] = g.standard_normal((n_sweeps, latent_dim))
        uniforms[:, i] = g.random(n_sweeps)
    return steps, uniforms


def run_chain(chain: ChainState, post: Posterior, epsilon2: float, steps: np.ndarray,
              uniforms: np.ndarray) -> np.ndarray:
    """Advance every frame's chain by ``len(steps)`` sweeps; returns the visited states."""
    scale = math.sqrt(epsilon2)
    current = post.log_target(chain.z)
    visited = np.empty((steps.shape[0],) + chain.z.shape)
    with np.errstate(divide="ignore"):
        log_u = np.log(uniforms)
    for s in range(steps.shape[0]):
        proposal = chain.z + scale * steps[s]
        target = post.log_target(proposal)
        accept = log_u[s] < (target - current)
        chain.z[accept] = proposal[accept]
        current = np.where(accept, target, current)
        chain.accept_count += accept
        chain.n_proposed += 1
        visited[s] = chain.z
    return visited


def mh_sweep(chain: ChainState, mixture, visual, noise: NoiseModel, model: GenerativeModel,
             cfg: McemConfig, stream=(0,), frame_keys=None, posterior: Posterior | None = None) -> ChainState:
    """One random-walk MH sweep over all frames, in place; returns the chain."""
    post = posterior or Posterior(mixture, visual, model, noise)
    keys = np.arange(chain.z.shape[0]) if frame_keys is None else frame_keys
    steps, uniforms = draw_mh_randomness(cfg.seed, keys, tuple(stream), 1, chain.z.shape[1])
    run_chain(chain, post, cfg.epsilon2, steps, uniforms)
    return chain


def q_tilde_from_variances(power: np.ndarray, Vs_samples: np.ndarray, noise: NoiseModel) -> float:
    """Monte Carlo Q for speech variances Vs (R, F, N), up to an additive constant."""
    Vx = model_variance(noise, Vs_samples)
    R = Vx.shape[0]
    return float(-np.sum(np.log(Vx) + power / Vx) / R)


def q_tilde(samples: np.ndarray, mixture, visual, noise: NoiseModel, model: GenerativeModel) -> float:
    """-(1/R) sum_r sum_fn [ln V_x + |x|^2 / V_x] for latent samples of shape (R, N, L)."""
    post = Posterior(mixture, visual, model, noise)
    Vs = np.swapaxes(post.speech_variance(np.asarray(samples, float)), 1, 2)
    return q_tilde_from_variances(post.power, Vs, noise)


@dataclass
class McemResult:
    noise: NoiseModel
    chain: ChainState
    samples: np.ndarray  # (R, N, L), last kept E-step samples
    q_trace: list[float] = field(default_factory=list)
    accept_trace: list[float] = field(default_factory=list)
    log_lines: list[str] = field(default_factory=list)
    iterations: int = 0
    posterior: Posterior | None = None
    frame_keys: np.ndarray | None = None


LOG_HEADER = "iteration\tq_tilde\taccept_rate\twall_time"


def initial_latents(model: GenerativeModel, post: Posterior) -> np.ndarray:
    """Encoder mean on the mixture power spectrum (and visual features)."""
    kind = model.config.kind
    audio = None if kind == "V-VAE" else post.power.T
    return np.array(encode(model, audio, post.vis.get("enc")).mean, dtype=np.float64)


def init_noise(n_freq: int, frame_keys, rank: int, seed) -> NoiseModel:
    W = np.random.default_rng([int(seed), 0x57]).uniform(0.1, 1.0, size=(n_freq, rank))
    H = np.stack([g.uniform(0.1, 1.0, size=rank) for g in frame_streams(seed, frame_keys, (0x48,))], axis=1)
    return NoiseModel(W, H, np.ones(len(frame_keys)))


def run_mcem(mixture, visual, model: GenerativeModel, cfg: McemConfig | None = None,
             frame_keys=None, log_path=None) -> McemResult:
    """Estimate W_b, H_b and g for one mixture; the speech model stays fixed."""
    cfg = cfg or McemConfig()
    values = mixture.values if isinstance(mixture, ComplexSpectrogram) else np.asarray(mixture)
    F, N = values.shape
    keys = np.arange(N) if frame_keys is None else np.asarray(frame_keys)
    if len(keys) != N:
        raise ValidationError("frame_keys must have one entry per frame")
    noise = init_noise(F, keys, cfg.noise_rank, cfg.seed)
    post = Posterior(values, visual, model, noise)
    chain = ChainState(initial_latents(model, post))
    L = chain.z.shape[1]
    result = McemResult(noise, chain, np.repeat(chain.z[None], cfg.n_kept, axis=0), posterior=post,
                          frame_keys=keys)
    result.log_lines.append(LOG_HEADER)
    t0 = time.perf_counter()
    for it in range(1, cfg.em_iters + 1):
        before = chain.accept_count.copy()
        steps, uniforms = draw_mh_randomness(cfg.seed, keys, (1, it), cfg.mh_steps, L)
        visited = run_chain(chain, post, cfg.epsilon2, steps, uniforms)
        samples = visited[cfg.burn_in :]
        rate = float(np.mean((chain.accept_count - before) / cfg.mh_steps))
        Vs = np.swapaxes(post.speech_variance(samples), 1, 2)  # (R, F, N)
        noise = m_step(noise, post.power, Vs)
        if not (np.all(np.isfinite(noise.W)) and np.all(np.isfinite(noise.H)) and np.all(np.isfinite(noise.g))):
            raise DivergenceError(f"noise parameters became non-finite at EM iteration {it}")
        post.set_noise(noise)
        q = q_tilde_from_variances(post.power, Vs, noise)
        result.q_trace.append(q)
        result.accept_trace.append(rate)
        result.samples = samples
        result.iterations = it
        result.log_lines.append(f"{it}\t{q:.10g}\t{rate:.6f}\t{time.perf_counter() - t0:.3f}")
        if cfg.early_stop and _converged(result.q_trace, cfg):
            break
    result.noise = noise
    if result.accept_trace:
        mean_rate = float(np.mean(result.accept_trace))
        if not 0.1 < mean_rate < 0.9:
            warnings.warn(f"mean MH acceptance rate {mean_rate:.3f} outside (0.1, 0.9)",
                          AcceptanceRateWarning, stacklevel=2)
    if log_path is not None:
        with open(log_path, "w") as fh:
            fh.write("\n".join(result.log_lines) + "\n")
    return result


def _converged(trace, cfg: McemConfig) -> bool:
    w = cfg.early_stop_window
    if len(trace) <= w:
        return False
    recent = np.asarray(trace[-(w + 1):])
    rel = np.abs(np.diff(recent)) / np.maximum(np.abs(recent[1:]), 1e-300)
    return bool(np.all(rel < cfg.early_stop_tol))


def continue_sampling(result: McemResult, cfg: McemConfig, n_keep: int | None = None,
                      frame_keys=None) -> np.ndarray:
    """Posterior samples under the final parameters: ``recon_burn_in`` sweeps
    discarded, then ``n_keep`` (default R) sweeps kept."""
    post = result.posterior
    post.set_noise(result.noise)
    chain = result.chain
    n_keep = cfg.n_kept if n_keep is None else n_keep
    if frame_keys is None:
        frame_keys = result.frame_keys if result.frame_keys is not None else np.arange(chain.z.shape[0])
    keys = np.asarray(frame_keys)
    total = cfg.recon_burn_in + n_keep
    steps, uniforms = draw_mh_randomness(cfg.seed, keys, (2,), total, chain.z.shape[1])
    visited = run_chain(chain, post, cfg.epsilon2, steps, uniforms)
    return visited[cfg.recon_burn_in :]
