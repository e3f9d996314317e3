"""NMF noise model updates for MCEM and the semi-supervised IS-NMF baseline.

All updates are the auxiliary-function (majorize-minimize) multiplicative
rules for the Itakura-Saito / complex-Gaussian likelihood, with exponent 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModelError, ValidationError
from .signal import ComplexSpectrogram

VAR_FLOOR = 1e-10


@dataclass
class NoiseModel:
    W: np.ndarray  # (F, K)
    H: np.ndarray  # (K, N)
    g: np.ndarray  # (N,)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.H = np.asarray(self.H, dtype=np.float64)
        self.g = np.asarray(self.g, dtype=np.float64)
        if self.W.shape[1] != self.H.shape[0] or self.g.shape != (self.H.shape[1],):
            raise ValidationError(f"inconsistent shapes W{self.W.shape} H{self.H.shape} g{self.g.shape}")
        if np.any(self.W < 0) or np.any(self.H < 0) or np.any(self.g < 0):
            raise ValidationError("noise model entries must be nonnegative")

    @property
    def rank(self) -> int:
        return self.W.shape[1]

    def noise_variance(self) -> np.ndarray:
        return self.W @ self.H

    def copy(self) -> NoiseModel:
        return NoiseModel(self.W.copy(), self.H.copy(), self.g.copy())


@dataclass
class SpeechDictionary:
    W: np.ndarray  # (F, K_s)

    @property
    def rank(self) -> int:
        return self.W.shape[1]


def init_noise_model(n_freq: int, n_frames: int, rank: int = 10, seed=0) -> NoiseModel:
    """Uniform(0.1, 1) factors and unit gains."""
    rng = np.random.default_rng(seed)
    W = rng.uniform(0.1, 1.0, size=(n_freq, rank))
    H = rng.uniform(0.1, 1.0, size=(rank, n_frames))
    return NoiseModel(W, H, np.ones(n_frames))


def mixture_power(X) -> np.ndarray:
    """|X|^2 for a spectrogram or complex array; real arrays are taken as powers already."""
    if isinstance(X, ComplexSpectrogram):
        X = X.values
    X = np.asarray(X)
    if np.iscomplexobj(X):
        return X.real**2 + X.imag**2
    return X.astype(np.float64)


def model_variance(noise: NoiseModel, Vs_samples: np.ndarray) -> np.ndarray:
    """V_x^(r) = g_n sigma_f(z_n^(r)) + (W H)_fn for every sample, floored."""
    Vs = np.asarray(Vs_samples, dtype=np.float64)
    return np.maximum(noise.g * Vs + noise.W @ noise.H, VAR_FLOOR)


def _ratio(num, den):
    if np.any(den == 0):
        raise DegenerateModelError("degenerate model variance: zero denominator in multiplicative update")
    return num / den


def _stack(Vx_samples):
    Vx = np.asarray(Vx_samples, dtype=np.float64)
    return Vx[None] if Vx.ndim == 2 else Vx


def update_h(noise: NoiseModel, X, Vx_samples) -> np.ndarray:
    P = mixture_power(X)
    Vx = _stack(Vx_samples)
    num = noise.W.T @ (P * np.sum(Vx**-2, axis=0))
    den = noise.W.T @ np.sum(Vx**-1, axis=0)
    return noise.H * np.sqrt(_ratio(num, den))


def update_w(noise: NoiseModel, X, Vx_samples) -> np.ndarray:
    P = mixture_power(X)
    Vx = _stack(Vx_samples)
    num = (P * np.sum(Vx**-2, axis=0)) @ noise.H.T
    den = np.sum(Vx**-1, axis=0) @ noise.H.T
    return noise.W * np.sqrt(_ratio(num, den))


def update_gain(noise: NoiseModel, X, Vx_samples, Vs_samples) -> np.ndarray:
    P = mixture_power(X)
    Vx = _stack(Vx_samples)
    Vs = _stack(Vs_samples)
    num = np.sum(P * np.sum(Vs * Vx**-2, axis=0), axis=0)
    den = np.sum(np.sum(Vs * Vx**-1, axis=0), axis=0)
    return noise.g * np.sqrt(_ratio(num, den))


def m_step(noise: NoiseModel, X, Vs_samples) -> NoiseModel:
    """One block-coordinate sweep H -> W -> g, refreshing V_x between blocks."""
    P = mixture_power(X)
    cur = noise.copy()
    cur.H = update_h(cur, P, model_variance(cur, Vs_samples))
    cur.W = update_w(cur, P, model_variance(cur, Vs_samples))
    cur.g = update_gain(cur, P, model_variance(cur, Vs_samples), Vs_samples)
    return cur


# --------------------------------------------------------------------------
# Plain IS-NMF


def is_divergence_total(P: np.ndarray, V: np.ndarray) -> float:
    P = np.maximum(P, VAR_FLOOR)
    ratio = P / V
    return float(np.sum(ratio - np.log(ratio) - 1.0))


def _is_update_h(P, W, H, V):
    return H * np.sqrt(_ratio(W.T @ (P * V**-2), W.T @ V**-1))


def _is_update_w(P, W, H, V):
    return W * np.sqrt(_ratio((P * V**-2) @ H.T, V**-1 @ H.T))


def fit_is_nmf(power, rank: int, iters: int = 200, seed=0, return_history: bool = False):
    """Factor ``power ~ W H`` under the Itakura-Saito divergence.

    With ``return_history`` the total divergence after initialization and
    after every iteration is returned as a third element.
    """
    P = np.maximum(np.asarray(getattr(power, "values", power), dtype=np.float64), VAR_FLOOR)
    if rank < 1:
        raise ValidationError("rank must be >= 1")
    F, N = P.shape
    rng = np.random.default_rng(seed)
    W = rng.uniform(0.1, 1.0, size=(F, rank))
    H = rng.uniform(0.1, 1.0, size=(rank, N))
    history = [is_divergence_total(P, np.maximum(W @ H, VAR_FLOOR))]
    for _ in range(iters):
        H = _is_update_h(P, W, H, np.maximum(W @ H, VAR_FLOOR))
        W = _is_update_w(P, W, H, np.maximum(W @ H, VAR_FLOOR))
        history.append(is_divergence_total(P, np.maximum(W @ H, VAR_FLOOR)))
    if return_history:
        return W, H, history
    return W, H


def learn_speech_dictionary(power, rank: int = 64, iters: int = 200, seed=0) -> SpeechDictionary:
    W, _ = fit_is_nmf(power, rank, iters, seed)
    return SpeechDictionary(W)


def semi_supervised_separate(W_s: SpeechDictionary, X: ComplexSpectrogram, noise_rank: int = 10,
                             iters: int = 100, seed=0, return_mask: bool = False,
                             noise_init_scale: float = 1e-2, warmup: int | None = None):
    """Fit speech activations and a free noise NMF with the speech dictionary frozen,
    then apply the Wiener mask W_s H_s / (W_s H_s + W_b H_b) to the mixture.

    The split between speech and noise is not identifiable from the data
    alone, so the noise factors start small (``noise_init_scale`` times the
    mean mixture power) and only the speech activations are updated during
    the first ``warmup`` iterations (default: half of ``iters``).
    """
    values = X.values if isinstance(X, ComplexSpectrogram) else np.asarray(X)
    P = np.maximum(mixture_power(values), VAR_FLOOR)
    F, N = P.shape
    Ws = W_s.W if isinstance(W_s, SpeechDictionary) else np.asarray(W_s)
    if Ws.shape[0] != F:
        raise ValidationError(f"dictionary has {Ws.shape[0]} rows, mixture has {F}")
    warmup = iters // 2 if warmup is None else warmup
    rng = np.random.default_rng(seed)
    Hs = rng.uniform(0.1, 1.0, size=(Ws.shape[1], N))
    Wb = rng.uniform(0.1, 1.0, size=(F, noise_rank))
    Hb = rng.uniform(0.1, 1.0, size=(noise_rank, N))
    level = P.mean()
    Hs *= level / max((Ws @ Hs).mean(), VAR_FLOOR)
    c = np.sqrt(noise_init_scale * level / (Wb @ Hb).mean())
    Wb, Hb = Wb * c, Hb * c

    def total():
        return np.maximum(Ws @ Hs + Wb @ Hb, VAR_FLOOR)

    for it in range(iters):
        Hs = _is_update_h(P, Ws, Hs, total())
        if it < warmup:
            continue
        Wb = _is_update_w(P, Wb, Hb, total())
        Hb = _is_update_h(P, Wb, Hb, total())
    speech = Ws @ Hs
    noise = Wb @ Hb
    mask = np.clip(speech / np.maximum(speech + noise, VAR_FLOOR), 0.0, 1.0)
    out = mask * values
    if isinstance(X, ComplexSpectrogram):
        out = X.with_values(out)
    return (out, mask) if return_mask else out
