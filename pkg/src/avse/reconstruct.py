"""Posterior-averaged Wiener filtering and waveform synthesis.

The filter uses the decoder output as a *variance*:
``g sigma / (g sigma + (W H))``.  Squaring the decoder output instead would
treat it as a standard deviation, which contradicts how the speech model is
defined; that reading is not implemented.
"""

from __future__ import annotations

import numpy as np

from .mcem import McemConfig, McemResult, Posterior, continue_sampling
from .models import GenerativeModel, decode
from .nmf import VAR_FLOOR, NoiseModel
from .signal import ComplexSpectrogram, Waveform, istft


def wiener_ratio(speech_var, gain, noise_var):
    """Elementwise ``g s / (g s + b)`` with the denominator floored."""
    num = gain * speech_var
    return num / np.maximum(num + noise_var, VAR_FLOOR)


def wiener_gain(z_n, v_n, noise: NoiseModel, model: GenerativeModel, f: int, n: int) -> float:
    """Wiener gain of TF bin (f, n) for latent code ``z_n`` and embedded feature ``v_n``."""
    sigma = decode(model, np.asarray(z_n, float), v_n if model.config.conditional_decoder else None)
    return float(wiener_ratio(sigma[f], noise.g[n], noise.W[f] @ noise.H[:, n]))


def average_gain(post: Posterior, noise: NoiseModel, samples: np.ndarray) -> np.ndarray:
    """Mean Wiener gain over latent samples (R, N, L); returns (F, N)."""
    sv = np.swapaxes(post.speech_variance(np.asarray(samples, float)), 1, 2)  # (R, F, N)
    gains = wiener_ratio(sv, noise.g, noise.W @ noise.H)
    return np.clip(gains.mean(axis=0), 0.0, 1.0)


def estimate_speech(mixture: ComplexSpectrogram, visual, model: GenerativeModel, noise: NoiseModel,
                    samples: np.ndarray, unscale: bool = False,
                    posterior: Posterior | None = None) -> ComplexSpectrogram:
    """Posterior mean of the gain-scaled speech STFT, ``E[gain] * x``.

    With ``unscale`` each frame is further divided by ``sqrt(g_n)``.
    """
    post = posterior or Posterior(mixture, visual, model, noise)
    gain = average_gain(post, noise, samples)
    est = gain * mixture.values
    if unscale:
        est = est / np.sqrt(np.maximum(noise.g, VAR_FLOOR))[None, :]
    return mixture.with_values(est)


def enhance_from_result(mixture: ComplexSpectrogram, visual, model: GenerativeModel,
                        result: McemResult, cfg: McemConfig, unscale: bool = False) -> ComplexSpectrogram:
    samples = continue_sampling(result, cfg)
    return estimate_speech(mixture, visual, model, result.noise, samples, unscale, result.posterior)


def synthesize(enhanced: ComplexSpectrogram, length: int | None = None, sample_rate: int = 16000) -> Waveform:
    return istft(enhanced, length=length, sample_rate=sample_rate)
