"""Short-time Fourier analysis and least-squares overlap-add synthesis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

WINDOW_ENERGY_FLOOR = 1e-12


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValidationError("waveform must be mono (1-D)")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("waveform contains NaN or Inf")
        if int(self.sample_rate) <= 0:
            raise ValidationError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Framing parameters.

    The defaults give 64 ms frames at 16 kHz with a hop of 533 samples
    (about 30 frames per second), so ``F = 513``.
    """

    window_len: int = 1024
    hop: int = 533
    fft_len: int | None = None
    window: str = "sine"

    def __post_init__(self):
        if self.fft_len is None:
            object.__setattr__(self, "fft_len", self.window_len)
        if self.window_len <= 0 or not 0 < self.hop <= self.window_len:
            raise ValidationError("need 0 < hop <= window_len")
        if self.fft_len < self.window_len:
            raise ValidationError("fft_len must be >= window_len")
        if self.window not in ("sine", "hann"):
            raise ValidationError(f"unknown window {self.window!r}")

    @property
    def n_freq(self) -> int:
        return self.fft_len // 2 + 1

    def n_frames(self, length: int) -> int:
        """Number of frames needed so that the last sample is covered."""
        if length <= self.window_len:
            return 1
        return -(-(length - self.window_len) // self.hop) + 1

    def analysis_window(self) -> np.ndarray:
        # Both windows are sampled at half-integer points, so neither vanishes
        # at the frame edges and every sample stays invertible.
        t = (np.arange(self.window_len) + 0.5) / self.window_len
        w = np.sin(np.pi * t)
        return w if self.window == "sine" else w**2


@dataclass(frozen=True)
class ComplexSpectrogram:
    values: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    length: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 2 or values.shape[0] != self.config.n_freq:
            raise ValidationError(
                f"spectrogram must have {self.config.n_freq} rows, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    def with_values(self, values: np.ndarray) -> ComplexSpectrogram:
        return ComplexSpectrogram(values, self.config, self.length)


@dataclass(frozen=True)
class PowerSpectrogram:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValidationError("power spectrogram must be finite and nonnegative")
        object.__setattr__(self, "values", values)


def frame_signal(samples: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Return the zero-padded frames of ``samples`` as an (N, window_len) array."""
    n = cfg.n_frames(samples.shape[0])
    padded = np.zeros((n - 1) * cfg.hop + cfg.window_len)
    padded[: samples.shape[0]] = samples
    idx = np.arange(cfg.window_len)[None, :] + cfg.hop * np.arange(n)[:, None]
    return padded[idx]


def stft(w: Waveform, cfg: StftConfig | None = None) -> ComplexSpectrogram:
    cfg = cfg or StftConfig()
    if len(w) == 0:
        raise ValidationError("empty input")
    frames = frame_signal(w.samples, cfg) * cfg.analysis_window()
    spec = np.fft.rfft(frames, n=cfg.fft_len, axis=1).T
    return ComplexSpectrogram(spec, cfg, len(w))


def _window_energy(cfg: StftConfig, n_frames: int) -> np.ndarray:
    win2 = cfg.analysis_window() ** 2
    total = np.zeros((n_frames - 1) * cfg.hop + cfg.window_len)
    for n in range(n_frames):
        total[n * cfg.hop : n * cfg.hop + cfg.window_len] += win2
    return total


def istft(spec: ComplexSpectrogram, length: int | None = None, sample_rate: int = 16000) -> Waveform:
    """Least-squares inverse: windowed overlap-add divided by the summed squared window."""
    cfg = spec.config
    n_frames = spec.values.shape[1]
    length = length if length is not None else spec.length
    frames = np.fft.irfft(spec.values.T, n=cfg.fft_len, axis=1)[:, : cfg.window_len]
    frames = frames * cfg.analysis_window()
    out = np.zeros((n_frames - 1) * cfg.hop + cfg.window_len)
    for n in range(n_frames):
        out[n * cfg.hop : n * cfg.hop + cfg.window_len] += frames[n]
    energy = _window_energy(cfg, n_frames)
    if length is None:
        length = out.shape[0]
    if length > out.shape[0]:
        raise ValidationError("requested length exceeds the framed signal")
    energy = energy[:length]
    if np.any(energy < WINDOW_ENERGY_FLOOR):
        raise ValidationError("non-invertible framing")
    return Waveform(out[:length] / energy, sample_rate)


def power_spectrum(spec: ComplexSpectrogram | np.ndarray) -> PowerSpectrogram:
    values = spec.values if isinstance(spec, ComplexSpectrogram) else np.asarray(spec)
    return PowerSpectrogram(values.real**2 + values.imag**2)
