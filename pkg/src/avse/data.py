"""Synthetic audio-visual corpus, noise generators and SNR mixing.

Each utterance is a harmonic source (slowly wandering pitch) shaped by a
few formant resonances whose centre frequencies and amplitudes follow
seeded random walks, under a syllable-rate on/off envelope.  The visual
stream is a fixed linear embedding of the per-frame formant parameters,
blended with noise according to ``visual_coupling``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .signal import StftConfig, Waveform, frame_signal
from . import storage

SPLITS = ("train", "valid", "test")
NOISE_KINDS = ("white", "babble", "hum")
_EMBED_SEED = 20_190_911  # fixed: the visual embedding is part of the corpus definition


@dataclass(frozen=True)
class CorpusSpec:
    n_train: int = 40
    n_valid: int = 8
    n_test: int = 9
    utterance_seconds: float = 3.0
    sample_rate: int = 16000
    n_formants: int = 3
    visual_coupling: float = 1.0
    visual_dim: int = 128
    window_len: int = 1024
    hop: int = 533
    seed: int = 0

    def __post_init__(self):
        for name in ("n_train", "n_valid", "n_test"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if not 0.0 <= self.visual_coupling <= 1.0:
            raise ValidationError("visual_coupling must lie in [0, 1]")
        if self.utterance_seconds <= 0 or self.sample_rate <= 0:
            raise ValidationError("utterance_seconds and sample_rate must be positive")
        if self.n_formants < 1 or self.visual_dim < 1:
            raise ValidationError("n_formants and visual_dim must be >= 1")

    @property
    def stft_config(self) -> StftConfig:
        return StftConfig(window_len=self.window_len, hop=self.hop)

    def counts(self) -> dict[str, int]:
        return {"train": self.n_train, "valid": self.n_valid, "test": self.n_test}

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class AvSample:
    id: str
    clean: Waveform
    visual: np.ndarray | None  # (N, M), one row per STFT frame
    params: dict | None = None  # frame-rate synthesis parameters, when generated here


@dataclass
class Corpus:
    spec: CorpusSpec
    splits: dict[str, list[AvSample]] = field(default_factory=dict)

    def __getitem__(self, split: str) -> list[AvSample]:
        return self.splits[split]


# --------------------------------------------------------------------------
# Utterance synthesis


def _formant_bands(n_formants: int, nyquist: float):
    edges = np.geomspace(250.0, min(5000.0, 0.8 * nyquist), n_formants + 1)
    return list(zip(edges[:-1], edges[1:]))


def _bounded_walk(rng, n, lo, hi, step):
    """Random walk reflected into [lo, hi], started uniformly."""
    x = np.empty(n)
    x[0] = rng.uniform(lo, hi)
    for i in range(1, n):
        v = x[i - 1] + step * rng.standard_normal()
        if v < lo:
            v = 2 * lo - v
        if v > hi:
            v = 2 * hi - v
        x[i] = min(max(v, lo), hi)
    return x


def _syllable_envelope(rng, n_frames, frame_rate):
    """Frame-rate on/off envelope in [0, 1] with ~4 syllables per second."""
    env = np.zeros(n_frames)
    t = 0.0
    duration = n_frames / frame_rate
    while t < duration:
        length = rng.uniform(0.12, 0.35)
        peak = rng.uniform(0.5, 1.0)
        start = int(t * frame_rate)
        stop = min(n_frames, max(start + 1, int((t + length) * frame_rate)))
        k = np.arange(stop - start)
        env[start:stop] = np.maximum(env[start:stop], peak * np.sin(np.pi * (k + 0.5) / (stop - start)))
        t += length + rng.uniform(0.02, 0.2)
    return env


def _frame_params(rng, spec: CorpusSpec, n_frames: int):
    frame_rate = spec.sample_rate / spec.hop
    bands = _formant_bands(spec.n_formants, spec.sample_rate / 2)
    centres = np.stack([_bounded_walk(rng, n_frames, lo, hi, 0.08 * (hi - lo)) for lo, hi in bands])
    log_amp = np.stack([_bounded_walk(rng, n_frames, -1.5, 0.0, 0.15) for _ in bands])
    pitch = _bounded_walk(rng, n_frames, 90.0, 220.0, 4.0)
    envelope = _syllable_envelope(rng, n_frames, frame_rate)
    return {"centres": centres, "log_amp": log_amp, "pitch": pitch, "envelope": envelope, "bands": bands}


def _render(rng, spec: CorpusSpec, params, n_samples: int) -> np.ndarray:
    sr = spec.sample_rate
    cfg = spec.stft_config
    n_frames = params["pitch"].shape[0]
    frame_t = (np.arange(n_frames) * cfg.hop + cfg.window_len / 2) / sr
    t = np.arange(n_samples) / sr

    def interp(x):
        return np.interp(t, frame_t, x)

    f0 = interp(params["pitch"])
    env = interp(params["envelope"])
    phase = 2 * np.pi * np.cumsum(f0) / sr
    centres = np.stack([interp(c) for c in params["centres"]])
    amps = np.stack([interp(np.exp(a)) for a in params["log_amp"]])
    widths = np.array([0.12 * (hi - lo) + 60.0 for lo, hi in params["bands"]])
    out = np.zeros(n_samples)
    n_harm = int(0.45 * sr / 90.0)
    for h in range(1, n_harm + 1):
        fh = h * f0
        weight = np.zeros(n_samples)
        for k in range(centres.shape[0]):
            weight += amps[k] * np.exp(-0.5 * ((fh - centres[k]) / widths[k]) ** 2)
        weight[fh >= 0.48 * sr] = 0.0
        out += weight * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    out *= env
    out += 1e-3 * rng.standard_normal(n_samples)  # breath floor keeps every TF bin positive
    return out / np.sqrt(np.mean(out**2)) * 0.1


def _embedding_matrix(spec: CorpusSpec, n_in: int) -> np.ndarray:
    rng = np.random.default_rng([_EMBED_SEED, n_in, spec.visual_dim])
    return rng.standard_normal((spec.visual_dim, n_in)) / np.sqrt(n_in)


def _param_features(spec: CorpusSpec, params) -> np.ndarray:
    """Per-frame descriptor: radial-basis codes of each formant's centre, weighted
    by its linear and log level, plus the envelope and pitch."""
    feats = []
    env = params["envelope"]
    log_env = np.log(env + 1e-2)
    for (lo, hi), c, a in zip(params["bands"], params["centres"], params["log_amp"]):
        grid = np.linspace(lo, hi, 8)
        width = (hi - lo) / 7
        rbf = np.exp(-0.5 * ((c[:, None] - grid[None, :]) / width) ** 2)
        feats.append(rbf * (np.exp(a) * env)[:, None])
        feats.append(rbf * ((a + log_env) / 5.0)[:, None])
        feats.append(a[:, None])
    feats.append(env[:, None])
    feats.append(log_env[:, None] / 5.0)
    feats.append(((params["pitch"] - 155.0) / 65.0)[:, None])
    return np.concatenate(feats, axis=1)


def visual_features(spec: CorpusSpec, params, rng) -> np.ndarray:
    phi = _param_features(spec, params)
    emb = 3.0 * phi @ _embedding_matrix(spec, phi.shape[1]).T
    noise = rng.standard_normal(emb.shape)
    c = spec.visual_coupling
    return c * emb + (1.0 - c) * noise


def synth_utterance(spec: CorpusSpec, seed_path) -> AvSample:
    rng = np.random.default_rng([spec.seed, *seed_path])
    n_samples = int(round(spec.utterance_seconds * spec.sample_rate))
    n_frames = spec.stft_config.n_frames(n_samples)
    params = _frame_params(rng, spec, n_frames)
    clean = _render(rng, spec, params, n_samples)
    visual = visual_features(spec, params, np.random.default_rng([spec.seed, *seed_path, 1]))
    sample = AvSample("-".join(str(s) for s in seed_path), Waveform(clean, spec.sample_rate), visual)
    sample.params = params
    check_alignment(sample, spec.stft_config)
    return sample


def check_alignment(sample: AvSample, cfg: StftConfig) -> None:
    if sample.visual is None:
        return
    n = cfg.n_frames(len(sample.clean))
    if sample.visual.shape[0] != n:
        raise ValidationError(f"{sample.id}: {sample.visual.shape[0]} visual rows for {n} STFT frames")


def synth_corpus(spec: CorpusSpec) -> Corpus:
    corpus = Corpus(spec)
    for s, split in enumerate(SPLITS):
        corpus.splits[split] = [
            _renamed(synth_utterance(spec, (s, i)), f"{split}-{i:03d}") for i in range(spec.counts()[split])
        ]
    return corpus


def _renamed(sample: AvSample, new_id: str) -> AvSample:
    sample.id = new_id
    return sample


# --------------------------------------------------------------------------
# Noise and mixing


def synth_noise(kind: str, seconds: float, seed=0, sample_rate: int = 16000) -> Waveform:
    n = int(round(seconds * sample_rate))
    rng = np.random.default_rng([int(seed), NOISE_KINDS.index(kind) if kind in NOISE_KINDS else 99])
    t = np.arange(n) / sample_rate
    if kind == "white":
        x = rng.standard_normal(n)
    elif kind == "babble":
        x = np.zeros(n)
        n_bursts = int(60 * seconds)
        for _ in range(n_bursts):
            length = int(rng.uniform(0.05, 0.3) * sample_rate)
            start = int(rng.integers(0, max(1, n - length)))
            f = rng.uniform(100.0, 4000.0)
            seg = np.arange(min(length, n - start))
            burst = np.sin(2 * np.pi * f * seg / sample_rate + rng.uniform(0, 2 * np.pi))
            x[start : start + seg.size] += rng.uniform(0.2, 1.0) * np.hanning(seg.size) * burst
    elif kind == "hum":
        x = np.zeros(n)
        for h in range(1, int(0.45 * sample_rate / 50) + 1):
            x += np.sin(2 * np.pi * 50.0 * h * t + rng.uniform(0, 2 * np.pi)) / h
    else:
        raise ValidationError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
    return Waveform(x, sample_rate)


def _power(x: np.ndarray) -> float:
    return float(np.mean(x**2))


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """Scale ``noise`` (looped or trimmed to length) so the mixture has the requested SNR."""
    c = clean.samples
    reps = -(-len(c) // len(noise))
    nz = np.tile(noise.samples, reps)[: len(c)]
    pc, pn = _power(c), _power(nz)
    if pc == 0 or pn == 0:
        raise ValidationError("zero-power clean or noise signal")
    scale = np.sqrt(pc / (pn * 10.0 ** (snr_db / 10.0)))
    return Waveform(c + scale * nz, clean.sample_rate)


def scaled_noise(clean: Waveform, noise: Waveform, snr_db: float) -> np.ndarray:
    """The noise component that :func:`mix_at_snr` adds."""
    return mix_at_snr(clean, noise, snr_db).samples - clean.samples


# --------------------------------------------------------------------------
# Disk layout


def write_corpus(corpus: Corpus, out_dir, with_visual: bool = True) -> Path:
    out = Path(out_dir)
    manifest = {"spec": corpus.spec.to_dict(), "spec_hash": corpus.spec.digest(), "splits": {}}
    for split, samples in corpus.splits.items():
        d = out / split
        d.mkdir(parents=True, exist_ok=True)
        manifest["splits"][split] = [s.id for s in samples]
        for s in samples:
            storage.write_wav(d / f"{s.id}.wav", s.clean)
            if with_visual and s.visual is not None:
                storage.save_visual(d / f"{s.id}.vis", s.visual)
    storage.write_json(out / "manifest.json", manifest)
    return out


def read_corpus(corpus_dir, splits=SPLITS) -> Corpus:
    root = Path(corpus_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{manifest_path} not found")
    manifest = storage.read_json(manifest_path)
    spec = CorpusSpec(**manifest["spec"])
    corpus = Corpus(spec)
    for split in splits:
        samples = []
        for sid in manifest["splits"].get(split, []):
            clean = storage.read_wav(root / split / f"{sid}.wav", expected_rate=spec.sample_rate)
            vis_path = root / split / f"{sid}.vis"
            visual = storage.load_visual(vis_path) if vis_path.exists() else None
            sample = AvSample(sid, clean, visual)
            check_alignment(sample, spec.stft_config)
            samples.append(sample)
        corpus.splits[split] = samples
    return corpus


def band_log_energies(w: Waveform, cfg: StftConfig, n_bands: int = 8, max_hz: float = 5000.0) -> np.ndarray:
    """Per-frame log energies in ``n_bands`` equal-width bands below ``max_hz``, (N, n_bands)."""
    frames = frame_signal(w.samples, cfg) * cfg.analysis_window()
    power = np.abs(np.fft.rfft(frames, n=cfg.fft_len, axis=1)) ** 2
    top = min(power.shape[1], int(max_hz * cfg.fft_len / w.sample_rate) + 1)
    edges = np.linspace(0, top, n_bands + 1).astype(int)
    bands = np.stack([power[:, a:b].sum(axis=1) for a, b in zip(edges[:-1], edges[1:])], axis=1)
    return np.log(bands + 1e-12)
