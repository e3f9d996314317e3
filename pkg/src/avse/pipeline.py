"""End-to-end glue: corpus frames for training, single-utterance enhancement,
and the mixture/enhance/score loop used by the evaluate command."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import AvSample, Corpus, mix_at_snr, synth_noise
from .evaluate import Record, sdr
from .mcem import McemConfig, run_mcem
from .models import Batch, GenerativeModel
from .nmf import SpeechDictionary, learn_speech_dictionary, semi_supervised_separate
from .reconstruct import enhance_from_result, synthesize
from .signal import StftConfig, Waveform, power_spectrum, stft

log = logging.getLogger(__name__)


def training_frames(samples: list[AvSample], cfg: StftConfig, with_visual: bool = True) -> Batch:
    powers, visuals = [], []
    for s in samples:
        powers.append(power_spectrum(stft(s.clean, cfg)).values.T)
        if with_visual:
            if s.visual is None:
                raise FileNotFoundError(f"{s.id}: visual features missing")
            visuals.append(s.visual)
    return Batch(np.concatenate(powers), np.concatenate(visuals) if with_visual else None)


def enhance(model: GenerativeModel, noisy: Waveform, visual, mcem_cfg: McemConfig,
            stft_cfg: StftConfig | None = None, unscale: bool = False, log_path=None):
    """Run MCEM, reconstruct, and synthesize; returns (waveform, enhanced STFT, MCEM result)."""
    X = stft(noisy, stft_cfg or StftConfig())
    result = run_mcem(X, visual if model.config.uses_visual else None, model, mcem_cfg, log_path=log_path)
    S = enhance_from_result(X, visual if model.config.uses_visual else None, model, result, mcem_cfg, unscale)
    return synthesize(S, len(noisy), noisy.sample_rate), S, result


def nmf_enhance(dictionary: SpeechDictionary, noisy: Waveform, stft_cfg: StftConfig | None = None,
                noise_rank: int = 10, iters: int = 100, seed=0) -> Waveform:
    X = stft(noisy, stft_cfg or StftConfig())
    S = semi_supervised_separate(dictionary, X, noise_rank, iters, seed)
    return synthesize(S, len(noisy), noisy.sample_rate)


def speech_dictionary(corpus: Corpus, rank: int = 64, iters: int = 200, seed=0) -> SpeechDictionary:
    frames = training_frames(corpus["train"], corpus.spec.stft_config, with_visual=False)
    return learn_speech_dictionary(frames.power.T, rank, iters, seed)


Enhancer = Callable[[AvSample, Waveform, int], Waveform]


def model_enhancer(model: GenerativeModel, mcem_cfg: McemConfig, stft_cfg: StftConfig) -> Enhancer:
    def run(sample: AvSample, noisy: Waveform, seed: int) -> Waveform:
        cfg = McemConfig(**{**mcem_cfg.__dict__, "seed": seed})
        out, _, _ = enhance(model, noisy, sample.visual, cfg, stft_cfg)
        return out
    return run


def nmf_enhancer(dictionary: SpeechDictionary, stft_cfg: StftConfig, noise_rank: int = 10,
                 iters: int = 100) -> Enhancer:
    def run(sample, noisy, seed):
        return nmf_enhance(dictionary, noisy, stft_cfg, noise_rank, iters, seed)
    return run


def identity_enhancer(sample, noisy, seed):
    return noisy


@dataclass(frozen=True)
class Condition:
    sample_index: int
    noise: str
    snr: float

    def seed(self, base: int) -> int:
        return int(np.random.default_rng([base, self.sample_index, int(round(self.snr * 10)) + 10_000,
                                          ("white", "babble", "hum").index(self.noise)
                                          if self.noise in ("white", "babble", "hum") else 7]).integers(2**31))


def evaluate_methods(samples: list[AvSample], methods: dict[str, Enhancer], snrs, noise_kinds,
                     seed: int = 0) -> list[Record]:
    """Mix every test sample with every noise kind at every SNR, enhance with each
    method, and score the SDR before and after."""
    records = []
    for i, sample in enumerate(samples):
        for kind in noise_kinds:
            cond_noise = None
            for snr in snrs:
                cond = Condition(i, kind, float(snr))
                cseed = cond.seed(seed)
                cond_noise = synth_noise(kind, sample.clean.duration, cseed, sample.clean.sample_rate)
                noisy = mix_at_snr(sample.clean, cond_noise, snr)
                sdr_in = sdr(sample.clean, noisy)
                for name, fn in methods.items():
                    out = fn(sample, noisy, cseed)
                    sdr_out = sdr(sample.clean, out)
                    records.append(Record(sample.id, name, kind, float(snr), sdr_in, sdr_out, sdr_out - sdr_in))
                    log.info("%s %s %+.0f dB %s: %.2f -> %.2f", sample.id, kind, snr, name, sdr_in, sdr_out)
    return records
