"""Training objectives: Itakura-Saito reconstruction, Gaussian KL, blended CVAE bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tape
from ..errors import DivergenceError, ValidationError
from .networks import VAR_FLOOR, GenerativeModel, LatentGaussian, decode, embed_visual, encode, prior


def is_divergence(x, y):
    """Itakura-Saito divergence ``x/y - ln(x/y) - 1`` (elementwise, numpy)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ratio = x / y
    return ratio - np.log(ratio) - 1.0


def gaussian_kl(q: LatentGaussian, p: LatentGaussian):
    """KL(q || p) for diagonal Gaussians, summed over the last axis.

    Works on numpy arrays or taped tensors; for a batch the result is the
    sum over frames as well.
    """
    if any(isinstance(a, ad.Tensor) for a in (q.mean, q.variance, p.mean, p.variance)):
        terms = (
            ad.log(p.variance) - ad.log(q.variance)
            + (q.variance + ad.square(q.mean - p.mean)) / p.variance
            - 1.0
        )
        return 0.5 * ad.total(terms)
    qm, qv = np.asarray(q.mean, float), np.asarray(q.variance, float)
    pm, pv = np.asarray(p.mean, float), np.asarray(p.variance, float)
    if qm.shape[-1] != pm.shape[-1]:
        raise ValidationError("latent dimensions differ")
    return 0.5 * np.sum(np.log(pv / qv) + (qv + (qm - pm) ** 2) / pv - 1.0, axis=-1)


def _neg_is_total(s_power, sigma):
    """-sum_f d_IS(s; sigma) on the tape, with the data-only log term split off."""
    x = np.maximum(s_power, VAR_FLOOR)
    ratio = x / sigma
    # d_IS = x/sigma + (ln sigma - ln x) - 1
    return -ad.total(ratio + (ad.log(sigma) - np.log(x)) - 1.0)


def _reparam(g: LatentGaussian, eps):
    return g.mean + ad.sqrt(g.variance) * eps


@dataclass
class Batch:
    """Training frames: clean power spectra (B, F) and raw visual vectors (B, D) or None."""

    power: np.ndarray
    visual: np.ndarray | None = None

    def __post_init__(self):
        self.power = np.atleast_2d(np.asarray(self.power, dtype=np.float64))
        if self.visual is not None:
            self.visual = np.atleast_2d(np.asarray(self.visual, dtype=np.float64))
            if self.visual.shape[0] != self.power.shape[0]:
                raise ValidationError("audio and visual frame counts differ")

    def __len__(self):
        return self.power.shape[0]

    def subset(self, idx) -> Batch:
        return Batch(self.power[idx], None if self.visual is None else self.visual[idx])


def draw_noise(m: GenerativeModel, n_frames: int, seed) -> list[tuple[np.ndarray, np.ndarray]]:
    """Reparameterization noise: for each of the R samples, (eps_q, eps_prior).

    ``eps_q`` is always drawn first so that models sharing a seed see the
    same posterior noise whatever their kind.
    """
    rng = np.random.default_rng(seed)
    L = m.config.latent_dim
    out = []
    for _ in range(m.config.n_samples):
        eps_q = rng.standard_normal((n_frames, L))
        eps_p = rng.standard_normal((n_frames, L)) if m.config.conditional_prior else None
        out.append((eps_q, eps_p))
    return out


def objective_graph(m: GenerativeModel, batch: Batch, seed, tape: Tape, blend: bool = True):
    """Build the per-frame training objective on ``tape``; returns (objective, rec, kl) tensors."""
    cfg = m.config
    if len(batch) == 0:
        raise ValidationError("empty batch")
    if cfg.uses_visual and batch.visual is None:
        raise ValidationError(f"{cfg.kind} needs visual features")
    B = len(batch)
    vis = {}
    for path in m.visual_paths():
        vis[path] = embed_visual(m, batch.visual, path, tape)
    q = encode(m, None if cfg.kind == "V-VAE" else batch.power, vis.get("enc"), tape)
    p = prior(m, vis.get("prior"), n=B, tape=tape)
    kl = gaussian_kl(q, p)
    rec_q = rec_p = 0.0
    noise = draw_noise(m, B, seed)
    for eps_q, eps_p in noise:
        sigma = decode(m, _reparam(q, eps_q), vis.get("dec"), tape)
        rec_q = rec_q + _neg_is_total(batch.power, sigma)
        if cfg.conditional_prior:
            sigma_p = decode(m, _reparam(p, eps_p), vis.get("dec"), tape)
            rec_p = rec_p + _neg_is_total(batch.power, sigma_p)
    R = float(cfg.n_samples)
    if R != 1.0:
        rec_q = rec_q * (1.0 / R)
        rec_p = rec_p * (1.0 / R) if cfg.conditional_prior else rec_p
    if cfg.conditional_prior and blend:
        a = cfg.alpha
        total = a * rec_q + (1.0 - a) * rec_p - (a * cfg.beta) * kl
    else:
        total = rec_q - cfg.beta * kl
    return total * (1.0 / B), rec_q, kl


def frame_objectives(m: GenerativeModel, batch: Batch, seed) -> np.ndarray:
    """Per-frame objective values (numpy), used to locate divergence."""
    cfg = m.config
    vis = {path: embed_visual(m, batch.visual, path) for path in m.visual_paths()}
    q = encode(m, None if cfg.kind == "V-VAE" else batch.power, vis.get("enc"))
    p = prior(m, vis.get("prior"), n=len(batch))
    kl = gaussian_kl(q, p)
    x = np.maximum(batch.power, VAR_FLOOR)
    rec_q = np.zeros(len(batch))
    rec_p = np.zeros(len(batch))
    for eps_q, eps_p in draw_noise(m, len(batch), seed):
        sigma = decode(m, q.mean + np.sqrt(q.variance) * eps_q, vis.get("dec"))
        rec_q -= is_divergence(x, sigma).sum(axis=1)
        if cfg.conditional_prior:
            sigma = decode(m, p.mean + np.sqrt(p.variance) * eps_p, vis.get("dec"))
            rec_p -= is_divergence(x, sigma).sum(axis=1)
    rec_q /= cfg.n_samples
    rec_p /= cfg.n_samples
    if cfg.conditional_prior:
        a = cfg.alpha
        return a * rec_q + (1 - a) * rec_p - a * cfg.beta * kl
    return rec_q - cfg.beta * kl


def _check_finite(m, batch, seed, value, frame_offset=0):
    if np.isfinite(value):
        return
    per_frame = frame_objectives(m, batch, seed)
    bad = np.flatnonzero(~np.isfinite(per_frame))
    where = f"frame {int(bad[0]) + frame_offset}" if bad.size else "an unidentified frame"
    raise DivergenceError(f"diverged: objective is not finite at {where}")


def elbo(m: GenerativeModel, batch: Batch, seed, with_grad: bool = True, blend: bool = True):
    """Per-frame objective of a batch and, optionally, its gradient by parameter name."""
    tape = Tape()
    total, _, _ = objective_graph(m, batch, seed, tape, blend=blend)
    value = float(total.value)
    _check_finite(m, batch, seed, value)
    if not with_grad:
        return value, None
    leaf_grads = tape.backward(total)
    return value, tape.grad_of(m.named_params(), leaf_grads)


def evaluate_objective(m: GenerativeModel, data: Batch, seed, batch_size: int = 1024) -> float:
    """Mean per-frame objective over a whole dataset, without gradients."""
    total = 0.0
    for start in range(0, len(data), batch_size):
        sub = data.subset(np.arange(start, min(start + batch_size, len(data))))
        values = frame_objectives(m, sub, (seed, start))
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise DivergenceError(f"diverged: objective is not finite at frame {start + int(bad[0])}")
        total += float(values.sum())
    return total / len(data)
