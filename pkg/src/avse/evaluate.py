"""Scale-invariant SDR, improvement deltas, and median/bootstrap summaries."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .signal import Waveform

SDR_CAP = 100.0


def _samples(x):
    return x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)


def sdr(reference, estimate) -> float:
    """Scale-invariant SDR in dB, clipped to +-100 dB."""
    r, e = _samples(reference), _samples(estimate)
    if r.shape != e.shape:
        raise ValidationError(f"length mismatch: {r.shape} vs {e.shape}")
    rr = float(r @ r)
    if rr == 0.0:
        raise ValidationError("silent reference")
    target = (float(e @ r) / rr) * r
    resid = e - target
    num, den = float(target @ target), float(resid @ resid)
    if num == 0.0:
        return -SDR_CAP
    if den == 0.0:
        return SDR_CAP
    return float(np.clip(10.0 * np.log10(num / den), -SDR_CAP, SDR_CAP))


def sdr_improvement(reference, mixture, estimate) -> float:
    return sdr(reference, estimate) - sdr(reference, mixture)


@dataclass
class Record:
    id: str
    method: str
    noise: str
    snr: float
    sdr_in: float
    sdr_out: float
    delta: float


def median_with_se(values, n_boot: int = 1000, seed=0) -> tuple[float, float]:
    """Median and the bootstrap standard error of the median."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValidationError("no values to summarise")
    med = float(np.median(x))
    if x.size == 1:
        return med, 0.0
    rng = np.random.default_rng(seed)
    boots = np.median(x[rng.integers(0, x.size, size=(n_boot, x.size))], axis=1)
    return med, float(np.std(boots, ddof=1))


def summarize(records, n_boot: int = 1000, seed=0) -> dict:
    """Median delta (and SE) per (method, SNR) and per (method, noise kind)."""
    if not records:
        raise ValidationError("empty input")
    by_snr, by_noise = defaultdict(list), defaultdict(list)
    for r in records:
        by_snr[(r.method, float(r.snr))].append(r.delta)
        by_noise[(r.method, r.noise)].append(r.delta)
    out = {"by_snr": [], "by_noise": []}
    for (method, snr), vals in sorted(by_snr.items()):
        med, se = median_with_se(vals, n_boot, seed)
        out["by_snr"].append({"method": method, "snr": snr, "median_delta": med, "se": se, "n": len(vals)})
    for (method, noise), vals in sorted(by_noise.items()):
        med, se = median_with_se(vals, n_boot, seed)
        out["by_noise"].append({"method": method, "noise": noise, "median_delta": med, "se": se, "n": len(vals)})
    return out


def report(records, n_boot: int = 1000, seed=0) -> tuple[str, dict]:
    """Text table plus the machine-readable summary."""
    summary = summarize(records, n_boot, seed)
    lines = ["SDR improvement (dB): median +- bootstrap SE", ""]
    lines.append(f"{'method':<10} {'snr':>7} {'median':>9} {'se':>7} {'n':>4}")
    for row in summary["by_snr"]:
        lines.append(f"{row['method']:<10} {row['snr']:>7.1f} {row['median_delta']:>9.3f} {row['se']:>7.3f} {row['n']:>4d}")
    lines += ["", f"{'method':<10} {'noise':>7} {'median':>9} {'se':>7} {'n':>4}"]
    for row in summary["by_noise"]:
        lines.append(f"{row['method']:<10} {row['noise']:>7} {row['median_delta']:>9.3f} {row['se']:>7.3f} {row['n']:>4d}")
    return "\n".join(lines) + "\n", summary


def write_records(path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")


def read_records(path) -> list[Record]:
    with open(path) as fh:
        return [Record(**json.loads(line)) for line in fh if line.strip()]


def median_delta(summary: dict, method: str, snr: float) -> float:
    for row in summary["by_snr"]:
        if row["method"] == method and row["snr"] == float(snr):
            return row["median_delta"]
    raise KeyError((method, snr))
