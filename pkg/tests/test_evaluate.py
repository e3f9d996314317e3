import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from avse.errors import ValidationError
from avse.evaluate import (SDR_CAP, Record, median_delta, median_with_se, read_records, report, sdr,
                           sdr_improvement, summarize, write_records)
from avse.signal import Waveform


def _orthogonal(r, rng):
    n = rng.standard_normal(r.size)
    n -= (n @ r) / (r @ r) * r
    return n


def test_perfect_estimate_is_capped():
    r = np.random.default_rng(0).standard_normal(500)
    assert sdr(r, r) == SDR_CAP == 100.0
    assert sdr(r, 2 * r) == SDR_CAP


def test_orthogonal_equal_power_is_zero_db():
    rng = np.random.default_rng(1)
    r = rng.standard_normal(1000)
    n = _orthogonal(r, rng)
    n *= np.linalg.norm(r) / np.linalg.norm(n)
    assert sdr(r, r + n) == pytest.approx(0.0, abs=1e-10)


def test_matches_direct_formula():
    rng = np.random.default_rng(2)
    r, e = rng.standard_normal(300), rng.standard_normal(300)
    a = (e @ r) / (r @ r)
    expected = 10 * np.log10(np.sum((a * r) ** 2) / np.sum((e - a * r) ** 2))
    assert sdr(Waveform(r, 16000), Waveform(e, 16000)) == pytest.approx(expected, rel=1e-12)


def test_zero_estimate_is_floor():
    assert sdr(np.ones(10), np.zeros(10)) == -SDR_CAP


@given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_scale_invariance(scale, seed):
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(200)
    e = r + 0.5 * rng.standard_normal(200)
    assert sdr(r, scale * e) == pytest.approx(sdr(r, e), rel=1e-9, abs=1e-9)


def test_monotone_in_orthogonal_noise_level():
    rng = np.random.default_rng(3)
    r = rng.standard_normal(800)
    n = _orthogonal(r, rng)
    values = [sdr(r, r + k * n) for k in np.geomspace(1e-3, 1e3, 25)]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_errors():
    with pytest.raises(ValidationError):
        sdr(np.zeros(10), np.ones(10))
    with pytest.raises(ValidationError):
        sdr(np.ones(10), np.ones(11))


def test_improvement_identities():
    rng = np.random.default_rng(4)
    r = rng.standard_normal(400)
    mix = r + rng.standard_normal(400)
    est = r + 0.3 * rng.standard_normal(400)
    assert sdr_improvement(r, mix, mix) == 0.0
    assert sdr_improvement(r, mix, r) == SDR_CAP - sdr(r, mix)
    assert sdr_improvement(r, mix, est) == sdr(r, est) - sdr(r, mix)


def test_median_examples():
    assert median_with_se([1, 2, 9])[0] == 2
    assert median_with_se([3.5]) == (3.5, 0.0)
    with pytest.raises(ValidationError):
        median_with_se([])


def test_bootstrap_standard_error_against_direct_resampling():
    x = np.random.default_rng(5).standard_normal(31)
    med, se = median_with_se(x, 1000, seed=7)
    rng = np.random.default_rng(7)
    boots = [np.median(x[rng.integers(0, 31, 31)]) for _ in range(1000)]
    assert med == np.median(x)
    assert se == pytest.approx(np.std(boots, ddof=1), rel=1e-12)
    assert median_with_se(x, 1000, seed=7) == (med, se)
    assert median_with_se(x, 1000, seed=8)[1] != se


def _records():
    rng = np.random.default_rng(6)
    out = []
    for i in range(5):
        for noise in ("white", "hum"):
            for snr in (-5.0, 0.0):
                for method in ("a", "b"):
                    d = float(rng.normal())
                    out.append(Record(f"u{i}", method, noise, snr, snr, snr + d, d))
    return out


def test_summary_groups():
    recs = _records()
    summary = summarize(recs)
    assert len(summary["by_snr"]) == 4 and len(summary["by_noise"]) == 4
    vals = [r.delta for r in recs if r.method == "a" and r.snr == -5.0]
    assert median_delta(summary, "a", -5.0) == np.median(vals)
    assert all(row["n"] == 10 for row in summary["by_snr"])
    with pytest.raises(ValidationError):
        summarize([])


def test_report_deterministic_and_complete():
    text, summary = report(_records())
    assert report(_records()) == (text, summary)
    assert "white" in text and "hum" in text
    assert text.count("\n") > 8


def test_record_round_trip(tmp_path):
    recs = _records()
    write_records(tmp_path / "r.jsonl", recs)
    assert read_records(tmp_path / "r.jsonl") == recs
