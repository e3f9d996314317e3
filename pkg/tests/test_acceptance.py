"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line
that the terminal summary prints (see conftest.py).

The end-to-end checks (6, 9, 10) share one module-scoped run that trains three
models on the default synthetic corpus and enhances the whole test split; it
takes roughly twenty minutes of CPU time.
"""

import dataclasses
import filecmp
import math
import time
import warnings

import numpy as np
import pytest

from avse.cli import main
from avse.data import NOISE_KINDS, CorpusSpec, synth_corpus
from avse.evaluate import median_delta, summarize
from avse.mcem import (AcceptanceRateWarning, ChainState, McemConfig, Posterior, mh_sweep,
                       q_tilde_from_variances)
from avse.models import LatentGaussian, ModelConfig, build_model, elbo, gaussian_kl, train
from avse.nmf import NoiseModel, fit_is_nmf, m_step, update_gain, update_h, update_w
from avse.pipeline import enhance, evaluate_methods, training_frames
from avse.signal import StftConfig, Waveform, istft, stft

from conftest import ACCEPTANCE, central_difference, relative_error, toy_model
from oracles import loop_update_gain, loop_update_h, loop_update_w, random_instance
from test_mcem import _mixture, _noise, constant_decoder_model
from test_models import _batch

TRAIN = dict(epochs=150, patience=20, batch_size=128, step_size=1e-3, seed=0)
MCEM = McemConfig()


def record(number, title, ok, detail):
    ACCEPTANCE[number] = (title, bool(ok), detail)
    assert ok, detail


# -- 1 ----------------------------------------------------------------------------


def test_01_gradient_correctness():
    start = time.perf_counter()
    worst = 0.0
    for kind in ("A-VAE", "V-VAE", "AV-VAE", "AV-CVAE"):
        m = toy_model(kind, seed=3)
        batch = _batch(kind, seed=5)
        params = m.named_params()
        _, grads = elbo(m, batch, seed=11)
        rng = np.random.default_rng(17)
        names = sorted(params)
        for _ in range(20):
            name = names[rng.integers(len(names))]
            index = tuple(int(rng.integers(s)) for s in params[name].shape)
            fd = central_difference(lambda: elbo(m, batch, seed=11, with_grad=False)[0], params[name], index)
            worst = max(worst, relative_error(grads[name][index], fd))
    elapsed = time.perf_counter() - start
    record(1, "gradient correctness", worst < 1e-4 and elapsed < 10,
           f"max relative error {worst:.2e} over 4 kinds x 20 coordinates in {elapsed:.1f} s")


# -- 2 ----------------------------------------------------------------------------


def test_02_kl_consistency():
    rng = np.random.default_rng(2)
    L, n = 32, 100_000
    worst = 0.0
    for _ in range(10):
        q = LatentGaussian(rng.normal(0, 1, L), rng.uniform(0.2, 3, L))
        p = LatentGaussian(rng.normal(0, 1, L), rng.uniform(0.2, 3, L))
        z = q.mean + np.sqrt(q.variance) * rng.standard_normal((n, L))

        def logpdf(g):
            return -0.5 * np.sum(np.log(2 * np.pi * g.variance) + (z - g.mean) ** 2 / g.variance, axis=1)

        d = logpdf(q) - logpdf(p)
        se = d.std(ddof=1) / math.sqrt(n)
        worst = max(worst, abs(d.mean() - gaussian_kl(q, p)) / se)
    record(2, "KL consistency", worst < 3, f"largest deviation {worst:.2f} SE over 10 pairs at L=32")


# -- 3 ----------------------------------------------------------------------------


def test_03_multiplicative_update_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        P, W, H, g, Vs = random_instance(rng)
        noise = NoiseModel(W, H, g)
        Vx = g * Vs + W @ H
        for got, want in ((update_h(noise, P, Vx), loop_update_h(P, W, H, Vx)),
                          (update_w(noise, P, Vx), loop_update_w(P, W, H, Vx)),
                          (update_gain(noise, P, Vx, Vs), loop_update_gain(P, g, Vx, Vs))):
            worst = max(worst, float(np.max(np.abs(got - want) / np.abs(want))))
    record(3, "update oracle equivalence", worst < 1e-12, f"max relative difference {worst:.1e} over 100 trials")


# -- 4 ----------------------------------------------------------------------------


def test_04_m_step_monotonicity():
    rng = np.random.default_rng(4)
    worst = math.inf
    for _ in range(20):
        P = rng.exponential(1.0, (9, 8))
        Vs = rng.uniform(0.1, 2, (3, 9, 8))
        noise = _noise(F=9, N=8, K=3, seed=int(rng.integers(1 << 30)))
        before = q_tilde_from_variances(P, Vs, noise)
        after = q_tilde_from_variances(P, Vs, m_step(noise, P, Vs))
        worst = min(worst, (after - before) / abs(before))
    record(4, "M-step monotonicity", worst >= -1e-9, f"smallest relative change in Q {worst:+.2e}")


# -- 5 ----------------------------------------------------------------------------


def test_05_mh_recovers_prior():
    m = constant_decoder_model()
    post = Posterior(_mixture(N=2), None, m, _noise(N=2))
    chain = ChainState(np.zeros((2, 2)))
    cfg = McemConfig(epsilon2=2.0, seed=3)
    n = 10_000
    draws = np.empty((n, 4))
    for s in range(n):
        mh_sweep(chain, None, None, None, m, cfg, stream=(0, s), posterior=post)
        draws[s] = chain.z.ravel()
    batches = draws.reshape(50, n // 50, 4).mean(axis=1)
    se = batches.std(axis=0, ddof=1) / math.sqrt(50)
    mean_dev = float(np.max(np.abs(draws.mean(axis=0)) / se))
    var_dev = float(np.max(np.abs(draws.var(axis=0) - 1.0)))
    record(5, "MH correctness", mean_dev < 3 and var_dev < 0.1,
           f"mean within {mean_dev:.2f} SE, variance off by at most {var_dev:.3f}")


# -- 7, 8 -----------------------------------------------------------------------


def test_07_stft_round_trip():
    x = Waveform(np.random.default_rng(7).standard_normal(16000), 16000)
    errors = {}
    for hop in (256, 512, 533):
        y = istft(stft(x, StftConfig(hop=hop)), len(x))
        errors[hop] = float(np.max(np.abs(y.samples - x.samples)))
    record(7, "STFT round trip", max(errors.values()) < 1e-6,
           "max abs error " + ", ".join(f"hop {h}: {e:.1e}" for h, e in errors.items()))


def test_08_is_nmf_monotonicity():
    rng = np.random.default_rng(8)
    worst = -math.inf
    for i in range(10):
        P = rng.exponential(1.0, (20, 30))
        _, _, history = fit_is_nmf(P, rank=4, iters=100, seed=i, return_history=True)
        worst = max(worst, max(b - a for a, b in zip(history, history[1:])))
    record(8, "IS-NMF monotonicity", worst <= 0.0, f"largest step change {worst:+.2e}")


# -- 6, 9, 10: end to end on the default corpus -------------------------------


@pytest.fixture(scope="module")
def end_to_end():
    spec = CorpusSpec()
    assert spec.visual_coupling == 1.0
    corpus = synth_corpus(spec)
    cfg = spec.stft_config
    train_av = training_frames(corpus["train"], cfg)
    valid_av = training_frames(corpus["valid"], cfg)

    models, train_seconds = {}, 0.0
    for label, kind, alpha in (("A-VAE", "A-VAE", 0.9), ("AV-CVAE", "AV-CVAE", 0.9),
                               ("AV-CVAE alpha=1", "AV-CVAE", 1.0)):
        start = time.process_time()
        model = build_model(ModelConfig(kind=kind, alpha=alpha, n_freq=cfg.n_freq), seed=TRAIN["seed"])
        models[label] = train(model, train_av, valid_av, **TRAIN).model
        train_seconds += time.process_time() - start

    expansion = {"bins": 0, "violations": 0}

    def enhancer(model):
        def run(sample, noisy, seed):
            out, S, _ = enhance(model, noisy, sample.visual, dataclasses.replace(MCEM, seed=seed), cfg)
            X = stft(noisy, cfg).values
            expansion["bins"] += X.size
            expansion["violations"] += int(np.sum(np.abs(S.values) > np.abs(X)))
            return out
        return run

    test = corpus["test"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AcceptanceRateWarning)
        records = evaluate_methods(test, {k: enhancer(m) for k, m in models.items()}, [-5.0], NOISE_KINDS)
        records += evaluate_methods(test, {"AV-CVAE": enhancer(models["AV-CVAE"])}, [0.0], NOISE_KINDS)
    rate_warnings = sum(issubclass(w.category, AcceptanceRateWarning) for w in caught)
    return {"summary": summarize(records), "train_seconds": train_seconds, "expansion": expansion,
            "rate_warnings": rate_warnings, "n_records": len(records)}


def test_06_wiener_non_expansion(end_to_end):
    e = end_to_end["expansion"]
    record(6, "Wiener non-expansion", e["bins"] > 0 and e["violations"] == 0,
           f"{e['violations']} expanded bins out of {e['bins']}")


def test_09_end_to_end_trend(end_to_end):
    s = end_to_end["summary"]
    av, a = median_delta(s, "AV-CVAE", -5.0), median_delta(s, "A-VAE", -5.0)
    av0 = median_delta(s, "AV-CVAE", 0.0)
    budget = end_to_end["train_seconds"]
    record(9, "end-to-end trend", av - a > 0 and av0 > 0 and budget <= 1800,
           f"-5 dB median gain AV-CVAE {av:+.2f} vs A-VAE {a:+.2f} dB; AV-CVAE at 0 dB {av0:+.2f} dB; "
           f"training {budget:.0f} s CPU; {end_to_end['rate_warnings']} acceptance-rate warnings")


def test_10_alpha_blend(end_to_end):
    s = end_to_end["summary"]
    blended, plain = median_delta(s, "AV-CVAE", -5.0), median_delta(s, "AV-CVAE alpha=1", -5.0)
    record(10, "alpha-blend non-inferiority", blended >= plain - 0.5,
           f"-5 dB median gain alpha=0.9 {blended:+.2f} vs alpha=1.0 {plain:+.2f} dB")


# -- 11 ----------------------------------------------------------------------------

PIPELINE_INI = """\
[corpus]
n_train = 2
n_valid = 1
n_test = 1
utterance_seconds = 1.0
[train]
epochs = 2
step_size = 0.001
[mcem]
em_iters = 3
mh_steps = 6
burn_in = 3
recon_burn_in = 5
[evaluate]
snrs = -5, 0
noises = white, hum
nmf_rank = 8
nmf_iters = 10
identity_baseline = true
"""


def _run_pipeline(root):
    root.mkdir()
    ini = root / "run.ini"
    ini.write_text(PIPELINE_INI)
    c = ["--config", str(ini)]
    steps = [
        ["synth-data", *c, "--out", str(root / "corpus")],
        ["train", *c, "--model", "A-VAE", "--corpus", str(root / "corpus"), "--out", str(root / "a-vae")],
        ["train", *c, "--model", "AV-CVAE", "--corpus", str(root / "corpus"), "--out", str(root / "av-cvae")],
        ["mix", *c, "--clean", str(root / "corpus" / "test" / "test-000.wav"), "--noise", "babble", "--snr", "-5",
         "--out", str(root / "noisy.wav")],
        ["enhance", *c, "--checkpoint", str(root / "av-cvae"), "--noisy", str(root / "noisy.wav"),
         "--visual", str(root / "corpus" / "test" / "test-000.vis"), "--unscaled", "--out", str(root / "out.wav")],
        ["evaluate", *c, "--corpus", str(root / "corpus"), "--checkpoint", str(root / "a-vae"),
         "--checkpoint", str(root / "av-cvae"), "--out", str(root / "report")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    # the last log column is wall-clock time; keep iteration, Q and acceptance rate
    log = root / "out.wav.log"
    log.write_text("".join("\t".join(line.split("\t")[:3]) + "\n" for line in log.read_text().splitlines()))


def _differences(a, b, prefix=""):
    cmp = filecmp.dircmp(a, b)
    out = [prefix + n for n in cmp.left_only + cmp.right_only]
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    out += [prefix + n for n in mismatch + errors]
    for d in cmp.common_dirs:
        out += _differences(a / d, b / d, prefix + d + "/")
    return out


def test_11_determinism(tmp_path):
    _run_pipeline(tmp_path / "one")
    _run_pipeline(tmp_path / "two")
    diffs = _differences(tmp_path / "one", tmp_path / "two")
    n_files = sum(1 for p in (tmp_path / "one").rglob("*") if p.is_file())
    record(11, "determinism", not diffs and n_files > 20,
           f"{n_files} files over synth-data, train, mix, enhance, evaluate; differing: {diffs or 'none'}")
