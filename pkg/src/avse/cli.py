"""Command-line entry point.

    avse synth-data   --out CORPUS
    avse train        --model AV-CVAE --corpus CORPUS --out CKPT
    avse mix          --clean WAV --noise white --snr -5 --out NOISY
    avse enhance      --checkpoint CKPT --noisy WAV [--visual VIS] --out WAV
    avse evaluate     --corpus CORPUS --checkpoint CKPT ... --out REPORT_DIR [--figures DIR]
    avse dump-weights --checkpoint CKPT --out DIR
    avse print-config [--config FILE]

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import storage
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Settings, load_settings, render_settings
from .data import read_corpus, synth_corpus, synth_noise, mix_at_snr, write_corpus
from .errors import DegenerateModelError, DivergenceError, ValidationError
from .evaluate import report, write_records
from .models import build_model, train
from .pipeline import (enhance, evaluate_methods, identity_enhancer, model_enhancer, nmf_enhancer,
                       speech_dictionary, training_frames)
from .nmf import VAR_FLOOR
from .reconstruct import synthesize
from .signal import StftConfig

log = logging.getLogger("avse")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
RAW_IMAGE_SIDE = 67


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _csv_words(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _settings(args, extra: dict | None = None) -> Settings:
    overrides = dict(extra or {})
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = args.seed
    if getattr(args, "alpha", None) is not None:
        overrides["model.alpha"] = args.alpha
    if getattr(args, "model", None) is not None:
        overrides["model.kind"] = args.model
    if getattr(args, "em_iters", None) is not None:
        overrides["mcem.em_iters"] = args.em_iters
    if getattr(args, "snr", None):
        overrides["evaluate.snrs"] = tuple(v for group in args.snr for v in group)
    if getattr(args, "noise", None) and args.command == "evaluate":
        overrides["evaluate.noises"] = tuple(v for group in args.noise for v in group)
    return load_settings(args.config, overrides)


# -- commands ---------------------------------------------------------------


def cmd_synth_data(args) -> int:
    extra = {"corpus.seed": args.seed} if args.seed is not None else {}
    args.seed = None  # the corpus carries its own seed
    settings = _settings(args, extra)
    corpus = synth_corpus(settings.corpus)
    out = write_corpus(corpus, args.out, with_visual=not args.no_visual)
    counts = {split: len(samples) for split, samples in corpus.splits.items()}
    print(f"wrote {sum(counts.values())} samples to {out} " + " ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_train(args) -> int:
    settings = _settings(args)
    corpus = read_corpus(args.corpus, splits=("train", "valid"))
    spec = corpus.spec
    model_cfg = settings.model.with_updates(n_freq=spec.stft_config.n_freq)
    if model_cfg.uses_visual:
        missing = [s.id for split in ("train", "valid") for s in corpus[split] if s.visual is None]
        if missing:
            raise ValidationError(f"{model_cfg.kind} needs visual features; missing for {missing[0]} "
                                  f"and {len(missing) - 1} more")
        dims = {s.visual.shape[1] for s in corpus["train"]}
        if dims != {model_cfg.visual_input_dim}:
            raise ValidationError(f"corpus visual length {sorted(dims)} != visual_input_dim "
                                  f"{model_cfg.visual_input_dim}")
    train_set = training_frames(corpus["train"], spec.stft_config, model_cfg.uses_visual)
    valid_set = training_frames(corpus["valid"], spec.stft_config, model_cfg.uses_visual)
    ts = settings.train
    model = build_model(model_cfg, seed=settings.seed)
    result = train(model, train_set, valid_set, epochs=ts.epochs, patience=ts.patience, seed=settings.seed,
                   batch_size=ts.batch_size, step_size=ts.step_size)
    extra = {
        "seed": settings.seed,
        "train": {"epochs": ts.epochs, "patience": ts.patience, "batch_size": ts.batch_size,
                  "step_size": ts.step_size},
        "corpus_hash": spec.digest(),
        "stft": {"window_len": spec.window_len, "hop": spec.hop},
        "best_epoch": result.best_epoch,
        "best_valid": result.best_valid,
        "epochs_run": result.epochs_run,
    }
    out = save_checkpoint(args.out, result.model, result.history, extra)
    print(f"{model_cfg.kind}: best validation objective {result.best_valid:.3f} at epoch "
          f"{result.best_epoch} of {result.epochs_run}; checkpoint {out}")
    return EXIT_OK


def _stft_config(manifest) -> StftConfig:
    stft_info = manifest.get("stft", {})
    return StftConfig(window_len=stft_info.get("window_len", 1024), hop=stft_info.get("hop", 533))


def cmd_mix(args) -> int:
    settings = _settings(args)
    clean = storage.read_wav(args.clean)
    noise = synth_noise(args.noise_kind, clean.duration, settings.seed, clean.sample_rate)
    noisy = mix_at_snr(clean, noise, args.snr_db)
    storage.write_wav(args.out, noisy)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_enhance(args) -> int:
    settings = _settings(args)
    model, manifest = load_checkpoint(args.checkpoint)
    noisy = storage.read_wav(args.noisy)
    visual = None
    if model.config.uses_visual:
        if args.visual is None:
            raise ValidationError(f"{model.config.kind} needs --visual")
        visual = storage.load_visual(args.visual)
    stft_cfg = _stft_config(manifest)
    n_frames = stft_cfg.n_frames(len(noisy))
    if visual is not None and visual.shape[0] != n_frames:
        raise ValidationError(f"visual file has {visual.shape[0]} rows, mixture has {n_frames} frames")
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log")
    out, S, result = enhance(model, noisy, visual, settings.mcem_config(), stft_cfg, log_path=log_path)
    storage.write_wav(args.out, out)
    if args.unscaled:
        # the filtered estimate carries the frame gains; this copy divides them out
        unscaled = S.with_values(S.values / np.sqrt(np.maximum(result.noise.g, VAR_FLOOR))[None, :])
        target = Path(args.out)
        target = target.with_name(target.stem + "_unscaled" + target.suffix)
        storage.write_wav(target, synthesize(unscaled, len(noisy), noisy.sample_rate))
    rate = result.accept_trace[-1] if result.accept_trace else float("nan")
    print(f"wrote {args.out} ({len(out)} samples); {result.iterations} EM iterations, "
          f"final acceptance rate {rate:.3f}; log {log_path}")
    return EXIT_OK


def _method_label(spec: str) -> tuple[str | None, str]:
    if "=" in spec:
        label, path = spec.split("=", 1)
        return label, path
    return None, spec


def cmd_evaluate(args) -> int:
    settings = _settings(args)
    es = settings.evaluate
    splits = ("train", "test") if es.nmf_baseline else ("test",)
    corpus = read_corpus(args.corpus, splits=splits)
    stft_cfg = corpus.spec.stft_config
    methods = {}
    for spec in args.checkpoint or []:
        label, path = _method_label(spec)
        model, _ = load_checkpoint(path)
        label = label or model.config.kind
        if label in methods:
            raise ValidationError(f"duplicate method label {label!r}; use LABEL=DIR")
        if model.config.uses_visual and any(s.visual is None for s in corpus["test"]):
            raise ValidationError(f"{label} needs visual features for the test split")
        methods[label] = model_enhancer(model, settings.mcem_config(), stft_cfg)
    if es.nmf_baseline:
        dictionary = speech_dictionary(corpus, rank=es.nmf_rank, seed=settings.seed)
        methods["NMF"] = nmf_enhancer(dictionary, stft_cfg, settings.mcem.noise_rank, es.nmf_iters)
    if es.identity_baseline:
        methods["mixture"] = identity_enhancer
    if not methods:
        raise ValidationError("nothing to evaluate: pass --checkpoint or enable a baseline")

    records = evaluate_methods(corpus["test"], methods, es.snrs, es.noises, seed=settings.seed)
    text, summary = report(records, seed=settings.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records(out / "records.jsonl", records)
    storage.write_json(out / "summary.json", summary)
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    if args.figures:
        from .plotting import plot_improvement_by_noise, plot_improvement_vs_snr
        fig_dir = Path(args.figures)
        fig_dir.mkdir(parents=True, exist_ok=True)
        plot_improvement_vs_snr(summary, fig_dir / "improvement_vs_snr.png")
        plot_improvement_by_noise(summary, fig_dir / "improvement_by_noise.png")
    return EXIT_OK


def cmd_dump_weights(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    root = None
    for path in model.visual_paths():
        root = model.embedder_for(path)
        if root is not None:
            break
    side = RAW_IMAGE_SIDE
    if root is None or model.config.visual_input_dim != side * side:
        raise ValidationError(f"checkpoint has no embedder over raw {side}x{side} images")
    first = root.weights[0]  # (hidden, side*side)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, row in enumerate(first):
        np.savetxt(out / f"node_{i:03d}.txt", row.reshape(side, side), fmt="%.17g")
    print(f"wrote {len(first)} weight images to {out}")
    return EXIT_OK


def cmd_print_config(args) -> int:
    print(render_settings(_settings(args)), end="")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avse", description="Audio-visual speech enhancement toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.set_defaults(func=fn)
        return p

    p = command("synth-data", cmd_synth_data, "write the synthetic audio-visual corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--no-visual", action="store_true", help="omit the visual feature files")

    p = command("train", cmd_train, "train a speech model on a corpus")
    p.add_argument("--model", help="A-VAE, V-VAE, AV-VAE or AV-CVAE")
    p.add_argument("--corpus", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", required=True, help="checkpoint directory")

    p = command("mix", cmd_mix, "add synthetic noise to a clean WAV at a given SNR")
    p.add_argument("--clean", required=True)
    p.add_argument("--noise", dest="noise_kind", default="white")
    p.add_argument("--snr", dest="snr_db", type=float, required=True)
    p.add_argument("--out", required=True)

    p = command("enhance", cmd_enhance, "enhance one noisy WAV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--noisy", required=True)
    p.add_argument("--visual", help="visual feature file (AV and V models)")
    p.add_argument("--em-iters", type=int)
    p.add_argument("--log", help="diagnostics log path (default: OUT.log)")
    p.add_argument("--unscaled", action="store_true", help="also write OUT_unscaled with frame gains removed")
    p.add_argument("--out", required=True)

    p = command("evaluate", cmd_evaluate, "mix, enhance and score the test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", action="append", help="[LABEL=]DIR, repeatable")
    p.add_argument("--snr", type=_csv_floats, action="append", help="comma list, repeatable")
    p.add_argument("--noise", type=_csv_words, action="append", help="comma list, repeatable")
    p.add_argument("--em-iters", type=int)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--figures", help="also render summary figures into this directory")

    p = command("dump-weights", cmd_dump_weights, "write first-layer visual weights as 67x67 text")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)

    p = command("print-config", cmd_print_config, "print the effective configuration")
    p.add_argument("--model")
    p.add_argument("--alpha", type=float)
    p.add_argument("--em-iters", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DivergenceError, DegenerateModelError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
