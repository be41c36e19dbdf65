"""Command-line entry point: prepare / train / synth / edit / evaluate.

Each data-producing subcommand owns its --out directory: a lock file rejects
concurrent runs, and a canonical config snapshot (plus the seed) is written
there so the run can be reproduced exactly.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
import torch
from filelock import FileLock, Timeout

from . import records
from .audio import AudioConfig
from .config import RunConfig
from .corpus import FeatureStore, PhonemeVocab, ingest
from .errors import (
    AlignmentError,
    EditError,
    FrontendError,
    IngestError,
    InvalidConfig,
    InvalidInput,
    InvalidRequest,
    ParaspeechError,
)
from .evaluate import evaluate_corpus
from .frontend import Lexicon
from .model import AcousticModel, load_checkpoint, save_checkpoint
from .semantic import HashPairEmbedder, PretrainedPairEmbedder, cache_pbes, load_pbe_cache
from .synth import (
    EDIT,
    MODES,
    PREV_SPEECH_ONLY,
    SynthesisRequest,
    Synthesizer,
    mel_to_wave,
    write_wav,
)
from .train import Trainer
from .toydata import make_toy_corpus

_VALIDATION_ERRORS = (
    InvalidInput,
    InvalidConfig,
    InvalidRequest,
    FrontendError,
    EditError,
    AlignmentError,
    IngestError,
)


def _flag_values(pairs):
    from .config import parse_value

    values = {}
    for item in pairs or []:
        if "=" not in item:
            raise InvalidConfig(f"--set expects section.key=value, got {item!r}")
        key, _, raw = item.partition("=")
        values[key.strip()] = parse_value(raw.strip())
    return values


def _run_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _locked(out_dir) -> FileLock:
    lock = FileLock(Path(out_dir) / ".lock")
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise InvalidRequest(f"another run owns {out_dir} (lock file held)") from None
    return lock


def _build_embedder(semantic: dict, d_pbe: int):
    if semantic["embedder"] == "hash":
        return HashPairEmbedder(d_pbe=d_pbe, seed=int(semantic["hash_seed"]))
    if semantic["embedder"] == "pretrained":
        return PretrainedPairEmbedder(semantic["model_dir"])
    raise InvalidConfig(f"unknown embedder {semantic['embedder']!r}")


def cmd_prepare(args) -> int:
    cfg = RunConfig.load(args.config, _flag_values(args.set))
    out = _run_dir(args.out)
    lock = _locked(out)
    try:
        cfg.write_snapshot(out, seed=args.seed)
        store = ingest(
            args.manifest, cfg.audio(), out, seed=args.seed, workers=args.workers
        )
        print(f"prepared {len(store)} utterances -> {out}")
        return 0
    finally:
        lock.release()


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config, _flag_values(args.set))
    out = _run_dir(args.out)
    lock = _locked(out)
    try:
        cfg.write_snapshot(out, seed=args.seed)
        store = FeatureStore.load(args.data)
        train_overrides = {"seed": args.seed}
        if args.max_steps is not None:
            train_overrides["max_steps"] = args.max_steps
        train_cfg = cfg.train(**train_overrides)
        model_cfg = cfg.model(vocab_size=store.vocab.size)
        semantic = cfg.semantic()
        embedder = _build_embedder(semantic, model_cfg.d_pbe)

        pbe_path = out / "pbes.rec"
        cache_pbes(store, embedder, train_cfg.semantic_context_l, pbe_path)
        pbes, _ = load_pbe_cache(pbe_path)

        torch.manual_seed(train_cfg.seed)
        model = AcousticModel(model_cfg)
        trainer = Trainer(model, store, pbes, train_cfg, out)
        final = trainer.run()
        # re-save with everything synth needs alongside the weights
        save_checkpoint(
            model,
            final,
            step=train_cfg.max_steps,
            extra={
                "vocab": store.vocab.symbols,
                "audio": cfg._section("audio"),
                "semantic": semantic,
            },
        )
        print(f"trained {train_cfg.max_steps} steps -> {final}")
        return 0
    finally:
        lock.release()


def _load_synthesizer(args, cfg: RunConfig):
    model, meta = load_checkpoint(args.ckpt)
    vocab = PhonemeVocab(meta.get("vocab", []))
    if vocab.size != model.cfg.vocab_size:
        raise InvalidConfig(
            f"checkpoint vocab has {vocab.size} ids but the model expects "
            f"{model.cfg.vocab_size}"
        )
    audio_cfg = AudioConfig(**meta.get("audio", cfg._section("audio")))
    semantic = {**cfg.semantic(), **meta.get("semantic", {})}
    embedder = _build_embedder(semantic, model.cfg.d_pbe)
    if not args.lexicon:
        raise InvalidRequest("--lexicon FILE is required for synthesis")
    lexicon = Lexicon.load(args.lexicon)
    return Synthesizer(model, embedder, lexicon, vocab, audio_cfg)


def _write_result(out: Path, uid: str, result, synthesizer, gl_iters: int, seed: int):
    cache = result.cache
    records.write_record(
        out / f"{uid}.rec",
        {
            "mel": cache.mel,
            "f0": cache.f0,
            "energy": cache.energy,
            "durations": cache.durations,
            "pitch_ph": cache.pitch_ph,
            "energy_ph": cache.energy_ph,
        },
        meta={"utterance_id": uid, "text": cache.text, "phonemes": list(cache.phonemes)},
    )
    wave = mel_to_wave(result.mel, synthesizer.audio_cfg, iters=gl_iters, seed=seed)
    write_wav(out / f"{uid}.wav", wave, synthesizer.audio_cfg)


def cmd_synth(args) -> int:
    cfg = RunConfig.load(args.config, _flag_values(args.set))
    out = _run_dir(args.out)
    lock = _locked(out)
    try:
        cfg.write_snapshot(out, seed=args.seed)
        synthesizer = _load_synthesizer(args, cfg)
        mode = args.mode.strip().lower()
        if mode == EDIT:
            raise InvalidRequest("use the edit subcommand for editing")
        if mode not in MODES:
            raise InvalidRequest(f"unknown mode {args.mode!r}")

        texts = [
            line.strip()
            for line in Path(args.text).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        if not texts:
            raise InvalidRequest(f"no sentences in {args.text}")
        ids = args.ids.split(",") if args.ids else [f"s{k:03d}" for k in range(len(texts))]
        if len(ids) != len(texts):
            raise InvalidRequest(f"{len(ids)} ids for {len(texts)} sentences")

        context_dir = Path(args.context_audio) if args.context_audio else None

        def context_utterance(j):
            if context_dir is None:
                return None
            path = context_dir / f"{j:03d}.wav"
            if not path.exists():
                return None
            from .corpus import load_waveform

            wave = load_waveform(path, synthesizer.audio_cfg.sample_rate_hz)
            return synthesizer.utterance_from_audio(texts[j], wave, utterance_id=ids[j])

        results = []
        prev_cache = None
        for k, text in enumerate(texts):
            prev = context_utterance(k - 1) if k > 0 else None
            if prev is None:
                prev = prev_cache
            request = SynthesisRequest(
                texts=texts,
                current_index=k,
                mode=mode,
                prev_utterance=prev,
                next_utterance=context_utterance(k + 1),
            )
            result = synthesizer.synthesize(request)
            _write_result(out, ids[k], result, synthesizer, args.gl_iters, args.seed)
            results.append(result)
            prev_cache = result.cache
        print(f"synthesized {len(results)} sentences -> {out}")
        return 0
    finally:
        lock.release()


def cmd_edit(args) -> int:
    cfg = RunConfig.load(args.config, _flag_values(args.set))
    out = _run_dir(args.out)
    lock = _locked(out)
    try:
        cfg.write_snapshot(out, seed=args.seed)
        synthesizer = _load_synthesizer(args, cfg)
        store = FeatureStore.load(args.data)
        if args.utterance not in store.utterances:
            raise InvalidRequest(f"utterance {args.utterance!r} not in {args.data}")
        try:
            start, _, end = args.span.partition(":")
            span = (int(start), int(end))
        except ValueError:
            raise InvalidRequest(f"--span expects A:B, got {args.span!r}") from None
        result = synthesizer.edit(SynthesisRequest(
            mode=EDIT,
            base=store.utterances[args.utterance],
            edit_phoneme_span=span,
            replacement_text=args.replacement,
        ))
        uid = f"{args.utterance}_edit"
        _write_result(out, uid, result, synthesizer, args.gl_iters, args.seed)
        print(f"edited {args.utterance} phonemes [{span[0]}:{span[1]}) -> {out / uid}.rec")
        return 0
    finally:
        lock.release()


def _load_eval_dir(path, pitch_source, audio_cfg, gl_iters):
    path = Path(path)
    if not path.is_dir():
        raise InvalidInput(f"not a directory: {path}")
    data = {}
    for rec in sorted(path.glob("**/*.rec")):
        arrays, _ = records.read_record(rec)
        if "mel" not in arrays:
            continue
        mel = arrays["mel"]
        if pitch_source == "record" and "f0" in arrays:
            f0 = arrays["f0"]
        elif pitch_source == "predicted" and {"pitch_ph", "durations"} <= set(arrays):
            f0 = np.repeat(arrays["pitch_ph"], arrays["durations"].astype(np.int64))
        else:
            from .audio import extract_f0

            f0 = extract_f0(mel_to_wave(mel, audio_cfg, iters=gl_iters), audio_cfg)
        data[rec.stem] = {"mel": mel, "f0": f0}
    if not data:
        raise InvalidInput(f"no mel records under {path}")
    return data


def cmd_evaluate(args) -> int:
    cfg = RunConfig.load(args.config, _flag_values(args.set))
    audio_cfg = cfg.audio()
    pred = _load_eval_dir(args.pred, args.pitch_source, audio_cfg, args.gl_iters)
    ref = _load_eval_dir(args.ref, args.pitch_source, audio_cfg, args.gl_iters)
    report = evaluate_corpus(pred, ref, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json() + "\n", encoding="utf-8")
    print(f"evaluated {len(report.per_utterance)} utterances -> {out}")
    return 0


def cmd_make_toy_corpus(args) -> int:
    out = _run_dir(args.out)
    lock = _locked(out)
    try:
        manifest = make_toy_corpus(
            out,
            seed=args.seed,
            n_paragraphs=args.paragraphs,
            sentences_per_paragraph=args.sentences,
        )
        print(f"toy corpus -> {manifest}")
        return 0
    finally:
        lock.release()


def _add_common(parser, seed_default=0):
    parser.add_argument("--config", default=None, help="section.key = value file")
    parser.add_argument("--seed", type=int, default=seed_default)
    parser.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override a config value (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paraspeech",
        description="Paragraph-aware speech synthesis: data, training, inference, metrics.",
    )
    sub = parser.add_subparsers(
        dest="command", metavar="{prepare,train,synth,edit,evaluate}"
    )

    p = sub.add_parser("prepare", help="ingest a corpus manifest into a feature store")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    _add_common(p)
    p.set_defaults(handler=cmd_prepare)

    p = sub.add_parser("train", help="train the acoustic model on a feature store")
    p.add_argument("--data", required=True, help="prepared feature store directory")
    p.add_argument("--out", required=True, help="run directory for checkpoints/metrics")
    p.add_argument("--max-steps", type=int, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("synth", help="synthesize a paragraph of sentences")
    p.add_argument("--mode", default=PREV_SPEECH_ONLY)
    p.add_argument("--text", required=True, help="file with one sentence per line")
    p.add_argument("--context-audio", default=None, help="dir of NNN.wav reference audio")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--ids", default=None, help="comma-separated output utterance ids")
    p.add_argument("--gl-iters", type=int, default=60)
    _add_common(p)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("edit", help="regenerate a phoneme span of a stored utterance")
    p.add_argument("--utterance", required=True)
    p.add_argument("--span", required=True, help="phoneme span A:B")
    p.add_argument("--replacement", default="")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--gl-iters", type=int, default=60)
    _add_common(p)
    p.set_defaults(handler=cmd_edit)

    p = sub.add_parser("evaluate", help="score predicted mels against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--pitch-source", choices=("record", "predicted", "vocoder"),
                   default="record")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--gl-iters", type=int, default=30)
    _add_common(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("make-toy-corpus")  # hidden from the metavar above
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paragraphs", type=int, default=3)
    p.add_argument("--sentences", type=int, default=4)
    p.set_defaults(handler=cmd_make_toy_corpus)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if not getattr(args, "handler", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.handler(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ParaspeechError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"unexpected error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
