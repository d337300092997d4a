"""``songmass`` command line: preprocess, train, generate, align, eval."""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from songmass import data as data_mod
from songmass.align import dp_align, greedy_align, pairs_from_json, pairs_to_json, alignment_accuracy
from songmass.decode import Generation, generate, unit_attention
from songmass.lyrics import Vocabulary, build_vocab, parse_lyrics
from songmass.metrics import distribution_similarity, mean_melody_distance, perplexity
from songmass.model.train import FINETUNE_MODES, Bundle, Corpora, Schedule, Trainer, build_model
from songmass.model.transformer import ModelConfig
from songmass.score_io import (
    detokenize_melody,
    mean_phrase_length,
    normalize,
    parse_midi_melody,
    split_phrases_unpaired,
    tokenize_melody,
)
from songmass.tokens import TokenSequence, read_token_file, write_token_file

log = logging.getLogger("songmass")

REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "songs", "PD", "DD", "MD", "PPL", "alignment_accuracy"],
    "properties": {
        "schema_version": {"const": 1},
        "songs": {"type": "integer", "minimum": 0},
        "PD": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "DD": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "MD": {"type": ["number", "null"], "minimum": 0},
        "PPL": {"type": ["number", "null"], "minimum": 1},
        "alignment_accuracy": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
    },
    "additionalProperties": False,
}

DEFAULT_PHRASE_LEN = 8


class CommandError(RuntimeError):
    pass


def _write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------- preprocess


def cmd_preprocess(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    warnings: list[str] = []

    paired, raw_paired = [], []
    for path in args.paired or []:
        raw_paired += data_mod.read_jsonl(path)
    for obj in raw_paired:
        try:
            paired.append(data_mod.process_raw_paired(obj))
        except (ValueError, KeyError) as exc:
            warnings.append(f"paired song {obj.get('id')}: {exc}")
    heldout = []
    for path in args.heldout or []:
        heldout += [data_mod.process_raw_paired(obj) for obj in data_mod.read_jsonl(path)]

    if args.phrase_len:
        phrase_len = args.phrase_len
    elif raw_paired:
        phrase_len = mean_phrase_length(data_mod.paired_melody_songs(raw_paired))
    else:
        phrase_len = DEFAULT_PHRASE_LEN
        warnings.append(f"no paired data: phrase length defaults to {phrase_len}")

    melodies = []
    if args.midi_dir:
        for path in sorted(Path(args.midi_dir).iterdir()):
            if path.suffix.lower() not in (".mid", ".midi"):
                continue
            try:
                song = parse_midi_melody(path.read_bytes(), args.track_index)
                song = split_phrases_unpaired(normalize(song), phrase_len)
                melodies.append(tokenize_melody(song))
            except (ValueError, IndexError) as exc:
                warnings.append(f"{path.name}: {exc}")
    lyrics = []
    for path in args.lyrics or []:
        lyrics += parse_lyrics(Path(path).read_text(encoding="utf-8"))

    for w in warnings:
        log.warning(w)

    write_token_file(out / "melody.txt", melodies)
    write_token_file(out / "lyric.txt", lyrics)
    data_mod.save_paired(out / "paired.jsonl", paired)
    write_token_file(out / "paired_lyric.txt", [s.lyric for s in paired])
    write_token_file(out / "paired_melody.txt", [s.melody for s in paired])
    if heldout:
        data_mod.save_paired(out / "heldout.jsonl", heldout)
        ref = out / "reference"
        ref.mkdir(exist_ok=True)
        write_token_file(ref / "lyric.txt", [s.lyric for s in heldout])
        write_token_file(ref / "melody.txt", [s.melody for s in heldout])
        _write_json(ref / "alignment_l2m.json",
                    [[pairs_to_json(p) for p in s.unit_alignment("l2m")] for s in heldout])
        _write_json(ref / "alignment_m2l.json",
                    [[pairs_to_json(p) for p in s.unit_alignment("m2l")] for s in heldout])

    all_paired = paired + heldout
    build_vocab(lyrics + [s.lyric for s in all_paired], args.min_count).save(out / "lyric.vocab")
    build_vocab(melodies + [s.melody for s in all_paired], args.min_count).save(out / "melody.vocab")
    _write_json(out / "preprocess.json", {
        "seed": args.seed,
        "phrase_len": phrase_len,
        "counts": {"melodies": len(melodies), "lyrics": len(lyrics), "paired": len(paired), "heldout": len(heldout)},
        "warnings": warnings,
    })
    return 0


# --------------------------------------------------------------------- train


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    lyric_vocab = Vocabulary.load(data_dir / "lyric.vocab")
    melody_vocab = Vocabulary.load(data_dir / "melody.vocab")
    if args.init:
        bundle = Bundle.load(args.init)
        if bundle.lyric_vocab != lyric_vocab or bundle.melody_vocab != melody_vocab:
            raise CommandError("checkpoint vocabularies differ from the data directory's")
        bundle.model.cfg.alpha = args.alpha
        bundle.model.cfg.squared_att = args.squared_att
    else:
        cfg = ModelConfig(
            lyric_vocab=len(lyric_vocab), melody_vocab=len(melody_vocab), layers=args.layers,
            hidden=args.hidden, heads=args.heads, ff=args.ff, dropout=args.dropout,
            alpha=args.alpha, squared_att=args.squared_att,
        )
        bundle = Bundle(build_model(cfg, args.seed), lyric_vocab, melody_vocab)

    corpora = Corpora(paired=data_mod.load_paired(data_dir / "paired.jsonl"))
    if args.stage == "pretrain":
        corpora.lyrics = read_token_file(data_dir / "lyric.txt")
        corpora.melodies = read_token_file(data_dir / "melody.txt")
        modes = None
    else:
        modes = FINETUNE_MODES[args.direction]
    schedule = Schedule(steps=args.max_steps, lr=args.lr, warmup=args.warmup, batch_size=args.batch_size,
                        mask_ratio=args.mask_ratio, seed=args.seed, modes=modes, log_every=args.log_every)
    torch.manual_seed(args.seed)
    trainer = Trainer(bundle, corpora, schedule, checkpoint=args.checkpoint)
    history = trainer.run()
    bundle.save(args.checkpoint, {"steps": trainer.step, "stage": args.stage})
    log_path = args.log or str(args.checkpoint) + ".log.json"
    _write_json(log_path, {"stage": args.stage, "alpha": bundle.model.cfg.alpha, "history": history})
    return 0


# ------------------------------------------------------------------ generate


def _attention_json(source: TokenSequence, gen: Generation, direction: str) -> dict:
    sentences = []
    for src, tgt, A in zip(TokenSequence(source.tokens).sentences(),
                           gen.tokens.sentences(), gen.attention):
        sentences.append({
            "source_tokens": src + ["[SEP]"],
            "target_tokens": tgt + ["[SEP]"],
            "matrix": np.round(A, 12).tolist(),
        })
    return {"direction": direction, "sentences": sentences}


def cmd_generate(args) -> int:
    bundle = Bundle.load(args.checkpoint)
    sources = read_token_file(args.input)
    outputs, attention = [], []
    for k, src in enumerate(sources):
        gen = generate(bundle, src, args.direction, strategy=args.strategy, top_k=args.top_k,
                       seed=args.seed + k, max_sentence_len=args.max_sentence_len)
        outputs.append(gen.tokens)
        attention.append(_attention_json(src, gen, args.direction))
    write_token_file(args.output, outputs)
    if args.emit_attention:
        _write_json(args.emit_attention, attention)
    return 0


# --------------------------------------------------------------------- align


def cmd_align(args) -> int:
    songs = _read_json(args.attention)
    method = dp_align if args.method == "dp" else (lambda A: (greedy_align(A), None))
    out_songs, flat = [], []
    for song in songs:
        direction = args.direction or song.get("direction")
        sentences = []
        for sent in song["sentences"]:
            A = np.asarray(sent["matrix"])
            if direction and not args.token_level:
                A = unit_attention(A, direction)
            pairs, score = method(A)
            sentences.append({"pairs": pairs_to_json(pairs), "score": score})
            flat.append(pairs_to_json(pairs))
        out_songs.append({"direction": direction, "method": args.method, "sentences": sentences})
    _write_json(args.output, out_songs)
    if args.pairs_only:
        _write_json(args.pairs_only, _nest_pairs(out_songs))
    return 0


def _nest_pairs(aligned_songs) -> list:
    return [[s["pairs"] for s in song["sentences"]] for song in aligned_songs]


def _load_alignment(path: Path):
    obj = _read_json(path)
    if obj and isinstance(obj[0], dict):
        obj = _nest_pairs(obj)
    return [pairs_from_json(sent) for song in obj for sent in song]


# ---------------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    gen_dir, ref_dir = Path(args.generated), Path(args.reference)
    report = {"schema_version": 1, "songs": 0, "PD": None, "DD": None, "MD": None,
              "PPL": None, "alignment_accuracy": None}
    if (gen_dir / "melody.txt").exists() and (ref_dir / "melody.txt").exists():
        gen = [detokenize_melody(s) for s in read_token_file(gen_dir / "melody.txt")]
        ref = [detokenize_melody(s) for s in read_token_file(ref_dir / "melody.txt")]
        report["songs"] = len(ref)
        report["PD"] = distribution_similarity(gen, ref, "pitch")
        report["DD"] = distribution_similarity(gen, ref, "duration")
        report["MD"] = mean_melody_distance(gen, ref)
    align_name = f"alignment_{args.direction}.json"
    if (gen_dir / align_name).exists() and (ref_dir / align_name).exists():
        report["alignment_accuracy"] = alignment_accuracy(
            _load_alignment(gen_dir / align_name), _load_alignment(ref_dir / align_name))
    if args.checkpoint and args.paired:
        bundle = Bundle.load(args.checkpoint)
        report["PPL"] = perplexity(bundle, data_mod.load_paired(args.paired), args.direction)
    _write_json(args.report, report)
    return 0


# -------------------------------------------------------------------- parser


def _load_config(path: str | None) -> dict:
    """``key = value`` lines; keys use the long flag names with dashes or
    underscores."""
    if not path:
        return {}
    parser = configparser.ConfigParser()
    parser.read_string("[run]\n" + Path(path).read_text(encoding="utf-8"))
    return {k.replace("-", "_"): v for k, v in parser["run"].items()}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="songmass", description=__doc__)
    p.add_argument("--config", help="key = value file supplying defaults for any flag")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("preprocess", help="MIDI/lyrics/paired data -> token and vocab files")
    pp.add_argument("--midi-dir")
    pp.add_argument("--lyrics", nargs="*")
    pp.add_argument("--paired", nargs="*")
    pp.add_argument("--heldout", nargs="*")
    pp.add_argument("--out", required=True)
    pp.add_argument("--seed", type=int, required=True)
    pp.add_argument("--track-index", type=int, default=0)
    pp.add_argument("--phrase-len", type=int)
    pp.add_argument("--min-count", type=int, default=1)
    pp.set_defaults(func=cmd_preprocess)

    pt = sub.add_parser("train", help="pre-train or fine-tune a model")
    pt.add_argument("--data", required=True)
    pt.add_argument("--checkpoint", required=True)
    pt.add_argument("--init", help="checkpoint to continue from")
    pt.add_argument("--stage", choices=["pretrain", "finetune"], default="pretrain")
    pt.add_argument("--direction", choices=["l2m", "m2l"], default="l2m")
    pt.add_argument("--seed", type=int, required=True)
    pt.add_argument("--layers", type=int, default=2)
    pt.add_argument("--hidden", type=int, default=32)
    pt.add_argument("--heads", type=int, default=2)
    pt.add_argument("--ff", type=int, default=64)
    pt.add_argument("--dropout", type=float, default=0.1)
    pt.add_argument("--alpha", type=float, default=0.5)
    pt.add_argument("--squared-att", action="store_true")
    pt.add_argument("--mask-ratio", type=float, default=0.5)
    pt.add_argument("--max-steps", type=int, default=1000)
    pt.add_argument("--lr", type=float, default=5e-4)
    pt.add_argument("--warmup", type=int, default=100)
    pt.add_argument("--batch-size", type=int, default=8)
    pt.add_argument("--log-every", type=int, default=50)
    pt.add_argument("--log", help="training log JSON (default: <checkpoint>.log.json)")
    pt.set_defaults(func=cmd_train)

    pg = sub.add_parser("generate", help="generate melodies or lyrics")
    pg.add_argument("--direction", choices=["l2m", "m2l"], required=True)
    pg.add_argument("--input", required=True)
    pg.add_argument("--checkpoint", required=True)
    pg.add_argument("--output", required=True)
    pg.add_argument("--emit-attention")
    pg.add_argument("--strategy", choices=["greedy", "top-k"], default="greedy")
    pg.add_argument("--top-k", type=int, default=5)
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--max-sentence-len", type=int, help="per-sentence cap in target tokens")
    pg.set_defaults(func=cmd_generate)

    pa = sub.add_parser("align", help="extract alignments from attention JSON")
    pa.add_argument("--attention", required=True)
    pa.add_argument("--method", choices=["dp", "greedy"], default="dp")
    pa.add_argument("--direction", choices=["l2m", "m2l"])
    pa.add_argument("--token-level", action="store_true", help="align raw tokens, not words/notes")
    pa.add_argument("--output", required=True)
    pa.add_argument("--pairs-only", help="also write bare nested pair lists here")
    pa.set_defaults(func=cmd_align)

    pe = sub.add_parser("eval", help="objective metrics report")
    pe.add_argument("--generated", required=True)
    pe.add_argument("--reference", required=True)
    pe.add_argument("--report", required=True)
    pe.add_argument("--direction", choices=["l2m", "m2l"], default="l2m")
    pe.add_argument("--checkpoint")
    pe.add_argument("--paired", help="paired JSONL for perplexity")
    pe.set_defaults(func=cmd_eval)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("command", nargs="?")
    known, _ = pre.parse_known_args(argv)
    config = _load_config(known.config)
    subparsers = parser._subparsers._group_actions[0].choices
    if config and known.command in subparsers:
        sub = subparsers[known.command]
        defaults = {}
        for action in sub._actions:
            if action.dest not in config:
                continue
            value = config[action.dest]
            if action.const is True:
                defaults[action.dest] = value.lower() in ("1", "true", "yes")
            else:
                defaults[action.dest] = action.type(value) if action.type else value
            action.required = False
        sub.set_defaults(**defaults)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.use_deterministic_algorithms(True)
    try:
        return args.func(args)
    except Exception as exc:  # module errors become a nonzero exit
        log.error("%s failed: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
