"""Command-line interface.

One subcommand per pipeline stage plus corpus plumbing:

    synth-corpus, split, extract, train-forest, select-attrs, map-emotion,
    train, generate, evaluate, analyze-bias, run

Configuration comes from a JSON file (--config) overridable by flags; flags
win. The artifact root defaults to $EMOMUSIC_ARTIFACT_DIR or ./artifacts.
Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import EmoMusicError
from .mapping import EmotionQuadrant, MappingTable, binarize
from .midi import write_midi
from .pipeline import Pipeline, PipelineConfig, default_artifact_dir, split_dataset
from .pipeline import load_manifest
from .sampling import generate_from_bits
from .score import QuantizationConfig, score_to_midi
from .synth import SynthSpec, synth_corpus
from .tokens import tokens_to_score
from .training import load_checkpoint


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON; flags override it")
    p.add_argument("--artifact-dir", help="artifact root "
                   f"(default $EMOMUSIC_ARTIFACT_DIR or ./artifacts)")
    p.add_argument("--corpus-manifest", help="corpus manifest JSON path")
    p.add_argument("--seed", type=int, help="global seed")


def _build_config(args) -> PipelineConfig:
    overrides = {
        "artifact_dir": args.artifact_dir,
        "corpus_manifest": args.corpus_manifest,
        "seed": args.seed,
    }
    for name in ("forest_trees", "selection_method", "selection_k", "mapping_method",
                 "model_size", "train_steps", "batch_size", "base_lr", "warmup_steps",
                 "sampler_p", "n_generate_per_quadrant", "bias_n", "workers"):
        if hasattr(args, name):
            overrides[name] = getattr(args, name)
    if args.config:
        return PipelineConfig.from_json(args.config, **overrides)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    overrides.setdefault("artifact_dir", default_artifact_dir())
    if "corpus_manifest" not in overrides:
        overrides["corpus_manifest"] = str(Path(overrides["artifact_dir"]) /
                                           "corpus" / "manifest.json")
    return PipelineConfig(**overrides)


def build_parser() -> _Parser:
    parser = _Parser(prog="emomusic", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="write a synthetic labeled corpus")
    _add_common(p)
    p.add_argument("--out-dir", help="corpus directory (default <artifacts>/corpus)")
    p.add_argument("--n-per-quadrant", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--boundary-label-noise", type=float, default=0.0)

    p = sub.add_parser("split", help="write train/valid/test split manifests")
    _add_common(p)
    p.add_argument("--ratios", default="0.8,0.1,0.1")

    for name, extra in (
        ("extract", []),
        ("train-forest", ["forest_trees"]),
        ("select-attrs", ["selection_method", "selection_k"]),
        ("map-emotion", ["mapping_method"]),
        ("train", ["model_size", "train_steps", "batch_size", "base_lr",
                   "warmup_steps"]),
        ("evaluate", []),
        ("run", ["forest_trees", "selection_method", "selection_k",
                 "mapping_method", "model_size", "train_steps", "batch_size",
                 "base_lr", "warmup_steps", "sampler_p",
                 "n_generate_per_quadrant", "workers"]),
    ):
        p = sub.add_parser(name, help=f"pipeline stage: {name}")
        _add_common(p)
        for field in extra:
            flag = "--" + field.replace("_", "-")
            kind = float if field in ("base_lr", "sampler_p") else \
                (str if field in ("selection_method", "mapping_method",
                                  "model_size") else int)
            p.add_argument(flag, type=kind)

    p = sub.add_parser("generate", help="generate pieces from the mapping table")
    _add_common(p)
    p.add_argument("--emotion", choices=[q.name for q in EmotionQuadrant],
                   help="emotion quadrant to condition on")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--attr-file", help="JSON list of raw attribute values over "
                   "the selected dims, used instead of the mapping table")
    p.add_argument("--out-dir", help="output directory (default <artifacts>/generated)")
    p.add_argument("--sampler-p", type=float)

    p = sub.add_parser("analyze-bias", help="center/boundary accuracy probe")
    _add_common(p)
    p.add_argument("--bias-n", type=int)

    return parser


def _cmd_synth(args, config: PipelineConfig) -> int:
    out_dir = Path(args.out_dir) if args.out_dir \
        else Path(config.artifact_dir) / "corpus"
    spec = SynthSpec(noise=args.noise,
                     boundary_label_noise=args.boundary_label_noise)
    manifest = synth_corpus(spec, args.n_per_quadrant, config.seed, out_dir)
    print(f"wrote corpus manifest {manifest}")
    return 0


def _cmd_split(args, config: PipelineConfig) -> int:
    ratios = tuple(float(x) for x in args.ratios.split(","))
    if len(ratios) != 3:
        raise EmoMusicError("ratios must be three comma-separated numbers")
    items = load_manifest(config.corpus_manifest)
    splits = split_dataset(items, ratios, config.seed)
    out = Path(config.artifact_dir) / "splits.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(splits, indent=1) + "\n")
    print(f"wrote {out} " +
          " ".join(f"{k}={len(v)}" for k, v in splits.items()))
    return 0


def _cmd_generate(args, config: PipelineConfig) -> int:
    pipe = Pipeline(config)
    state, manifest = load_checkpoint(pipe.checkpoint_path)
    medians = np.asarray(manifest["medians"])
    out_dir = Path(args.out_dir) if args.out_dir else pipe.generated_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = QuantizationConfig()

    if args.attr_file:
        values = np.asarray(json.loads(Path(args.attr_file).read_text()), dtype=float)
        bits_by_name = {"custom": binarize(values, medians)}
    else:
        table = MappingTable.load(pipe.mapping_path)
        quadrants = [EmotionQuadrant[args.emotion]] if args.emotion \
            else list(EmotionQuadrant)
        bits_by_name = {q.name: binarize(table.vector_for(q), medians)
                        for q in quadrants}

    for name, bits in bits_by_name.items():
        name_key = sum(name.encode())  # stable across interpreter runs
        for i in range(args.n):
            seed = int(np.random.SeedSequence(
                [config.seed, 13, name_key, i]).generate_state(1)[0])
            tokens = generate_from_bits(state, bits, config.sampler_config(seed))
            score, _ = tokens_to_score(tokens, grid)
            path = out_dir / f"cli_{name}_{i:04d}.mid"
            path.write_bytes(write_midi(score_to_midi(score)))
            print(f"wrote {path} ({len(score.notes)} notes)")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _build_config(args)
        if args.command == "synth-corpus":
            return _cmd_synth(args, config)
        if args.command == "split":
            return _cmd_split(args, config)
        if args.command == "generate":
            return _cmd_generate(args, config)

        pipe = Pipeline(config)
        if args.command == "run":
            result = pipe.run()
            print(json.dumps(result["stages"], indent=1))
            print(json.dumps(result["report"], indent=1))
        elif args.command == "analyze-bias":
            report = pipe.analyze_bias(n=args.bias_n)
            print(json.dumps(report, indent=1))
        else:
            # run every upstream stage first; fresh ones are hash-skipped
            order = [
                ("extract", [pipe.stage_split, pipe.stage_extract]),
                ("train-forest", [pipe.stage_train_forest]),
                ("select-attrs", [pipe.stage_select]),
                ("map-emotion", [pipe.stage_map]),
                ("train", [pipe.stage_train]),
                ("evaluate", [pipe.stage_generate, pipe.stage_evaluate]),
            ]
            status = "skipped"
            for name, fns in order:
                for fn in fns:
                    status = fn()
                if name == args.command:
                    break
            print(f"{args.command}: {status}")
        return 0
    except EmoMusicError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as internal error
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
