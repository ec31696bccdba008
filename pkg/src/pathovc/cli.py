"""Command line front end for the conversion pipeline.

Subcommands: preprocess (manifest to feature store), train (feature
store to checkpoint), convert (checkpoint plus features to converted
features and waveforms), pair (severity-matched speaker pairs), stats
(listening-test analysis).  Global flags --config, --seed, and --out
come before the subcommand.  Exit codes: 0 success, 1 user error,
2 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import traceback
from pathlib import Path

from . import corpus, dsp, stats, vqvae
from .config import ConfigError, dump_run_config, load_run_config

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.hvqv"
REPORT_NAME = "training_report.csv"

# judgment an AB comparison is scored against: ground-truth self
# comparisons and converted-versus-target expect "same"; comparisons
# across distinct speakers expect "different"
AB_EXPECTATIONS = {"S_vs_S": "same", "T_vs_T": "same", "S_vs_T": "different",
                   "VC_vs_S": "different", "VC_vs_T": "same"}

USER_ERRORS = (ConfigError, corpus.ManifestError, stats.RatingsFormatError,
               vqvae.CheckpointFormatError, vqvae.UnknownSpeakerError,
               dsp.FeatureFormatError, OSError)


class UserError(Exception):
    """Bad input or usage; reported without a traceback, exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UserError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pathovc", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", metavar="FILE",
                        help="INI configuration file; see --dump-config")
    parser.add_argument("--seed", type=int, metavar="N",
                        help="random seed; overrides [training] seed")
    parser.add_argument("--out", metavar="DIR",
                        help="output directory; overrides [paths] out")
    parser.add_argument("--dump-config", action="store_true",
                        help="print the effective configuration and exit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("preprocess", help="extract features for a manifest")
    p.add_argument("manifest", nargs="?", help="corpus manifest CSV")

    p = sub.add_parser("train", help="train a conversion model")
    p.add_argument("manifest", nargs="?", help="corpus manifest CSV")
    p.add_argument("--features", metavar="DIR",
                   help="feature store from the preprocess step")
    p.add_argument("--train-list", metavar="FILE",
                   help="file of utterance keys to train on instead of "
                        "the default B1/B3 split")

    p = sub.add_parser("convert", help="convert utterances to a target voice")
    p.add_argument("checkpoint", nargs="?", help="trained model checkpoint")
    p.add_argument("--features", metavar="DIR",
                   help="feature store holding the source utterances")
    p.add_argument("--source", required=True, metavar="SPEAKER",
                   help="speaker whose utterances are converted")
    p.add_argument("--target", required=True, metavar="SPEAKER",
                   help="speaker whose voice the output should carry")
    p.add_argument("--all-blocks", action="store_true",
                   help="convert every block, not only the held-out B2 set")
    p.add_argument("--gl-iterations", type=int, default=60, metavar="N",
                   help="phase-reconstruction iterations (default 60)")
    p.add_argument("--no-wav", action="store_true",
                   help="write converted features only, skip waveforms")

    p = sub.add_parser("pair", help="propose severity-matched speaker pairs")
    p.add_argument("manifest", nargs="?", help="corpus manifest CSV")
    p.add_argument("--max-delta", type=float, metavar="PCT",
                   help="largest allowed score difference")
    p.add_argument("--include-female", action="store_true")
    p.add_argument("--allow-cross-sex", action="store_true")

    p = sub.add_parser("stats", help="analyze listening-test ratings")
    p.add_argument("ratings", nargs="?", help="ratings CSV")
    p.add_argument("--mode", required=True, choices=("mos", "wilcoxon", "ab"))
    p.add_argument("--conditions", action="append", metavar="A:B",
                   help="condition pair for the wilcoxon mode; repeatable "
                        "(default: gt_X:vc_X per severity band present)")
    return parser


def _require(value, what: str):
    if not value:
        raise UserError(f"{what} required: pass it on the command line or "
                        "set it in the config [paths] section")
    return value


def _resolve(arg_value, cfg_value, what: str):
    return _require(arg_value or cfg_value, what)


def _out_dir(args, cfg) -> Path:
    out = Path(_resolve(args.out, cfg.paths.get("out"), "--out directory"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_manifest(args, cfg):
    # audio existence is checked per file where audio is actually read,
    # so one bad path is reported in the summary instead of aborting
    path = _resolve(getattr(args, "manifest", None),
                    cfg.paths.get("manifest"), "manifest path")
    return corpus.parse_manifest(path, band_cuts=cfg.band_cuts,
                                 require_audio=False)


def _load_store(args, cfg) -> corpus.FeatureStore:
    root = Path(_resolve(args.features, cfg.paths.get("features"),
                         "--features directory"))
    if not (root / "index.json").is_file():
        raise UserError(f"no feature index under {root}; run preprocess first")
    return corpus.load_feature_store(root)


def cmd_preprocess(args, cfg) -> int:
    manifest = _load_manifest(args, cfg)
    out = _out_dir(args, cfg)
    store = corpus.build_feature_store(manifest, cfg.dsp, out)
    print(f"wrote {len(store.entries)} feature file(s) to {out}")
    if store.skipped:
        print(f"skipped {len(store.skipped)} all-silent clip(s), "
              f"see {out / 'skipped.txt'}")
    if store.errors:
        print(f"{len(store.errors)} clip(s) failed:", file=sys.stderr)
        for key, msg in store.errors:
            print(f"  {key}: {msg}", file=sys.stderr)
        return 1
    return 0


def _training_seed(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    if cfg.has("training", "seed"):
        return cfg.training.seed
    raise UserError("train requires a seed: pass --seed or set "
                    "[training] seed in the config")


def _train_keys(args, manifest) -> list:
    train, _ = corpus.partition_blocks(manifest)
    if not args.train_list:
        return sorted(u.key for u in train)
    keys = [line.strip() for line in
            Path(args.train_list).read_text(encoding="utf-8").splitlines()
            if line.strip()]
    known = {u.key: u for u in manifest.utterances}
    unknown = [k for k in keys if k not in known]
    if unknown:
        raise UserError(f"train list names utterances missing from the "
                        f"manifest: {', '.join(unknown[:5])}")
    held_out = [k for k in keys if known[k].block == corpus.TEST_BLOCK]
    if held_out:
        raise UserError(
            "refusing to train on held-out B2 utterances: "
            + ", ".join(held_out[:5])
            + (" ..." if len(held_out) > 5 else ""))
    return sorted(keys)


def cmd_train(args, cfg) -> int:
    seed = _training_seed(args, cfg)
    manifest = _load_manifest(args, cfg)
    store = _load_store(args, cfg)
    keys = _train_keys(args, manifest)

    missing = [k for k in keys if k not in store.entries]
    if missing:
        logger.warning("%d training utterance(s) have no features and are "
                       "skipped", len(missing))
    dataset = []
    for key in keys:
        if key not in store.entries:
            continue
        frames = dsp.read_mcep(store.feature_path(key))
        dataset.append((store.entries[key]["speaker_id"], frames))
    if not dataset:
        raise UserError("no training utterances have features; nothing to do")
    width = dataset[0][1].shape[1]
    if width != cfg.model.in_channels:
        raise UserError(f"feature files carry {width} coefficients but the "
                        f"model expects {cfg.model.in_channels}; adjust "
                        "[model] in_channels or re-run preprocess")

    training = dataclasses.replace(cfg.training, seed=seed)
    model = vqvae.HVqVaeModel(cfg.model, manifest.speaker_ids, seed=seed)
    model, report = vqvae.train(model, dataset, training)

    out = _out_dir(args, cfg)
    ckpt = out / CHECKPOINT_NAME
    vqvae.save_checkpoint(model, ckpt)
    report.write_csv(out / REPORT_NAME)
    print(f"trained {training.steps} step(s) on {len(dataset)} utterance(s) "
          f"with seed {seed}")
    print(f"final reconstruction loss {report.reconstruction[-1]:.6f}")
    print(f"checkpoint {ckpt}")
    return 0


def _synthesize(frames, cfg, iterations: int) -> dsp.Waveform:
    mc = dsp.MelCepstrogram(frames,
                            frame_shift=cfg.dsp.hop_size / cfg.dsp.sample_rate,
                            sample_rate=cfg.dsp.sample_rate)
    ms = dsp.invert_mel_cepstrum(mc, cfg.dsp.n_mels)
    w = dsp.griffin_lim(ms, cfg.dsp, iterations)
    return dsp.normalize(w)


def cmd_convert(args, cfg) -> int:
    ckpt = _resolve(args.checkpoint, cfg.paths.get("checkpoint"),
                    "checkpoint path")
    if not Path(ckpt).is_file():
        raise UserError(f"checkpoint not found: {ckpt}")
    model = vqvae.load_checkpoint(ckpt)
    model.speaker_index(args.target)
    store = _load_store(args, cfg)
    out = _out_dir(args, cfg)

    selected = [
        (key, entry) for key, entry in sorted(store.entries.items())
        if entry["speaker_id"] == args.source
        and (args.all_blocks or entry["block"] == corpus.TEST_BLOCK)]
    if not selected:
        blocks = "any block" if args.all_blocks else corpus.TEST_BLOCK
        raise UserError(f"no utterances of speaker {args.source!r} in "
                        f"{blocks}; check --source or pass --all-blocks")

    failures = []
    written = 0
    for key, entry in selected:
        stem = key.replace("/", "_") + f"_to_{args.target}"
        try:
            frames = dsp.read_mcep(store.feature_path(key))
            converted = model.convert(frames, args.target)
            dsp.write_mcep(out / f"{stem}.mcep", converted)
            if not args.no_wav:
                w = _synthesize(converted, cfg, args.gl_iterations)
                dsp.write_wav(out / f"{stem}.wav", w)
            written += 1
        except (ValueError, OSError) as exc:
            failures.append((key, str(exc)))
    print(f"converted {written} utterance(s) of {args.source} to "
          f"{args.target} in {out}")
    if failures:
        print(f"{len(failures)} utterance(s) failed:", file=sys.stderr)
        for key, msg in failures:
            print(f"  {key}: {msg}", file=sys.stderr)
        return 1
    return 0


def cmd_pair(args, cfg) -> int:
    manifest = _load_manifest(args, cfg)
    max_delta = (args.max_delta if args.max_delta is not None
                 else cfg.pairing.max_delta)
    pairs = corpus.pair_speakers(
        manifest, max_delta=max_delta,
        include_female=args.include_female or cfg.pairing.include_female,
        allow_cross_sex=args.allow_cross_sex or cfg.pairing.allow_cross_sex)
    print("speaker_a,speaker_b,delta")
    for p in pairs:
        print(f"{p.a},{p.b},{p.delta}")
    paired = {p.a for p in pairs} | {p.b for p in pairs}
    unmatched = [s for s in manifest.speaker_ids if s not in paired]
    if unmatched:
        print("unpaired: " + ", ".join(unmatched), file=sys.stderr)
    if args.out or cfg.paths.get("out"):
        out = _out_dir(args, cfg)
        with open(out / "pairs.csv", "w", encoding="utf-8") as fh:
            fh.write("speaker_a,speaker_b,delta\n")
            for p in pairs:
                fh.write(f"{p.a},{p.b},{p.delta}\n")
    return 0


def _wilcoxon_pairs(args, rs) -> list:
    if args.conditions:
        pairs = []
        for entry in args.conditions:
            parts = entry.split(":")
            if len(parts) != 2 or not all(parts):
                raise UserError(f"--conditions entries look like a:b, "
                                f"got {entry!r}")
            pairs.append(tuple(parts))
        return pairs
    present = set(rs.mos_scores())
    pairs = [(f"gt_{band}", f"vc_{band}") for band in ("high", "mid", "low")
             if {f"gt_{band}", f"vc_{band}"} <= present]
    if not pairs:
        raise UserError("no gt/vc condition pairs found in the ratings; "
                        "name them with --conditions a:b")
    return pairs


def cmd_stats(args, cfg) -> int:
    ratings = _require(args.ratings, "ratings CSV path")
    rs = stats.RatingSet.from_csv(ratings)
    out = None
    if args.out or cfg.paths.get("out"):
        out = _out_dir(args, cfg)

    if args.mode == "mos":
        summaries = stats.mos_summary(rs)
        print("condition,n,mean,ci_low,ci_high")
        order = [c for c in stats.MOS_CONDITIONS if c in summaries]
        for cond in order:
            s = summaries[cond]
            lo = "" if s.ci_low is None else f"{s.ci_low:.4f}"
            hi = "" if s.ci_high is None else f"{s.ci_high:.4f}"
            print(f"{cond},{s.n},{s.mean:.4f},{lo},{hi}")
        if out:
            stats.export_tables({"mos": summaries}, out)

    elif args.mode == "wilcoxon":
        rows = []
        print("condition_a,condition_b,n,statistic,p_value,method")
        for cond_a, cond_b in _wilcoxon_pairs(args, rs):
            a, b = rs.mos_pairs(cond_a, cond_b)
            try:
                res = stats.wilcoxon_signed_rank(a, b)
                row = {"condition_a": cond_a, "condition_b": cond_b,
                       "n": res.n, "statistic": res.statistic,
                       "p_value": res.p_value, "method": res.method}
                print(f"{cond_a},{cond_b},{res.n},{res.statistic},"
                      f"{res.p_value},{res.method}")
            except stats.AllZeroDifferencesError:
                row = {"condition_a": cond_a, "condition_b": cond_b,
                       "n": 0, "statistic": "", "p_value": "",
                       "method": "no_test"}
                print(f"{cond_a},{cond_b},0,,,no_test "
                      "(all differences zero)")
            rows.append(row)
        if out:
            stats.export_tables({"wilcoxon": rows}, out)

    else:
        groups = rs.ab_groups()
        if not groups:
            raise UserError("no ab rows in the ratings file")
        print("pair,direction,comparison,expectation,n,percent,percent_sure")
        for (pair, direction, kind), judgments in sorted(groups.items()):
            expectation = AB_EXPECTATIONS[kind]
            agg = stats.ab_agreement(judgments, expectation)
            print(f"{pair},{direction},{kind},{expectation},{agg.n},"
                  f"{agg.percent_matching:.2f}%,"
                  f"{agg.percent_matching_sure_only:.2f}%")
        if out:
            stats.export_tables({"similarity": stats.similarity_grid(rs)}, out)
    return 0


COMMANDS = {"preprocess": cmd_preprocess, "train": cmd_train,
            "convert": cmd_convert, "pair": cmd_pair, "stats": cmd_stats}


def main(argv=None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_run_config(args.config)
        if args.dump_config:
            sys.stdout.write(dump_run_config(cfg))
            return 0
        if not args.command:
            raise UserError("no command given; see pathovc --help")
        return COMMANDS[args.command](args, cfg)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        print("internal error:", file=sys.stderr)
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
