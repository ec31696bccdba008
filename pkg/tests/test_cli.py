import json
from pathlib import Path

import numpy as np
import pytest

from pathovc import dsp
from pathovc.cli import main

RUN_INI = """\
[model]
hidden = 16
latent_dim = 8
codebook_size = 8
embed_dim = 4

[training]
steps = 5
batch_size = 4
crop_frames = 12
learning_rate = 0.002
seed = 7
"""


def build_corpus(root: Path):
    """Two speakers, three words, three blocks of short two-tone clips."""
    sr = 16000
    wavs = root / "wavs"
    wavs.mkdir()
    lines = ["speaker_id,sex,intelligibility_score,band,word_id,block,audio_path"]
    lines.append("M04,M,2,very_low,,,")
    lines.append("M12,M,7.4,very_low,,,")
    for sid, f0 in (("M04", 170.0), ("M12", 260.0)):
        for w in range(3):
            for block in ("B1", "B2", "B3"):
                t = np.arange(int(0.35 * sr)) / sr
                x = (0.5 * np.sin(2 * np.pi * f0 * t)
                     + 0.2 * np.sin(2 * np.pi * 2.3 * f0 * t + w))
                path = wavs / f"{sid}_W{w}_{block}.wav"
                dsp.write_wav(path, dsp.Waveform(0.8 * x, sr))
                lines.append(f"{sid},,,,W{w},{block},{path}")
    manifest = root / "manifest.csv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    ini = root / "run.ini"
    ini.write_text(RUN_INI, encoding="utf-8")
    return manifest, ini


@pytest.fixture(scope="module")
def env(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    manifest, ini = build_corpus(root)
    feats = root / "feats"
    assert main(["--config", str(ini), "--out", str(feats),
                 "preprocess", str(manifest)]) == 0
    model_dir = root / "model"
    assert main(["--config", str(ini), "--out", str(model_dir),
                 "train", str(manifest), "--features", str(feats)]) == 0
    return {"root": root, "manifest": manifest, "ini": ini, "feats": feats,
            "ckpt": model_dir / "model.hvqv", "report": model_dir / "training_report.csv"}


class TestParsing:
    def test_no_command_is_user_error(self, capsys):
        assert main([]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_command_is_user_error(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "error" in capsys.readouterr().err

    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0

    def test_bad_config_file_is_user_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[nonsense]\nx = 1\n")
        assert main(["--config", str(bad), "pair", "whatever.csv"]) == 1
        assert "nonsense" in capsys.readouterr().err


class TestDumpConfig:
    def test_prints_defaults_and_exits_zero(self, capsys):
        assert main(["--dump-config"]) == 0
        out = capsys.readouterr().out
        for section in ("[dsp]", "[model]", "[training]", "[paths]"):
            assert section in out
        assert "steps = 200" in out

    def test_reflects_config_file(self, env, capsys):
        assert main(["--config", str(env["ini"]), "--dump-config"]) == 0
        assert "steps = 5" in capsys.readouterr().out


class TestPreprocess:
    def test_index_written(self, env):
        index = json.loads((env["feats"] / "index.json").read_text())
        assert len(index) == 18
        entry = index["M04/W0/B1"]
        assert entry["speaker_id"] == "M04"
        frames = dsp.read_mcep(env["feats"] / entry["feature_path"])
        assert frames.shape == (entry["frames"], 40)

    def test_missing_audio_named_in_summary(self, tmp_path, capsys):
        manifest = tmp_path / "m.csv"
        manifest.write_text(
            "speaker_id,sex,intelligibility_score,band,word_id,block,audio_path\n"
            "M04,M,2,very_low,,,\n"
            f"M04,,,,W0,B1,{tmp_path / 'ghost.wav'}\n")
        assert main(["--out", str(tmp_path / "out"),
                     "preprocess", str(manifest)]) == 1
        err = capsys.readouterr().err
        assert "M04/W0/B1" in err

    def test_rerun_byte_identical(self, env, tmp_path):
        out2 = tmp_path / "again"
        assert main(["--config", str(env["ini"]), "--out", str(out2),
                     "preprocess", str(env["manifest"])]) == 0
        name = "features/M04_W0_B1.mcep"
        assert (out2 / name).read_bytes() == (env["feats"] / name).read_bytes()
        assert ((out2 / "index.json").read_text()
                == (env["feats"] / "index.json").read_text())

    def test_out_dir_required(self, env, capsys):
        assert main(["preprocess", str(env["manifest"])]) == 1
        assert "--out" in capsys.readouterr().err


class TestTrain:
    def test_artifacts_written(self, env):
        assert env["ckpt"].is_file()
        lines = env["report"].read_text().strip().splitlines()
        assert lines[0].startswith("step,")
        assert len(lines) == 1 + 5

    def test_same_seed_bit_identical_checkpoint(self, env, tmp_path):
        out2 = tmp_path / "model2"
        assert main(["--config", str(env["ini"]), "--out", str(out2),
                     "train", str(env["manifest"]),
                     "--features", str(env["feats"])]) == 0
        assert (out2 / "model.hvqv").read_bytes() == env["ckpt"].read_bytes()
        assert ((out2 / "training_report.csv").read_bytes()
                == env["report"].read_bytes())

    def test_seed_flag_overrides_config(self, env, tmp_path):
        out2 = tmp_path / "model9"
        assert main(["--config", str(env["ini"]), "--seed", "9",
                     "--out", str(out2), "train", str(env["manifest"]),
                     "--features", str(env["feats"])]) == 0
        assert (out2 / "model.hvqv").read_bytes() != env["ckpt"].read_bytes()

    def test_seed_required(self, env, tmp_path, capsys):
        assert main(["--out", str(tmp_path / "m"), "train",
                     str(env["manifest"]), "--features", str(env["feats"])]) == 1
        assert "seed" in capsys.readouterr().err

    def test_b2_in_train_list_refused(self, env, tmp_path, capsys):
        listing = tmp_path / "list.txt"
        listing.write_text("M04/W0/B2\nM04/W1/B1\n")
        assert main(["--config", str(env["ini"]), "--out", str(tmp_path / "m"),
                     "train", str(env["manifest"]), "--features",
                     str(env["feats"]), "--train-list", str(listing)]) == 1
        err = capsys.readouterr().err
        assert "M04/W0/B2" in err and "refusing" in err

    def test_explicit_train_list_accepted(self, env, tmp_path):
        listing = tmp_path / "list.txt"
        listing.write_text("M04/W0/B1\nM12/W0/B3\n")
        out = tmp_path / "m"
        assert main(["--config", str(env["ini"]), "--out", str(out),
                     "train", str(env["manifest"]), "--features",
                     str(env["feats"]), "--train-list", str(listing)]) == 0
        assert (out / "model.hvqv").is_file()

    def test_unknown_train_list_key_refused(self, env, tmp_path, capsys):
        listing = tmp_path / "list.txt"
        listing.write_text("M04/W9/B1\n")
        assert main(["--config", str(env["ini"]), "--out", str(tmp_path / "m"),
                     "train", str(env["manifest"]), "--features",
                     str(env["feats"]), "--train-list", str(listing)]) == 1
        assert "M04/W9/B1" in capsys.readouterr().err

    def test_feature_width_mismatch_refused(self, env, tmp_path, capsys):
        ini = tmp_path / "narrow.ini"
        ini.write_text(RUN_INI + "in_channels = 10\n")
        assert main(["--config", str(ini), "--out", str(tmp_path / "m"),
                     "train", str(env["manifest"]),
                     "--features", str(env["feats"])]) == 1
        assert "in_channels" in capsys.readouterr().err

    def test_corrupt_index_is_internal_error(self, env, tmp_path, capsys):
        feats = tmp_path / "feats"
        feats.mkdir()
        (feats / "index.json").write_text("{ not json")
        assert main(["--config", str(env["ini"]), "--out", str(tmp_path / "m"),
                     "train", str(env["manifest"]),
                     "--features", str(feats)]) == 2
        assert "internal error" in capsys.readouterr().err


class TestConvert:
    def test_b2_only_by_default(self, env, tmp_path):
        out = tmp_path / "conv"
        assert main(["--config", str(env["ini"]), "--out", str(out),
                     "convert", str(env["ckpt"]), "--features",
                     str(env["feats"]), "--source", "M04",
                     "--target", "M12", "--gl-iterations", "3"]) == 0
        mceps = sorted(p.name for p in out.glob("*.mcep"))
        assert mceps == ["M04_W0_B2_to_M12.mcep", "M04_W1_B2_to_M12.mcep",
                         "M04_W2_B2_to_M12.mcep"]
        wavs = list(out.glob("*.wav"))
        assert len(wavs) == 3
        w = dsp.read_wav(wavs[0])
        assert w.sample_rate == 24000 and len(w.samples) > 0
        frames = dsp.read_mcep(out / mceps[0])
        assert frames.shape[1] == 40

    def test_all_blocks_flag(self, env, tmp_path):
        out = tmp_path / "conv"
        assert main(["--config", str(env["ini"]), "--out", str(out),
                     "convert", str(env["ckpt"]), "--features",
                     str(env["feats"]), "--source", "M04", "--target", "M12",
                     "--all-blocks", "--no-wav"]) == 0
        assert len(list(out.glob("*.mcep"))) == 9
        assert list(out.glob("*.wav")) == []

    def test_unknown_target_is_lookup_error(self, env, tmp_path, capsys):
        assert main(["--config", str(env["ini"]), "--out", str(tmp_path / "c"),
                     "convert", str(env["ckpt"]), "--features",
                     str(env["feats"]), "--source", "M04",
                     "--target", "M99"]) == 1
        assert "M99" in capsys.readouterr().err

    def test_source_equal_target_reconstructs(self, env, tmp_path):
        out = tmp_path / "recon"
        assert main(["--config", str(env["ini"]), "--out", str(out),
                     "convert", str(env["ckpt"]), "--features",
                     str(env["feats"]), "--source", "M04", "--target", "M04",
                     "--no-wav"]) == 0
        assert len(list(out.glob("*.mcep"))) == 3

    def test_missing_checkpoint(self, env, tmp_path, capsys):
        assert main(["--out", str(tmp_path / "c"), "convert",
                     str(tmp_path / "nope.hvqv"), "--features",
                     str(env["feats"]), "--source", "M04",
                     "--target", "M12"]) == 1
        assert "checkpoint" in capsys.readouterr().err

    def test_unknown_source_reported(self, env, tmp_path, capsys):
        assert main(["--config", str(env["ini"]), "--out", str(tmp_path / "c"),
                     "convert", str(env["ckpt"]), "--features",
                     str(env["feats"]), "--source", "M77",
                     "--target", "M12"]) == 1
        assert "M77" in capsys.readouterr().err


class TestPair:
    def test_prints_pairs_and_writes_csv(self, env, tmp_path, capsys):
        out = tmp_path / "pairs"
        assert main(["--out", str(out), "pair", str(env["manifest"])]) == 0
        assert "M04,M12,5.4" in capsys.readouterr().out
        assert (out / "pairs.csv").read_text().splitlines()[1] == "M04,M12,5.4"

    def test_unmatched_reported(self, tmp_path, capsys):
        manifest = tmp_path / "m.csv"
        manifest.write_text(
            "speaker_id,sex,intelligibility_score,band,word_id,block,audio_path\n"
            "M04,M,2,very_low,,,\n")
        assert main(["pair", str(manifest)]) == 0
        assert "M04" in capsys.readouterr().err


def write_ratings(path: Path, rows):
    path.write_text("listener_id,kind,group_key,value\n"
                    + "\n".join(",".join(r) for r in rows) + "\n")


class TestStats:
    def test_mos_seven_conditions(self, tmp_path, capsys):
        rows = []
        for cond in ("healthy_natural", "gt_high", "gt_mid", "gt_low",
                     "vc_high", "vc_mid", "vc_low"):
            for i in range(4):
                rows.append((f"L{i:02d}", "mos", cond, str(2 + (i % 3))))
        ratings = tmp_path / "r.csv"
        write_ratings(ratings, rows)
        assert main(["--out", str(tmp_path / "out"), "stats", str(ratings),
                     "--mode", "mos"]) == 0
        out_lines = capsys.readouterr().out.strip().splitlines()
        assert len(out_lines) == 8
        assert (tmp_path / "out" / "mos_summary.csv").is_file()

    def test_ab_prints_paper_percentage(self, tmp_path, capsys):
        rows = [(f"L{i:02d}", "ab", "M04-M12:a_to_b:VC_vs_T",
                 "same_sure" if i < 22 else "different_sure")
                for i in range(30)]
        ratings = tmp_path / "r.csv"
        write_ratings(ratings, rows)
        assert main(["stats", str(ratings), "--mode", "ab"]) == 0
        assert "73.33%" in capsys.readouterr().out

    def test_wilcoxon_no_test_reported(self, tmp_path, capsys):
        rows = []
        for i in range(5):
            rows.append((f"L{i:02d}", "mos", "gt_high", "3"))
            rows.append((f"L{i:02d}", "mos", "vc_high", "3"))
        ratings = tmp_path / "r.csv"
        write_ratings(ratings, rows)
        assert main(["stats", str(ratings), "--mode", "wilcoxon"]) == 0
        assert "no_test" in capsys.readouterr().out

    def test_wilcoxon_explicit_conditions(self, tmp_path, capsys):
        rows = []
        for i in range(6):
            rows.append((f"L{i:02d}", "mos", "gt_low", str(5 - (i % 3))))
            rows.append((f"L{i:02d}", "mos", "healthy_natural", "5"))
        ratings = tmp_path / "r.csv"
        write_ratings(ratings, rows)
        assert main(["stats", str(ratings), "--mode", "wilcoxon",
                     "--conditions", "healthy_natural:gt_low"]) == 0
        out = capsys.readouterr().out
        assert "healthy_natural,gt_low" in out

    def test_malformed_ratings_rejected(self, tmp_path, capsys):
        ratings = tmp_path / "r.csv"
        ratings.write_text("listener_id,kind,group_key,value\nL0,mos,gt_high,9\n")
        assert main(["stats", str(ratings), "--mode", "mos"]) == 1
        assert "error" in capsys.readouterr().err

    def test_similarity_grid_written(self, tmp_path):
        rows = [(f"L{i:02d}", "ab", "M04-M12:a_to_b:VC_vs_T", "same_sure")
                for i in range(5)]
        ratings = tmp_path / "r.csv"
        write_ratings(ratings, rows)
        assert main(["--out", str(tmp_path / "out"), "stats", str(ratings),
                     "--mode", "ab"]) == 0
        grid = (tmp_path / "out" / "similarity_grid.csv").read_text()
        assert grid.splitlines()[0].startswith("pair,direction,reference")
