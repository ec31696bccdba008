"""Corpus manifest handling, block partitioning, and speaker pairing.

The corpus is described by a UTF-8 CSV manifest with the header

    speaker_id,sex,intelligibility_score,band,word_id,block,audio_path

A row with empty ``word_id``, ``block``, and ``audio_path`` declares a
speaker; a row with all three filled records an utterance of a declared
speaker (its speaker metadata columns may be left empty or must repeat
the declared values).  Utterances are split into train and test sets by
block: B1 and B3 train, B2 is held out.  Speakers are paired greedily by
minimum intelligibility-score difference within the same band.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

from . import dsp

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ("speaker_id", "sex", "intelligibility_score", "band",
                    "word_id", "block", "audio_path")
BLOCKS = ("B1", "B2", "B3")
TRAIN_BLOCKS = ("B1", "B3")
TEST_BLOCK = "B2"
BAND_NAMES = ("very_low", "low", "mid", "high")
DEFAULT_BAND_CUTS = (25.0, 50.0, 75.0)
SEXES = ("M", "F")


class ManifestError(ValueError):
    """Raised when a manifest file violates the format or its invariants."""


def band_for_score(score: float, cuts=DEFAULT_BAND_CUTS) -> str:
    """Map an intelligibility score to its band label.

    Bands are half-open below the top cut: [0, c0) -> very_low,
    [c0, c1) -> low, [c1, c2) -> mid, [c2, 100] -> high.
    """
    if not 0.0 <= score <= 100.0:
        raise ValueError(f"intelligibility score {score} outside [0, 100]")
    if not (len(cuts) == 3 and 0.0 < cuts[0] < cuts[1] < cuts[2] < 100.0):
        raise ValueError(f"band cuts must be three increasing values in (0, 100), got {cuts}")
    for cut, name in zip(cuts, BAND_NAMES):
        if score < cut:
            return name
    return BAND_NAMES[-1]


@dataclass(frozen=True)
class SpeakerRecord:
    speaker_id: str
    sex: str
    intelligibility_score: float
    intelligibility_band: str


@dataclass(frozen=True)
class UtteranceRecord:
    speaker_id: str
    word_id: str
    block: str
    audio_path: str

    @property
    def key(self) -> str:
        return f"{self.speaker_id}/{self.word_id}/{self.block}"


@dataclass
class CorpusManifest:
    speakers: list = field(default_factory=list)
    utterances: list = field(default_factory=list)

    def speaker(self, speaker_id: str) -> SpeakerRecord:
        for s in self.speakers:
            if s.speaker_id == speaker_id:
                return s
        raise KeyError(f"unknown speaker {speaker_id!r}")

    @property
    def speaker_ids(self):
        return [s.speaker_id for s in self.speakers]


@dataclass(frozen=True)
class SpeakerPair:
    a: str
    b: str
    delta: float


def _score_delta(score_a: float, score_b: float) -> float:
    # subtract in decimal so 7.4 - 2 comes out exactly 5.4, matching the
    # precision of the scores as written in the manifest
    d = Decimal(str(score_a)) - Decimal(str(score_b))
    return float(abs(d))


def parse_manifest(path, band_cuts=DEFAULT_BAND_CUTS,
                   require_audio: bool = True) -> CorpusManifest:
    """Read and fully validate a manifest CSV.

    Raises ManifestError naming the offending line for malformed rows,
    duplicate speakers or utterance keys, unknown speaker references,
    band labels inconsistent with ``band_cuts``, and (when
    ``require_audio``) missing audio files.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")

    speakers: dict = {}
    utterances: list = []
    seen_keys: set = set()

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path} line 1: empty manifest, header required") from None
        if [h.strip() for h in header] != list(MANIFEST_COLUMNS):
            raise ManifestError(
                f"{path} line 1: header must be {','.join(MANIFEST_COLUMNS)}")

        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise ManifestError(
                    f"{path} line {lineno}: expected {len(MANIFEST_COLUMNS)} "
                    f"columns, got {len(row)}")
            sid, sex, score_text, band, word, block, audio = (c.strip() for c in row)
            if not sid:
                raise ManifestError(f"{path} line {lineno}: speaker_id is empty")

            utterance_fields = (word, block, audio)
            if not any(utterance_fields):
                _add_speaker(speakers, sid, sex, score_text, band,
                             band_cuts, path, lineno)
                continue
            if not all(utterance_fields):
                raise ManifestError(
                    f"{path} line {lineno}: utterance rows need word_id, "
                    "block, and audio_path; speaker rows leave all three empty")

            if sid not in speakers:
                raise ManifestError(
                    f"{path} line {lineno}: utterance references unknown "
                    f"speaker {sid!r}; declare the speaker in an earlier row")
            _check_metadata_consistency(speakers[sid], sex, score_text, band,
                                        path, lineno)
            if block not in BLOCKS:
                raise ManifestError(
                    f"{path} line {lineno}: block must be one of "
                    f"{'/'.join(BLOCKS)}, got {block!r}")
            utt = UtteranceRecord(sid, word, block, audio)
            if utt.key in seen_keys:
                raise ManifestError(
                    f"{path} line {lineno}: duplicate utterance key {utt.key}")
            seen_keys.add(utt.key)
            if require_audio and not Path(audio).is_file():
                raise ManifestError(
                    f"{path} line {lineno}: audio file not found: {audio}")
            utterances.append(utt)

    return CorpusManifest(list(speakers.values()), utterances)


def _add_speaker(speakers, sid, sex, score_text, band, band_cuts, path, lineno):
    if sid in speakers:
        raise ManifestError(f"{path} line {lineno}: duplicate speaker {sid!r}")
    if sex not in SEXES:
        raise ManifestError(
            f"{path} line {lineno}: sex must be one of {'/'.join(SEXES)}, got {sex!r}")
    try:
        score = float(score_text)
    except ValueError:
        raise ManifestError(
            f"{path} line {lineno}: intelligibility_score {score_text!r} "
            "is not a number") from None
    if not 0.0 <= score <= 100.0:
        raise ManifestError(
            f"{path} line {lineno}: intelligibility_score {score} outside [0, 100]")
    expected = band_for_score(score, band_cuts)
    if band != expected:
        raise ManifestError(
            f"{path} line {lineno}: band {band!r} inconsistent with score "
            f"{score} (expected {expected!r} for cuts {tuple(band_cuts)})")
    speakers[sid] = SpeakerRecord(sid, sex, score, band)


def _check_metadata_consistency(rec, sex, score_text, band, path, lineno):
    # utterance rows may repeat the speaker metadata; if they do it must match
    if sex and sex != rec.sex:
        raise ManifestError(
            f"{path} line {lineno}: sex {sex!r} contradicts declared "
            f"{rec.sex!r} for {rec.speaker_id}")
    if score_text and float(score_text) != rec.intelligibility_score:
        raise ManifestError(
            f"{path} line {lineno}: score {score_text} contradicts declared "
            f"{rec.intelligibility_score} for {rec.speaker_id}")
    if band and band != rec.intelligibility_band:
        raise ManifestError(
            f"{path} line {lineno}: band {band!r} contradicts declared "
            f"{rec.intelligibility_band!r} for {rec.speaker_id}")


def partition_blocks(m: CorpusManifest):
    """Split utterances into (train, test): B1 and B3 train, B2 test."""
    train = [u for u in m.utterances if u.block in TRAIN_BLOCKS]
    test = [u for u in m.utterances if u.block == TEST_BLOCK]
    assert len(train) + len(test) == len(m.utterances)
    assert not {u.key for u in train} & {u.key for u in test}
    if m.utterances and not train:
        logger.warning("manifest has no B1/B3 utterances; training set is empty")
    return train, test


def pair_speakers(m: CorpusManifest, max_delta: float,
                  include_female: bool = False,
                  allow_cross_sex: bool = False):
    """Greedily pair speakers by smallest score difference within a band.

    Candidates must share an intelligibility band and differ by at most
    ``max_delta`` points.  Female speakers join only when
    ``include_female``; mixed-sex pairs only when ``allow_cross_sex``.
    Each speaker lands in at most one pair.  Ties on delta resolve by
    speaker id order, so the result is deterministic.  Speakers left
    without a partner are logged.
    """
    if max_delta < 0:
        raise ValueError(f"max_delta must be non-negative, got {max_delta}")
    eligible = [s for s in m.speakers if include_female or s.sex == "M"]
    eligible.sort(key=lambda s: s.speaker_id)
    pool = {s.speaker_id: s for s in eligible}
    pairs = []
    while True:
        best = None
        ids = sorted(pool)
        for i, a_id in enumerate(ids):
            for b_id in ids[i + 1:]:
                a, b = pool[a_id], pool[b_id]
                if a.intelligibility_band != b.intelligibility_band:
                    continue
                if not allow_cross_sex and a.sex != b.sex:
                    continue
                delta = _score_delta(a.intelligibility_score,
                                     b.intelligibility_score)
                if delta > max_delta:
                    continue
                cand = (delta, a_id, b_id)
                if best is None or cand < best:
                    best = cand
        if best is None:
            break
        delta, a_id, b_id = best
        pairs.append(SpeakerPair(a_id, b_id, delta))
        del pool[a_id], pool[b_id]
    for sid in sorted(pool):
        logger.warning("speaker %s left unpaired", sid)
    return pairs


@dataclass
class FeatureStore:
    """Outcome of a feature-extraction run over a manifest."""
    root: Path
    entries: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def index_path(self) -> Path:
        return self.root / "index.json"

    def feature_path(self, key: str) -> Path:
        return self.root / self.entries[key]["feature_path"]


def load_feature_store(root) -> FeatureStore:
    root = Path(root)
    with open(root / "index.json", encoding="utf-8") as fh:
        entries = json.load(fh)
    return FeatureStore(root=root, entries=entries)


def build_feature_store(m: CorpusManifest, dsp_cfg, out_dir) -> FeatureStore:
    """Extract and persist mel-cepstral features for every utterance.

    Per utterance: reduce_noise, trim_silence, resample to the configured
    rate, normalize, mel_spectrogram, mel_cepstrum, written as an MCEP1
    file under ``out_dir/features``.  All-silent clips are skipped and
    listed in ``skipped.txt``; unreadable or too-short clips are recorded
    in ``errors.txt`` and the run continues.  ``index.json`` maps each
    utterance key to its feature file and frame count.
    """
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    store = FeatureStore(root=out_dir)

    for utt in m.utterances:
        try:
            w = dsp.read_wav(utt.audio_path)
            w = dsp.reduce_noise(w, dsp_cfg)
            w = dsp.trim_silence(w, threshold_db=dsp_cfg.trim_threshold_db,
                                 frame_ms=dsp_cfg.trim_frame_ms)
            w = dsp.resample(w, dsp_cfg.sample_rate)
            w = dsp.normalize(w)
            ms = dsp.mel_spectrogram(w, dsp_cfg)
            mc = dsp.mel_cepstrum(ms, dsp_cfg.cepstral_order)
        except dsp.AllSilentError:
            store.skipped.append(utt.key)
            continue
        except (OSError, ValueError) as exc:
            store.errors.append((utt.key, str(exc)))
            continue
        name = f"{utt.speaker_id}_{utt.word_id}_{utt.block}.mcep"
        dsp.write_mcep(feat_dir / name, mc.frames)
        store.entries[utt.key] = {
            "speaker_id": utt.speaker_id,
            "block": utt.block,
            "feature_path": f"features/{name}",
            "frames": int(mc.frames.shape[0]),
        }

    with open(store.index_path, "w", encoding="utf-8") as fh:
        json.dump(store.entries, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "skipped.txt", "w", encoding="utf-8") as fh:
        for key in store.skipped:
            fh.write(key + "\n")
    with open(out_dir / "errors.txt", "w", encoding="utf-8") as fh:
        for key, msg in store.errors:
            fh.write(f"{key}\t{msg}\n")
    if store.skipped:
        logger.info("skipped %d all-silent clip(s)", len(store.skipped))
    if store.errors:
        logger.warning("failed to process %d clip(s)", len(store.errors))
    return store
