"""Listening-test analysis: MOS aggregation, Wilcoxon tests, AB agreement.

Ratings arrive as a CSV with the header ``listener_id,kind,group_key,value``.
Rows with kind ``mos`` carry a naturalness score (1 to 5) for one of the
seven speech conditions; rows with kind ``ab`` carry a same/different
judgment for one AB comparison group keyed ``pair:direction:comparison``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import scipy.stats

logger = logging.getLogger(__name__)

MOS_CONDITIONS = ("healthy_natural", "gt_high", "gt_mid", "gt_low",
                  "vc_high", "vc_mid", "vc_low")
AB_COMPARISONS = ("S_vs_S", "T_vs_T", "S_vs_T", "VC_vs_S", "VC_vs_T")
AB_JUDGMENTS = ("same_sure", "same_not_sure",
                "different_not_sure", "different_sure")
RATINGS_COLUMNS = ("listener_id", "kind", "group_key", "value")

# largest n for which the two-sided p-value is computed by exhaustive
# sign enumeration; beyond this the normal approximation takes over
EXACT_ENUMERATION_LIMIT = 12


class RatingsFormatError(ValueError):
    """Raised when a ratings CSV violates the format or value ranges."""


class AllZeroDifferencesError(ValueError):
    """Raised when every paired difference is zero, so no test applies."""


@dataclass(frozen=True)
class RatingRow:
    listener_id: str
    kind: str
    group_key: str
    value: str


@dataclass
class RatingSet:
    """Validated listening-test rows with grouping helpers."""
    rows: list = field(default_factory=list)

    @classmethod
    def from_csv(cls, path) -> "RatingSet":
        path = Path(path)
        if not path.is_file():
            raise RatingsFormatError(f"ratings file not found: {path}")
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise RatingsFormatError(
                    f"{path} line 1: empty file, header required") from None
            if [h.strip() for h in header] != list(RATINGS_COLUMNS):
                raise RatingsFormatError(
                    f"{path} line 1: header must be {','.join(RATINGS_COLUMNS)}")
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 4:
                    raise RatingsFormatError(
                        f"{path} line {lineno}: expected 4 columns, got {len(row)}")
                listener, kind, group, value = (c.strip() for c in row)
                _validate_row(kind, group, value, path, lineno)
                rows.append(RatingRow(listener, kind, group, value))
        return cls(rows)

    def mos_scores(self) -> dict:
        """Scores per condition, in input order."""
        out: dict = {}
        for r in self.rows:
            if r.kind == "mos":
                out.setdefault(r.group_key, []).append(int(r.value))
        return out

    def mos_pairs(self, condition_a: str, condition_b: str):
        """Scores for two conditions paired by listener id.

        Listeners must appear exactly once under each condition; ids
        present under only one of the two are an error, since paired
        tests require consistent listeners.
        """
        by_cond: dict = {condition_a: {}, condition_b: {}}
        for r in self.rows:
            if r.kind != "mos" or r.group_key not in by_cond:
                continue
            bucket = by_cond[r.group_key]
            if r.listener_id in bucket:
                raise RatingsFormatError(
                    f"listener {r.listener_id!r} rated condition "
                    f"{r.group_key!r} more than once")
            bucket[r.listener_id] = int(r.value)
        ids_a, ids_b = set(by_cond[condition_a]), set(by_cond[condition_b])
        if ids_a != ids_b:
            odd = sorted(ids_a ^ ids_b)
            raise RatingsFormatError(
                f"listeners {odd} lack a rating under one of "
                f"{condition_a!r}/{condition_b!r}")
        listeners = sorted(ids_a)
        return ([by_cond[condition_a][l] for l in listeners],
                [by_cond[condition_b][l] for l in listeners])

    def ab_groups(self) -> dict:
        """Judgments per (pair, direction, comparison), in input order."""
        out: dict = {}
        for r in self.rows:
            if r.kind == "ab":
                pair, direction, comparison = r.group_key.split(":")
                out.setdefault((pair, direction, comparison), []).append(r.value)
        return out


def _validate_row(kind, group, value, path, lineno):
    if kind == "mos":
        if group not in MOS_CONDITIONS:
            raise RatingsFormatError(
                f"{path} line {lineno}: unknown condition {group!r}; "
                f"expected one of {', '.join(MOS_CONDITIONS)}")
        try:
            score = int(value)
        except ValueError:
            score = None
        if score is None or not 1 <= score <= 5:
            raise RatingsFormatError(
                f"{path} line {lineno}: mos score must be an integer in "
                f"[1, 5], got {value!r}")
    elif kind == "ab":
        parts = group.split(":")
        if len(parts) != 3 or not all(parts):
            raise RatingsFormatError(
                f"{path} line {lineno}: ab group_key must look like "
                f"pair:direction:comparison, got {group!r}")
        if parts[2] not in AB_COMPARISONS:
            raise RatingsFormatError(
                f"{path} line {lineno}: unknown comparison {parts[2]!r}; "
                f"expected one of {', '.join(AB_COMPARISONS)}")
        if value not in AB_JUDGMENTS:
            raise RatingsFormatError(
                f"{path} line {lineno}: unknown judgment {value!r}; "
                f"expected one of {', '.join(AB_JUDGMENTS)}")
    else:
        raise RatingsFormatError(
            f"{path} line {lineno}: kind must be mos or ab, got {kind!r}")


@dataclass(frozen=True)
class MosSummary:
    condition: str
    n: int
    mean: float
    ci_low: object
    ci_high: object


def mos_summary(rs) -> dict:
    """Per-condition mean with a 95% Student-t confidence interval.

    With a single rating the interval is undefined and both bounds are
    None.  Conditions present but empty are dropped with a warning.
    """
    scores_by_condition = rs.mos_scores() if isinstance(rs, RatingSet) else dict(rs)
    out = {}
    for cond, scores in scores_by_condition.items():
        if not scores:
            logger.warning("condition %s has no ratings; omitted", cond)
            continue
        for s in scores:
            if not 1 <= int(s) <= 5:
                raise ValueError(f"score {s} outside [1, 5] for {cond}")
        n = len(scores)
        mean = sum(scores) / n
        if n == 1:
            out[cond] = MosSummary(cond, n, mean, None, None)
            continue
        var = sum((s - mean) ** 2 for s in scores) / (n - 1)
        t = scipy.stats.t.ppf(0.975, n - 1)
        half = t * math.sqrt(var) / math.sqrt(n)
        out[cond] = MosSummary(cond, n, mean, mean - half, mean + half)
    return out


def _midranks(magnitudes):
    """Average ranks of tied absolute differences, doubled to stay integral."""
    order = sorted(range(len(magnitudes)), key=lambda i: magnitudes[i])
    doubled = [0] * len(magnitudes)
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and magnitudes[order[j]] == magnitudes[order[i]]:
            j += 1
        # ranks i+1 .. j average to (i+j+1)/2; store twice that
        for k in range(i, j):
            doubled[order[k]] = i + j + 1
        i = j
    return doubled


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    w_plus: float
    w_minus: float
    n: int
    method: str

    def __iter__(self):
        return iter((self.statistic, self.p_value))


def wilcoxon_signed_rank(a, b, method: str = "auto") -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired scores.

    Zero differences are dropped.  Ties in |difference| take midranks.
    The statistic is min(W+, W-).  For n up to 12 the p-value enumerates
    all sign assignments exactly; larger n uses the normal approximation
    with tie-corrected variance and a continuity correction.  ``method``
    forces "exact" or "approx" instead of the size-based default.
    """
    if len(a) != len(b):
        raise ValueError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    if method not in ("auto", "exact", "approx"):
        raise ValueError(f"method must be auto, exact, or approx, got {method!r}")
    diffs = [float(x) - float(y) for x, y in zip(a, b)]
    diffs = [d for d in diffs if d != 0.0]
    n = len(diffs)
    if n == 0:
        raise AllZeroDifferencesError(
            "all paired differences are zero; the signed-rank test is undefined")
    doubled = _midranks([abs(d) for d in diffs])
    dw_plus = sum(r for d, r in zip(diffs, doubled) if d > 0)
    dw_total = sum(doubled)
    dw = min(dw_plus, dw_total - dw_plus)

    if method == "exact" or (method == "auto" and n <= EXACT_ENUMERATION_LIMIT):
        # count sign assignments whose statistic is at least as extreme;
        # doubled ranks keep every comparison in integers
        sums = {0: 1}
        for r in doubled:
            nxt: dict = {}
            for s, c in sums.items():
                nxt[s] = nxt.get(s, 0) + c
                nxt[s + r] = nxt.get(s + r, 0) + c
            sums = nxt
        hits = sum(c for s, c in sums.items() if min(s, dw_total - s) <= dw)
        p = hits / 2.0 ** n
        how = "exact"
    else:
        mu = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0
        # tie groups shrink the variance of W+
        sizes = []
        seen = sorted(abs(d) for d in diffs)
        i = 0
        while i < len(seen):
            j = i
            while j < len(seen) and seen[j] == seen[i]:
                j += 1
            sizes.append(j - i)
            i = j
        var -= sum(t ** 3 - t for t in sizes) / 48.0
        if var <= 0:
            raise AllZeroDifferencesError(
                "tie correction leaves zero variance; the test is undefined")
        # half-unit continuity shift toward the mean; without it the
        # normal tail underestimates the discrete p by several percent
        z = (dw / 2.0 + 0.5 - mu) / math.sqrt(var)
        p = min(1.0, 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0)))
        how = "approx"
    return WilcoxonResult(dw / 2.0, p, dw_plus / 2.0,
                          (dw_total - dw_plus) / 2.0, n, how)


def _truncate_percent(frac: Fraction) -> float:
    # report percentages cut, not rounded, at two decimals so printed
    # values like 46.66 for 14/30 come out of the exact fraction
    return int(frac * 10000) / 100.0


@dataclass(frozen=True)
class AbAgreement:
    expectation: str
    n: int
    counts: dict
    fraction_matching: Fraction
    fraction_matching_sure_only: Fraction

    @property
    def percent_matching(self) -> float:
        return _truncate_percent(self.fraction_matching)

    @property
    def percent_matching_sure_only(self) -> float:
        return _truncate_percent(self.fraction_matching_sure_only)


def ab_agreement(trials, expectation: str) -> AbAgreement:
    """Share of AB judgments agreeing with the expected outcome.

    ``trials`` is an iterable of judgment labels for one comparison
    group.  ``expectation`` is "same" or "different".  The plain share
    counts agreement at either confidence; the sure-only share counts
    only the confident agreements against the same denominator.
    Fractions are exact; the percent properties report them cut to two
    decimals.
    """
    if expectation not in ("same", "different"):
        raise ValueError(f"expectation must be same or different, got {expectation!r}")
    if isinstance(trials, RatingSet):
        groups = trials.ab_groups()
        if len(groups) != 1:
            raise ValueError(
                f"expected one comparison group, found {len(groups)}")
        (trials,) = groups.values()
    judgments = list(trials)
    if not judgments:
        raise ValueError("no trials given")
    counts = {j: 0 for j in AB_JUDGMENTS}
    for j in judgments:
        if j not in counts:
            raise ValueError(f"unknown judgment {j!r}")
        counts[j] += 1
    n = len(judgments)
    matching = counts[f"{expectation}_sure"] + counts[f"{expectation}_not_sure"]
    sure = counts[f"{expectation}_sure"]
    return AbAgreement(expectation, n, counts,
                       Fraction(matching, n), Fraction(sure, n))


# per (pair, direction) panel: the converted samples judged against one
# reference speaker, next to that reference's own ground-truth trials
GRID_REFERENCES = (
    ("source", "VC_vs_S", "different", "S_vs_S", "same"),
    ("target", "VC_vs_T", "same", "T_vs_T", "same"),
)


def similarity_grid(rs: RatingSet) -> list:
    """One row per (pair, direction, reference) AB panel.

    Three pairs judged in two directions give twelve rows.  Each row
    reports the converted-sample agreement with the expected outcome and
    the reference speaker's ground-truth self-agreement.  Groups missing
    from the data leave their cells empty.
    """
    groups = rs.ab_groups()
    keys = sorted({(p, d) for p, d, _ in groups})
    rows = []
    for pair, direction in keys:
        for reference, vc_kind, vc_expect, gt_kind, gt_expect in GRID_REFERENCES:
            row = {"pair": pair, "direction": direction, "reference": reference,
                   "vc_comparison": vc_kind, "vc_n": "", "vc_percent": "",
                   "vc_percent_sure": "", "gt_comparison": gt_kind,
                   "gt_n": "", "gt_percent": "", "gt_percent_sure": ""}
            vc = groups.get((pair, direction, vc_kind))
            if vc:
                agg = ab_agreement(vc, vc_expect)
                row.update(vc_n=agg.n, vc_percent=agg.percent_matching,
                           vc_percent_sure=agg.percent_matching_sure_only)
            gt = groups.get((pair, direction, gt_kind))
            if gt:
                agg = ab_agreement(gt, gt_expect)
                row.update(gt_n=agg.n, gt_percent=agg.percent_matching,
                           gt_percent_sure=agg.percent_matching_sure_only)
            rows.append(row)
    return rows


MOS_TABLE_COLUMNS = ("condition", "n", "mean", "ci_low", "ci_high")
GRID_COLUMNS = ("pair", "direction", "reference", "vc_comparison", "vc_n",
                "vc_percent", "vc_percent_sure", "gt_comparison", "gt_n",
                "gt_percent", "gt_percent_sure")
WILCOXON_COLUMNS = ("condition_a", "condition_b", "n", "statistic",
                    "p_value", "method")


def export_tables(results: dict, out_dir) -> list:
    """Write analysis tables as CSV files and return their paths.

    ``results`` may hold "mos" (mapping condition to MosSummary),
    "similarity" (grid rows), and "wilcoxon" (row dicts).  The first two
    files are always written, headers-only when absent.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    mos_path = out_dir / "mos_summary.csv"
    with open(mos_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MOS_TABLE_COLUMNS)
        summaries = results.get("mos", {})
        order = [c for c in MOS_CONDITIONS if c in summaries]
        order += [c for c in summaries if c not in MOS_CONDITIONS]
        for cond in order:
            s = summaries[cond]
            writer.writerow([s.condition, s.n, repr(float(s.mean)),
                             "" if s.ci_low is None else repr(float(s.ci_low)),
                             "" if s.ci_high is None else repr(float(s.ci_high))])
    written.append(mos_path)

    grid_path = out_dir / "similarity_grid.csv"
    with open(grid_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=GRID_COLUMNS)
        writer.writeheader()
        for row in results.get("similarity", []):
            writer.writerow(row)
    written.append(grid_path)

    if "wilcoxon" in results:
        w_path = out_dir / "wilcoxon.csv"
        with open(w_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=WILCOXON_COLUMNS)
            writer.writeheader()
            for row in results["wilcoxon"]:
                writer.writerow(row)
        written.append(w_path)
    return written
