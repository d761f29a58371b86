"""Corpus-level aggregation: ablation tables, group gaps and motion-stratified gaps."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidInputError
from .metrics.motion import TIERS, classify_motion_tiers
from .metrics.report import ConsistencyReport

CONFIG_LABELS = {
    "full": "Full pipeline",
    "no_character_viz": "Baseline 1 (no character assets)",
    "no_seed_frame": "Baseline 2 (no seed frame)",
}
FORMATS = ("json", "markdown")


@dataclass(frozen=True)
class CorpusEntry:
    video_id: str
    run_dir: str
    tags: frozenset
    report: ConsistencyReport

    def __post_init__(self):
        object.__setattr__(self, "tags", frozenset(self.tags))
        if self.report is None:
            raise InvalidInputError(f"{self.video_id}: corpus entry has no report")


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


# -- ablation table ------------------------------------------------------------------

@dataclass(frozen=True)
class AblationTable:
    metric: str
    columns: tuple
    rows: dict  # configuration -> tuple of per-column scores

    def average(self, config: str) -> float | None:
        vals = [v for v in self.rows[config] if v is not None]
        return _mean(vals) if vals else None

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "columns": list(self.columns),
            "rows": [
                {"configuration": cfg, "scores": list(self.rows[cfg]), "average": self.average(cfg)}
                for cfg in self.rows
            ],
        }


def ablation_table(full: Sequence[ConsistencyReport], b1: Sequence[ConsistencyReport],
                   b2: Sequence[ConsistencyReport], character_names: Sequence[str] | None = None,
                   metric: str = "computational") -> AblationTable:
    """One row per configuration, one column per character, plus the row average.

    Position i of each list must describe the same story under the three
    configurations. With several stories, columns read ``<video>:<name>``
    where ``<video>`` is the full run's id up to its last ``/``.
    """
    if metric not in ("computational", "judge"):
        raise InvalidInputError("metric must be 'computational' or 'judge'")
    full, b1, b2 = list(full), list(b1), list(b2)
    if not full or not len(full) == len(b1) == len(b2):
        raise InvalidInputError("each configuration needs the same, nonzero number of reports")
    columns, keys = [], []
    for i, triple in enumerate(zip(full, b1, b2)):
        names = [tuple(c.name for c in r.characters) for r in triple]
        if len(set(map(frozenset, names))) != 1:
            raise InvalidInputError(f"story {i}: configurations score different characters: {names}")
        wanted = tuple(character_names) if character_names is not None and len(full) == 1 else names[0]
        if set(wanted) != set(names[0]):
            raise InvalidInputError(f"character names {list(wanted)} do not match the reports {list(names[0])}")
        prefix = "" if len(full) == 1 else triple[0].video_id.rsplit("/", 1)[0] + ":"
        for name in wanted:
            columns.append(prefix + name)
            keys.append((i, name))
    rows = {}
    for cfg, reports in (("full", full), ("no_character_viz", b1), ("no_seed_frame", b2)):
        rows[cfg] = tuple(getattr(reports[i].character(name), metric) for i, name in keys)
    return AblationTable(metric, tuple(columns), rows)


# -- bias gap ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BiasReport:
    group_a: str
    group_b: str
    size_a: int
    size_b: int
    delta_subject: float
    delta_world: float
    delta_dynamic: float
    tier_deltas: dict = field(default_factory=dict)  # tier -> {"delta_subject", "delta_world", "size_a", "size_b"}

    def to_dict(self) -> dict:
        return {
            "group_a": self.group_a,
            "group_b": self.group_b,
            "size_a": self.size_a,
            "size_b": self.size_b,
            "delta_subject": self.delta_subject,
            "delta_world": self.delta_world,
            "delta_dynamic": self.delta_dynamic,
            "tiers": [{"tier": t, **self.tier_deltas[t]} for t in TIERS if t in self.tier_deltas],
        }


def _split(corpus: Sequence[CorpusEntry], tag_a: str, tag_b: str):
    if tag_a == tag_b:
        raise InvalidInputError("the two groups need different tags")
    ids = [e.video_id for e in corpus]
    if len(set(ids)) != len(ids):
        raise InvalidInputError("video ids must be unique within a corpus")
    a = [e for e in corpus if tag_a in e.tags]
    b = [e for e in corpus if tag_b in e.tags]
    both = sorted({e.video_id for e in a} & {e.video_id for e in b})
    if both:
        raise InvalidInputError(f"entries carry both tags: {both}")
    if not a or not b:
        missing = tag_a if not a else tag_b
        raise InvalidInputError(f"no corpus entry is tagged {missing!r}")
    return a, b


def _metric(entries, name):
    values = [getattr(e.report, name) for e in entries]
    missing = [e.video_id for e, v in zip(entries, values) if v is None]
    if missing:
        raise InvalidInputError(f"{name} missing for {missing}")
    return _mean(values)


def bias_gap(corpus: Sequence[CorpusEntry], tag_a: str, tag_b: str) -> BiasReport:
    """Mean differences (group b minus group a), overall and per motion tier."""
    a, b = _split(corpus, tag_a, tag_b)
    tiers = {}
    for tier in TIERS:
        ta = [e for e in a if e.report.motion_tier == tier]
        tb = [e for e in b if e.report.motion_tier == tier]
        entry = {"size_a": len(ta), "size_b": len(tb), "delta_subject": None, "delta_world": None}
        if ta and tb:
            entry["delta_subject"] = _metric(tb, "s_subject") - _metric(ta, "s_subject")
            entry["delta_world"] = _metric(tb, "s_world") - _metric(ta, "s_world")
        if ta or tb:
            tiers[tier] = entry
    return BiasReport(
        group_a=tag_a,
        group_b=tag_b,
        size_a=len(a),
        size_b=len(b),
        delta_subject=_metric(b, "s_subject") - _metric(a, "s_subject"),
        delta_world=_metric(b, "s_world") - _metric(a, "s_world"),
        delta_dynamic=_metric(b, "dynamic_degree") - _metric(a, "dynamic_degree"),
        tier_deltas=tiers,
    )


# -- stratified summary ----------------------------------------------------------------------

@dataclass(frozen=True)
class TierRow:
    tier: str
    size_a: int
    size_b: int
    subject_a: float | None
    subject_b: float | None
    world_a: float | None
    world_b: float | None

    @property
    def flagged(self) -> bool:
        """True when either group has no video in this tier."""
        return self.size_a == 0 or self.size_b == 0

    @property
    def subject_gap(self) -> float | None:
        return None if self.flagged else self.subject_b - self.subject_a

    @property
    def world_gap(self) -> float | None:
        return None if self.flagged else self.world_b - self.world_a

    def to_dict(self) -> dict:
        return {
            "tier": self.tier,
            "size_a": self.size_a,
            "size_b": self.size_b,
            "subject_a": self.subject_a,
            "subject_b": self.subject_b,
            "world_a": self.world_a,
            "world_b": self.world_b,
            "subject_gap": self.subject_gap,
            "world_gap": self.world_gap,
            "flagged": self.flagged,
        }


@dataclass(frozen=True)
class StratifiedSummary:
    group_a: str
    group_b: str
    rows: tuple

    def row(self, tier: str) -> TierRow:
        return next(r for r in self.rows if r.tier == tier)

    def to_dict(self) -> dict:
        return {"group_a": self.group_a, "group_b": self.group_b, "tiers": [r.to_dict() for r in self.rows]}


def stratified_summary(corpus: Sequence[CorpusEntry], tag_a: str, tag_b: str) -> StratifiedSummary:
    """Per-tier group means and gaps; tiers missing a group are flagged, not dropped."""
    untiered = [e.video_id for e in corpus if e.report.motion_tier is None]
    if not corpus or untiered:
        raise InvalidInputError(f"motion tiers not assigned for {untiered or 'an empty corpus'}")
    a, b = _split(corpus, tag_a, tag_b)
    rows = []
    for tier in TIERS:
        ta = [e for e in a if e.report.motion_tier == tier]
        tb = [e for e in b if e.report.motion_tier == tier]
        rows.append(
            TierRow(
                tier,
                len(ta),
                len(tb),
                _metric(ta, "s_subject") if ta else None,
                _metric(tb, "s_subject") if tb else None,
                _metric(ta, "s_world") if ta else None,
                _metric(tb, "s_world") if tb else None,
            )
        )
    return StratifiedSummary(tag_a, tag_b, tuple(rows))


def assign_tiers(corpus: Sequence[CorpusEntry]) -> list[CorpusEntry]:
    """Return the corpus with each report's motion tier set from its dynamic degree."""
    missing = [e.video_id for e in corpus if e.report.dynamic_degree is None]
    if missing:
        raise InvalidInputError(f"dynamic degree missing for {missing}")
    tiers = classify_motion_tiers((e.video_id, e.report.dynamic_degree) for e in corpus)
    return [replace(e, report=e.report.with_tier(tiers[e.video_id])) for e in corpus]


# -- corpus manifests ------------------------------------------------------------------------

def load_corpus(manifest_path, report_name: str = "report.json") -> list[CorpusEntry]:
    """Read ``[{video_id, run_dir, tags}]`` and each run's metric report.

    Relative run directories resolve against the manifest's folder.
    """
    manifest_path = Path(manifest_path)
    try:
        items = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InvalidInputError(f"cannot read corpus manifest {manifest_path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise InvalidInputError(f"corpus manifest {manifest_path} is not JSON: {exc}") from None
    if not isinstance(items, list):
        raise InvalidInputError("corpus manifest must be a JSON array")
    corpus = []
    for item in items:
        try:
            run_dir = Path(item["run_dir"])
            if not run_dir.is_absolute():
                run_dir = manifest_path.parent / run_dir
            report = ConsistencyReport.from_dict(json.loads((run_dir / report_name).read_text(encoding="utf-8")))
            corpus.append(CorpusEntry(str(item["video_id"]), str(item["run_dir"]), frozenset(item["tags"]), report))
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"bad corpus manifest entry {item!r}: {exc}") from None
        except OSError as exc:
            raise InvalidInputError(f"no metric report for {item.get('video_id')!r}: {exc.strerror or exc}") from None
    return corpus


# -- emission ------------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return f"{x:.4f}"
    return str(x)


def _md_table(header: Sequence[str], rows: Iterable[Sequence]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(_fmt(c) for c in row) + " |" for row in rows]
    return lines


def emit_report(reports: Sequence[ConsistencyReport], format: str = "json", *, ablation: AblationTable | None = None,
                bias: BiasReport | None = None, stratified: StratifiedSummary | None = None) -> str:
    """Render reports (plus optional tables) as deterministic JSON or markdown.

    Videos are ordered by id, tiers Low/Medium/High, configurations full,
    Baseline 1, Baseline 2.
    """
    if format not in FORMATS:
        raise InvalidInputError(f"format must be one of {FORMATS}, got {format!r}")
    reports = sorted(reports, key=lambda r: r.video_id)
    if not reports:
        raise InvalidInputError("nothing to report")
    if format == "json":
        doc = {"videos": [r.to_dict() for r in reports]}
        if ablation is not None:
            doc["ablation"] = ablation.to_dict()
        if bias is not None:
            doc["bias"] = bias.to_dict()
        if stratified is not None:
            doc["stratified"] = stratified.to_dict()
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"

    out = ["# Metric report", "", "## Videos", ""]
    out += _md_table(
        ["video_id", "character", "computational", "judge"],
        [(r.video_id, c.name, c.computational, c.judge) for r in reports for c in r.characters],
    )
    out += [""]
    out += _md_table(
        ["video_id", "s_subject", "s_world", "dynamic_degree", "motion_tier", "script_adherence",
         "prompt_adherence", "warnings"],
        [(r.video_id, r.s_subject, r.s_world, r.dynamic_degree, r.motion_tier, r.script_adherence,
          r.prompt_adherence, len(r.warnings)) for r in reports],
    )
    if ablation is not None:
        out += ["", f"## Ablation ({ablation.metric} consistency)", ""]
        out += _md_table(
            ["configuration", *ablation.columns, "average"],
            [(CONFIG_LABELS.get(cfg, cfg), *vals, ablation.average(cfg)) for cfg, vals in ablation.rows.items()],
        )
    if bias is not None:
        out += ["", f"## Group gap ({bias.group_b} minus {bias.group_a})", ""]
        out += _md_table(
            ["scope", f"n {bias.group_a}", f"n {bias.group_b}", "delta_subject", "delta_world", "delta_dynamic"],
            [("all", bias.size_a, bias.size_b, bias.delta_subject, bias.delta_world, bias.delta_dynamic)]
            + [(t, d["size_a"], d["size_b"], d["delta_subject"], d["delta_world"], None)
               for t, d in ((t, bias.tier_deltas[t]) for t in TIERS if t in bias.tier_deltas)],
        )
    if stratified is not None:
        out += ["", f"## Stratified by motion tier ({stratified.group_b} minus {stratified.group_a})", ""]
        out += _md_table(
            ["tier", f"n {stratified.group_a}", f"n {stratified.group_b}", "subject_a", "subject_b", "subject_gap",
             "world_a", "world_b", "world_gap", "flagged"],
            [(r.tier, r.size_a, r.size_b, r.subject_a, r.subject_b, r.subject_gap, r.world_a, r.world_b,
              r.world_gap, r.flagged) for r in stratified.rows],
        )
    return "\n".join(out) + "\n"


__all__ = [
    "AblationTable",
    "BiasReport",
    "CorpusEntry",
    "StratifiedSummary",
    "TierRow",
    "ablation_table",
    "assign_tiers",
    "bias_gap",
    "emit_report",
    "load_corpus",
    "stratified_summary",
]
