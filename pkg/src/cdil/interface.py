"""Data ingestion and results emission.

Interchange formats, chosen to be bit-exactly documentable:

* Manifest — a JSON file with `name`, `feature_dim`, optional
  `shared_subjects` (default false), and an ordered `sessions` list of
  `{name, year?, label_names, features_path, min_samples_per_class?}`.
  Session order is the incremental order; `features_path` is resolved
  relative to the manifest file.

* Feature file — UTF-8 CSV with header `sample_id,subject_id,label,f0,...,
  f{d-1}`, `.` decimal separator, no thousands separators. Floats are
  written with `repr`, so a write/load round-trip reproduces values exactly.

* Report — `report.json` (full-precision machine output plus the config
  echo), `report.txt` (a one-row human table: per-session means, average
  and final accuracy in percent to two decimals), and `trials/trial_N.json`
  per trial for re-aggregation.

Unless `shared_subjects` is true, raw subject ids are namespaced per session
(`s{t}:{raw}`): sessions come from distinct datasets, so identical raw ids
in different sessions are different people by default.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (DataLoadError, LabelRegistry, ProtocolError, Sample,
                   SessionDataset, SessionSequence)
from .metrics import ExperimentReport, TrialResult, aggregate

logger = logging.getLogger(__name__)

FEATURE_HEADER_FIXED = ("sample_id", "subject_id", "label")


@dataclass(frozen=True)
class SessionEntry:
    name: str
    label_names: tuple[str, ...]
    features_path: Path
    year: int | None = None
    min_samples_per_class: int = 0


@dataclass(frozen=True)
class Manifest:
    name: str
    feature_dim: int
    sessions: tuple[SessionEntry, ...]
    shared_subjects: bool = False
    path: Path | None = None

    def registry(self) -> LabelRegistry:
        """Label registry in first-appearance order across the session list."""
        registry = LabelRegistry()
        for entry in self.sessions:
            for name in entry.label_names:
                registry.register(name)
        return registry


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise DataLoadError("manifest file not found", path=path) from None
    except json.JSONDecodeError as exc:
        raise DataLoadError(f"not valid JSON: {exc}", path=path, line=exc.lineno) from None

    for key in ("name", "feature_dim", "sessions"):
        if key not in data:
            raise DataLoadError("missing required field", path=path, field=key)
    feature_dim = data["feature_dim"]
    if not isinstance(feature_dim, int) or feature_dim < 1:
        raise DataLoadError("must be a positive integer", path=path, field="feature_dim")
    if not isinstance(data["sessions"], list) or not data["sessions"]:
        raise DataLoadError("must be a non-empty list", path=path, field="sessions")

    entries = []
    seen_names: set[str] = set()
    for i, raw in enumerate(data["sessions"], start=1):
        where = f"sessions[{i}]"
        for key in ("name", "label_names", "features_path"):
            if key not in raw:
                raise DataLoadError("missing required field", path=path,
                                    field=f"{where}.{key}")
        name = raw["name"]
        if name in seen_names:
            raise DataLoadError(f"duplicate session name {name!r}", path=path,
                                field=f"{where}.name")
        seen_names.add(name)
        label_names = raw["label_names"]
        if not isinstance(label_names, list) or not label_names:
            raise DataLoadError("must be a non-empty list", path=path,
                                field=f"{where}.label_names")
        if len(set(label_names)) != len(label_names):
            raise DataLoadError("repeats a label name", path=path,
                                field=f"{where}.label_names")
        features_path = (path.parent / raw["features_path"]).resolve()
        if not features_path.is_file():
            raise DataLoadError(f"feature file {features_path} is not readable",
                                path=path, field=f"{where}.features_path")
        entries.append(SessionEntry(
            name=name,
            label_names=tuple(label_names),
            features_path=features_path,
            year=raw.get("year"),
            min_samples_per_class=int(raw.get("min_samples_per_class", 0)),
        ))
    return Manifest(name=data["name"], feature_dim=feature_dim,
                    sessions=tuple(entries),
                    shared_subjects=bool(data.get("shared_subjects", False)),
                    path=path)


def load_session_features(entry: SessionEntry, registry: LabelRegistry,
                          feature_dim: int, session_index: int,
                          shared_subjects: bool = False) -> SessionDataset:
    """Parse one session's feature CSV into a SessionDataset.

    Classes with fewer than `entry.min_samples_per_class` samples are dropped
    from both the samples and the session's label set, with a logged notice.
    """
    path = entry.features_path
    expected_header = list(FEATURE_HEADER_FIXED) + [f"f{i}" for i in range(feature_dim)]
    declared = set(entry.label_names)
    rows: list[tuple[str, str, str, np.ndarray]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataLoadError("empty feature file", path=path, line=1)
        if header != expected_header:
            if len(header) != len(expected_header):
                raise DataLoadError(
                    f"header has {len(header)} columns, expected {len(expected_header)} "
                    f"for feature_dim {feature_dim}", path=path, line=1, field="header")
            raise DataLoadError("header does not match the documented format",
                                path=path, line=1, field="header")
        seen_ids: set[str] = set()
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(expected_header):
                raise DataLoadError(f"expected {len(expected_header)} columns, got {len(row)}",
                                    path=path, line=line_no)
            sample_id, subject_id, label_name = row[0], row[1], row[2]
            if sample_id in seen_ids:
                raise DataLoadError(f"duplicate sample_id {sample_id!r}",
                                    path=path, line=line_no, field="sample_id")
            seen_ids.add(sample_id)
            if label_name not in declared:
                raise DataLoadError(
                    f"label {label_name!r} is not declared for session {entry.name!r}",
                    path=path, line=line_no, field="label")
            try:
                features = np.array([float(v) for v in row[3:]])
            except ValueError:
                raise DataLoadError("non-numeric feature value",
                                    path=path, line=line_no, field="features") from None
            rows.append((sample_id, subject_id, label_name, features))

    if not rows:
        raise DataLoadError("feature file has no data rows", path=path, line=2)

    counts = Counter(label_name for _, _, label_name, _ in rows)
    kept_names = [name for name in entry.label_names
                  if counts.get(name, 0) >= entry.min_samples_per_class]
    dropped = [name for name in entry.label_names if name not in kept_names]
    for name in dropped:
        logger.warning("session %s: class %r dropped (%d samples < min %d)",
                       entry.name, name, counts.get(name, 0),
                       entry.min_samples_per_class)
    kept = set(kept_names)
    samples = []
    for sample_id, subject_id, label_name, features in rows:
        if label_name not in kept:
            continue
        if not shared_subjects:
            subject_id = f"s{session_index}:{subject_id}"
        samples.append(Sample(sample_id=sample_id, subject_id=subject_id,
                              label=registry.index_of(label_name), features=features))
    if not samples:
        raise DataLoadError("no samples remain after the minimum-count filter", path=path)
    label_set = frozenset(registry.index_of(name) for name in kept_names)
    return SessionDataset.build(session_index, samples, label_set=label_set)


def load_sequence(manifest: Manifest | str | Path) -> SessionSequence:
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    registry = manifest.registry()
    sessions = [
        load_session_features(entry, registry, manifest.feature_dim, t,
                              manifest.shared_subjects)
        for t, entry in enumerate(manifest.sessions, start=1)
    ]
    return SessionSequence.build(sessions, registry, manifest.feature_dim)


def write_stream(seq: SessionSequence, out_dir: str | Path,
                 name: str = "synthetic") -> Path:
    """Write a sequence as manifest + per-session CSVs; returns the manifest path.

    Subject ids are emitted as-is and the manifest sets `shared_subjects`, so
    loading reproduces the sequence exactly.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    session_entries = []
    for session in seq.sessions:
        t = session.session_index
        csv_name = f"session_{t}.csv"
        with open(out_dir / csv_name, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(FEATURE_HEADER_FIXED)
                            + [f"f{i}" for i in range(seq.feature_dim)])
            for s in session.samples:
                writer.writerow([s.sample_id, s.subject_id, seq.registry.name_of(s.label)]
                                + [repr(float(v)) for v in s.features])
        # class-index order preserves the registry's first-appearance order
        # across a write -> load round trip
        label_names = [seq.registry.name_of(c) for c in sorted(session.label_set)]
        session_entries.append({
            "name": f"session_{t}",
            "label_names": label_names,
            "features_path": csv_name,
        })
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump({
            "name": name,
            "feature_dim": seq.feature_dim,
            "shared_subjects": True,
            "sessions": session_entries,
        }, fh, indent=2)
        fh.write("\n")
    return manifest_path


def format_report_table(report: ExperimentReport) -> str:
    """Human table: per-session mean accuracies, then Ā and Ã, in percent."""
    n = report.n_sessions
    learner = report.config.get("learner", {}).get("variant", "learner")
    protocol = report.config.get("protocol", "?")
    headers = ["Method"] + [f"Session {i}" for i in range(1, n + 1)] + ["Ā", "Ã"]
    values = ([f"{learner}/{protocol}"]
              + [f"{100 * a:.2f}" for a in report.mean_per_session]
              + [f"{100 * report.mean_average:.2f}", f"{100 * report.mean_final:.2f}"])
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    header_line = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    value_line = "  ".join(v.rjust(w) for v, w in zip(values, widths))
    return header_line + "\n" + value_line + "\n"


def write_report(report: ExperimentReport, out_dir: str | Path) -> Path:
    """Emit report.json, report.txt, and per-trial JSONs; returns the JSON path."""
    out_dir = Path(out_dir)
    trials_dir = out_dir / "trials"
    trials_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(format_report_table(report))
    for trial in report.trials:
        with open(trials_dir / f"trial_{trial.trial_index}.json", "w",
                  encoding="utf-8") as fh:
            json.dump(trial.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report_path


def load_report(path: str | Path) -> ExperimentReport:
    with open(path, encoding="utf-8") as fh:
        return ExperimentReport.from_dict(json.load(fh))


def reaggregate_trials(run_dir: str | Path) -> ExperimentReport:
    """Rebuild an aggregate report from `trials/trial_*.json` under `run_dir`."""
    run_dir = Path(run_dir)
    trials_dir = run_dir / "trials"
    trial_paths = sorted(trials_dir.glob("trial_*.json"))
    if not trial_paths:
        raise ProtocolError(f"no trial files found under {trials_dir}")
    trials = []
    for p in trial_paths:
        with open(p, encoding="utf-8") as fh:
            trials.append(TrialResult.from_dict(json.load(fh)))
    config: dict = {}
    report_path = run_dir / "report.json"
    if report_path.is_file():
        config = load_report(report_path).config
    return aggregate(trials, config=config)
