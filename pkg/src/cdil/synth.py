"""Synthetic composite class-domain session streams.

Each class has a fixed base mean; each session adds a rigid translation (the
domain gap between datasets) and each subject a smaller personal offset, so
later sessions revisit known classes under a shifted distribution while also
introducing new ones. Subject offsets are what make subject-level splits
strictly harder than instance-level splits: held-out subjects carry offsets
the learner never saw.

The default four-session label structure mirrors the benchmark's real
dataset sequence (five initial classes, overlapping five/six/seven-class
follow-ups, nine classes cumulative). The separation/shift magnitudes are
absolute norms calibrated against the default unit noise; `noise_sigma`
scales only the additive noise, so a zero-sigma stream collapses onto the
exact class+session(+subject) means.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import ConfigurationError, LabelRegistry, Sample, SessionDataset, SessionSequence
from .rng import substream

DEFAULT_SESSION_LABELS: tuple[tuple[str, ...], ...] = (
    ("disgust", "happiness", "others", "repression", "surprise"),
    ("anger", "contempt", "happiness", "others", "surprise"),
    ("disgust", "fear", "happiness", "others", "sad", "surprise"),
    ("anger", "disgust", "fear", "happiness", "others", "sad", "surprise"),
)


@dataclass(frozen=True)
class SynthSpec:
    session_label_sets: tuple[tuple[str, ...], ...] = DEFAULT_SESSION_LABELS
    feature_dim: int = 64
    samples_per_class_per_session: int = 40
    subjects_per_session: int = 15
    class_separation: float = 4.0
    domain_shift: float = 2.0
    subject_shift: float = 0.5
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.session_label_sets:
            raise ConfigurationError("need at least one session label set")
        if len(self.session_label_sets[0]) < 2:
            raise ConfigurationError("session 1 needs at least 2 classes")
        for t, labels in enumerate(self.session_label_sets, start=1):
            if not labels:
                raise ConfigurationError(f"session {t} has an empty label set")
            if len(set(labels)) != len(labels):
                raise ConfigurationError(f"session {t} repeats a label name")
        if self.feature_dim < 1:
            raise ConfigurationError("feature_dim must be >= 1")
        if self.samples_per_class_per_session < 1:
            raise ConfigurationError("samples_per_class_per_session must be >= 1")
        if self.subjects_per_session < 1:
            raise ConfigurationError("subjects_per_session must be >= 1")
        for name in ("class_separation", "domain_shift", "subject_shift", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_label_sets": [list(labels) for labels in self.session_label_sets],
            "feature_dim": self.feature_dim,
            "samples_per_class_per_session": self.samples_per_class_per_session,
            "subjects_per_session": self.subjects_per_session,
            "class_separation": self.class_separation,
            "domain_shift": self.domain_shift,
            "subject_shift": self.subject_shift,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SynthSpec":
        kwargs = dict(data)
        if "session_label_sets" in kwargs:
            kwargs["session_label_sets"] = tuple(
                tuple(labels) for labels in kwargs["session_label_sets"])
        return cls(**kwargs)


def _direction(rng, dim: int, norm: float) -> np.ndarray:
    """Random vector with the given norm (zero norm gives the zero vector)."""
    if norm == 0.0:
        return np.zeros(dim)
    raw = rng.normals(dim)
    length = np.linalg.norm(raw)
    while length == 0.0:
        raw = rng.normals(dim)
        length = np.linalg.norm(raw)
    return raw * (norm / length)


def generate_stream(spec: SynthSpec) -> SessionSequence:
    """Deterministically generate the session stream described by `spec`."""
    registry = LabelRegistry()
    for labels in spec.session_label_sets:
        for name in labels:
            registry.register(name)

    class_means = {
        name: _direction(substream(spec.seed, "class-mean", name),
                         spec.feature_dim, spec.class_separation)
        for name in registry.names
    }

    sessions = []
    for t, labels in enumerate(spec.session_label_sets, start=1):
        if spec.subjects_per_session < len(labels):
            raise ConfigurationError(
                f"session {t}: {spec.subjects_per_session} subjects cannot cover "
                f"{len(labels)} classes")
        session_shift = _direction(substream(spec.seed, "session-shift", t),
                                   spec.feature_dim, spec.domain_shift)
        subject_ids = [f"s{t}:p{i:02d}" for i in range(spec.subjects_per_session)]
        subject_shifts = {
            sid: _direction(substream(spec.seed, "subject-shift", sid),
                            spec.feature_dim, spec.subject_shift)
            for sid in subject_ids
        }
        deal_order = list(subject_ids)
        substream(spec.seed, "subject-deal", t).shuffle(deal_order)
        class_subjects = {name: deal_order[j::len(labels)] for j, name in enumerate(labels)}

        noise_rng = substream(spec.seed, "noise", t)
        samples = []
        counter = 0
        for name in labels:
            mean = class_means[name] + session_shift
            label = registry.index_of(name)
            owners = class_subjects[name]
            for m in range(spec.samples_per_class_per_session):
                subject = owners[m % len(owners)]
                noise = spec.noise_sigma * noise_rng.normals(spec.feature_dim)
                x = mean + subject_shifts[subject] + noise
                samples.append(Sample(sample_id=f"s{t}-{counter:04d}",
                                      subject_id=subject, label=label, features=x))
                counter += 1
        sessions.append(SessionDataset.build(t, samples))

    return SessionSequence.build(sessions, registry, spec.feature_dim)
