"""Domain types shared by every other module: samples, sessions, label registry.

A benchmark run sees an ordered stream of session datasets. Each session
carries its own label set; the label space the model must cover at session t
is the union of all label sets seen so far. Class indices are global and
assigned by first appearance in session order, so the space only ever grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import AbstractSet, Iterable, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Invalid configuration (fold counts, label sets, spec fields)."""


class ProtocolError(RuntimeError):
    """The evaluation protocol's preconditions were violated at runtime."""


class NumericalError(RuntimeError):
    """A numeric step produced non-finite or out-of-tolerance results."""


class DataLoadError(ValueError):
    """A manifest or feature file failed to load; names file/line/field."""

    def __init__(self, message: str, *, path=None, line: int | None = None,
                 field: str | None = None):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = ": ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class LabelRegistry:
    """Class names mapped to contiguous 0-based indices, in first-appearance order."""

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        for name in names:
            self.register(name)

    def register(self, name: str) -> int:
        """Return the index for `name`, assigning the next index if new."""
        existing = self._index.get(name)
        if existing is not None:
            return existing
        index = len(self._names)
        self._names.append(name)
        self._index[name] = index
        return index

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown class name {name!r}") from None

    def name_of(self, index: int) -> str:
        if not 0 <= index < len(self._names):
            raise IndexError(f"class index {index} out of range 0..{len(self._names) - 1}")
        return self._names[index]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._index


@dataclass(frozen=True, eq=False)
class Sample:
    """One labeled feature vector with its subject identity."""

    sample_id: str
    subject_id: str
    label: int
    features: np.ndarray


@dataclass(frozen=True, eq=False)
class SessionDataset:
    """All samples of one session, with its label set and subject set."""

    session_index: int
    samples: tuple[Sample, ...]
    label_set: frozenset[int]
    subjects: frozenset[str]

    @classmethod
    def build(cls, session_index: int, samples: Sequence[Sample],
              label_set: AbstractSet[int] | None = None) -> "SessionDataset":
        """Validate and construct; `label_set` defaults to the realized labels.

        A declared label_set may be a superset of the realized labels (a class
        can legitimately end up with zero samples after filtering), never a
        subset.
        """
        if len(samples) < 1:
            raise ConfigurationError(f"session {session_index} has no samples")
        if session_index < 1:
            raise ConfigurationError(f"session index must be >= 1, got {session_index}")
        realized = frozenset(s.label for s in samples)
        if label_set is None:
            label_set = realized
        elif not realized <= frozenset(label_set):
            extra = sorted(realized - frozenset(label_set))
            raise ConfigurationError(
                f"session {session_index}: sample labels {extra} not in declared label set")
        seen_ids: set[str] = set()
        for s in samples:
            if s.sample_id in seen_ids:
                raise ConfigurationError(
                    f"session {session_index}: duplicate sample_id {s.sample_id!r}")
            seen_ids.add(s.sample_id)
        subjects = frozenset(s.subject_id for s in samples)
        return cls(session_index=session_index, samples=tuple(samples),
                   label_set=frozenset(label_set), subjects=subjects)

    @property
    def size(self) -> int:
        return len(self.samples)

    @cached_property
    def by_id(self) -> dict[str, Sample]:
        return {s.sample_id: s for s in self.samples}


@dataclass(frozen=True, eq=False)
class SessionSequence:
    """The ordered session stream plus the global label registry."""

    sessions: tuple[SessionDataset, ...]
    registry: LabelRegistry
    feature_dim: int

    @classmethod
    def build(cls, sessions: Sequence[SessionDataset], registry: LabelRegistry,
              feature_dim: int) -> "SessionSequence":
        if not sessions:
            raise ConfigurationError("a sequence needs at least one session")
        for expected, session in enumerate(sessions, start=1):
            if session.session_index != expected:
                raise ConfigurationError(
                    f"session indices must run 1..n in order; "
                    f"position {expected} holds index {session.session_index}")
            for s in session.samples:
                if s.features.shape != (feature_dim,):
                    raise ValueError(
                        f"sample {s.sample_id!r} has feature shape {s.features.shape}, "
                        f"expected ({feature_dim},)")
                if not 0 <= s.label < len(registry):
                    raise ConfigurationError(
                        f"sample {s.sample_id!r} carries unregistered label {s.label}")
        return cls(sessions=tuple(sessions), registry=registry, feature_dim=feature_dim)

    @property
    def n(self) -> int:
        return len(self.sessions)

    def _check_session_index(self, t: int) -> None:
        if not 1 <= t <= self.n:
            raise IndexError(f"session index {t} out of range 1..{self.n}")

    def session(self, t: int) -> SessionDataset:
        self._check_session_index(t)
        return self.sessions[t - 1]

    def cumulative_label_space(self, t: int) -> frozenset[int]:
        """Union of the label sets of sessions 1..t."""
        self._check_session_index(t)
        space: frozenset[int] = frozenset()
        for session in self.sessions[:t]:
            space |= session.label_set
        return space

    def sessions_of_class(self, c: int) -> frozenset[int]:
        """The set of session indices whose label set contains class c."""
        hits = frozenset(s.session_index for s in self.sessions if c in s.label_set)
        if not hits:
            raise KeyError(f"class index {c} does not appear in any session")
        return hits
