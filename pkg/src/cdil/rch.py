"""Remappable classification head: per-session head groups summed per class.

Every session contributes an independent head group with one weight row per
class present in that session. Prediction remaps the groups into a single
matrix by summing, per class, the rows of all sessions that contain the
class, then applies a softmax over the dot products with the feature vector.
A class that recurs in several sessions therefore keeps one preserved row
per session, and the sum is its effective classifier.

Heads carry no bias term; callers that want one append a constant-1 feature
instead, which keeps the per-class summation semantics uniform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import AbstractSet, Mapping

import numpy as np

from .core import ConfigurationError, LabelRegistry
from .rng import Xoshiro256StarStar


@dataclass(frozen=True)
class InitSpec:
    """How new head rows are initialized: exact zeros or small Gaussian."""

    kind: str = "zeros"  # "zeros" | "gaussian"
    std: float = 0.01

    def __post_init__(self):
        if self.kind not in ("zeros", "gaussian"):
            raise ConfigurationError(f"unknown head init {self.kind!r}")
        if self.std <= 0:
            raise ConfigurationError("head init std must be positive")


class HeadGroup:
    """One session's head rows, keyed by class index."""

    def __init__(self, session_index: int, rows: Mapping[int, np.ndarray]):
        self.session_index = session_index
        self._rows = {c: np.asarray(row, dtype=np.float64) for c, row in rows.items()}

    @property
    def classes(self) -> frozenset[int]:
        return frozenset(self._rows)

    def row(self, c: int) -> np.ndarray:
        return self._rows[c]

    def items(self):
        return self._rows.items()


class RCHState:
    """All head groups of one learner, with cached remapping.

    Head rows are written only through `set_rows` / `add_to_rows`, which
    invalidate the cached remapped matrix. One RCHState belongs to exactly
    one trial; reads need no synchronization once training is done.
    """

    def __init__(self, feature_dim: int):
        if feature_dim < 1:
            raise ConfigurationError(f"feature dimension must be >= 1, got {feature_dim}")
        self.feature_dim = feature_dim
        self.head_groups: list[HeadGroup] = []
        self._class_sessions: dict[int, list[int]] = {}
        self._cache: tuple[tuple[int, ...], np.ndarray] | None = None

    @property
    def known_classes(self) -> frozenset[int]:
        return frozenset(self._class_sessions)

    @property
    def class_sessions(self) -> dict[int, tuple[int, ...]]:
        return {c: tuple(ts) for c, ts in self._class_sessions.items()}

    @property
    def class_order(self) -> tuple[int, ...]:
        """Known classes sorted by index; the row order of `remap`."""
        return tuple(sorted(self._class_sessions))

    def add_session(self, label_set: AbstractSet[int], init: InitSpec = InitSpec(),
                    rng: Xoshiro256StarStar | None = None) -> HeadGroup:
        """Append the next session's head group, one row per class in `label_set`."""
        if not label_set:
            raise ConfigurationError("a session's label set must be non-empty")
        t = len(self.head_groups) + 1
        rows: dict[int, np.ndarray] = {}
        for c in sorted(label_set):
            if init.kind == "gaussian":
                if rng is None:
                    raise ConfigurationError("gaussian head init needs an rng")
                rows[c] = rng.normals(self.feature_dim) * init.std
            else:
                rows[c] = np.zeros(self.feature_dim)
        group = HeadGroup(t, rows)
        self.head_groups.append(group)
        for c in sorted(label_set):
            self._class_sessions.setdefault(c, []).append(t)
        self._cache = None
        return group

    def group(self, t: int) -> HeadGroup:
        if not 1 <= t <= len(self.head_groups):
            raise IndexError(f"session index {t} out of range 1..{len(self.head_groups)}")
        return self.head_groups[t - 1]

    def _write(self, t: int, updates: Mapping[int, np.ndarray], *, add: bool) -> None:
        group = self.group(t)
        for c, value in updates.items():
            if c not in group.classes:
                raise KeyError(f"class {c} has no row in session {t}'s head group")
            value = np.asarray(value, dtype=np.float64)
            if value.shape != (self.feature_dim,):
                raise ValueError(
                    f"row for class {c} has shape {value.shape}, "
                    f"expected ({self.feature_dim},)")
            group._rows[c] = group._rows[c] + value if add else value.copy()
        self._cache = None

    def set_rows(self, t: int, updates: Mapping[int, np.ndarray]) -> None:
        """Overwrite rows of session t's group; keys must already exist."""
        self._write(t, updates, add=False)

    def add_to_rows(self, t: int, deltas: Mapping[int, np.ndarray]) -> None:
        """Add deltas to rows of session t's group (gradient steps)."""
        self._write(t, deltas, add=True)

    def remap(self) -> np.ndarray:
        """Remapped weight matrix: row i is the summed row of class_order[i].

        Summation runs in session order starting from zeros, so appending an
        all-zero group leaves existing rows bitwise unchanged.
        """
        if not self.head_groups:
            raise ConfigurationError("remap needs at least one head group")
        if self._cache is not None:
            return self._cache[1]
        order = self.class_order
        position = {c: i for i, c in enumerate(order)}
        matrix = np.zeros((len(order), self.feature_dim))
        for group in self.head_groups:
            for c in sorted(group.classes):
                matrix[position[c]] += group.row(c)
        self._cache = (order, matrix)
        return matrix

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.feature_dim,):
            raise ValueError(f"feature vector has shape {x.shape}, "
                             f"expected ({self.feature_dim},)")
        return self.remap() @ x

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Softmax class probabilities aligned with `class_order`."""
        return _softmax(self.logits(x))

    def predict(self, x: np.ndarray) -> int:
        """Most probable class index; ties break toward the lowest index."""
        return self.class_order[int(np.argmax(self.logits(x)))]

    def predict_many(self, features: np.ndarray) -> np.ndarray:
        """Predicted class index per row of `features` (shape (N, d))."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.feature_dim:
            raise ValueError(f"feature matrix has shape {features.shape}, "
                             f"expected (N, {self.feature_dim})")
        scores = features @ self.remap().T
        order = np.asarray(self.class_order)
        return order[np.argmax(scores, axis=1)]

    def to_csv(self, path: str | Path, registry: LabelRegistry | None = None) -> None:
        """Dump all head rows as `session,class,w0..w{d-1}` for inspection/resume."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["session", "class"] + [f"w{i}" for i in range(self.feature_dim)])
            for group in self.head_groups:
                for c in sorted(group.classes):
                    name = registry.name_of(c) if registry is not None else str(c)
                    writer.writerow([group.session_index, name]
                                    + [repr(float(v)) for v in group.row(c)])

    @classmethod
    def from_csv(cls, path: str | Path, feature_dim: int,
                 registry: LabelRegistry | None = None) -> "RCHState":
        rows_by_session: dict[int, dict[int, np.ndarray]] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)  # header
            for row in reader:
                t = int(row[0])
                c = registry.index_of(row[1]) if registry is not None else int(row[1])
                rows_by_session.setdefault(t, {})[c] = np.array(
                    [float(v) for v in row[2:]])
        state = cls(feature_dim)
        for t in sorted(rows_by_session):
            group_rows = rows_by_session[t]
            state.add_session(frozenset(group_rows))
            state.set_rows(t, group_rows)
        return state


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    exp = np.exp(shifted)
    return exp / np.sum(exp)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax for a (N, C) logit matrix."""
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=1, keepdims=True)
