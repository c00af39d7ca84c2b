"""Per-session fold assignments (subject- or instance-level) and fold binding.

Both partition modes shuffle their units (subjects or samples, taken in
sorted order so assignments depend only on session contents, fold count, and
seed) with the seeded xoshiro256** generator and then deal unit i to fold
(i mod k) + 1. Round-robin dealing keeps fold sizes within one of each other,
the closest realizable reading of equal-size folds when k does not divide
the unit count.

Binding fixes one fold index across all sessions: trial tau tests on fold
tau of every session and trains on the complement, so a k-fold experiment is
exactly k complete incremental runs rather than a cross-session product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import ConfigurationError, SessionDataset
from .rng import Xoshiro256StarStar

SLCV = "slcv"
ILCV = "ilcv"
MODES = (SLCV, ILCV)


@dataclass(frozen=True)
class FoldAssignment:
    """Map from each sample of one session to its fold index in 1..k."""

    session_index: int
    k: int
    mode: str
    seed: int
    fold_of: Mapping[str, int]

    def fold_ids(self, tau: int) -> frozenset[str]:
        if not 1 <= tau <= self.k:
            raise IndexError(f"fold index {tau} out of range 1..{self.k}")
        return frozenset(sid for sid, fold in self.fold_of.items() if fold == tau)


@dataclass(frozen=True)
class SessionSplit:
    session_index: int
    train_ids: frozenset[str]
    test_ids: frozenset[str]


@dataclass(frozen=True)
class TrialPlan:
    """The bound train/test splits of one trial, one split per session."""

    trial_index: int
    splits: tuple[SessionSplit, ...]

    def split(self, t: int) -> SessionSplit:
        if not 1 <= t <= len(self.splits):
            raise IndexError(f"session index {t} out of range 1..{len(self.splits)}")
        return self.splits[t - 1]


def _deal(units: Sequence[str], k: int, seed: int) -> dict[str, int]:
    shuffled = sorted(units)
    Xoshiro256StarStar(seed).shuffle(shuffled)
    return {unit: (i % k) + 1 for i, unit in enumerate(shuffled)}


def slcv_partition(session: SessionDataset, k: int, seed: int) -> FoldAssignment:
    """Subject-level folds: all samples of a subject share one fold."""
    if k < 2:
        raise ConfigurationError(f"fold count must be >= 2, got {k}")
    n_subjects = len(session.subjects)
    if n_subjects < k:
        raise ConfigurationError(
            f"session {session.session_index}: fewer subjects than folds "
            f"({n_subjects} < {k})")
    subject_fold = _deal(sorted(session.subjects), k, seed)
    fold_of = {s.sample_id: subject_fold[s.subject_id] for s in session.samples}
    return FoldAssignment(session_index=session.session_index, k=k, mode=SLCV,
                          seed=seed, fold_of=fold_of)


def ilcv_partition(session: SessionDataset, k: int, seed: int) -> FoldAssignment:
    """Instance-level folds: samples are dealt independently of subjects."""
    if k < 2:
        raise ConfigurationError(f"fold count must be >= 2, got {k}")
    if session.size < k:
        raise ConfigurationError(
            f"session {session.session_index}: fewer samples than folds "
            f"({session.size} < {k})")
    fold_of = _deal([s.sample_id for s in session.samples], k, seed)
    return FoldAssignment(session_index=session.session_index, k=k, mode=ILCV,
                          seed=seed, fold_of=fold_of)


def partition(session: SessionDataset, k: int, seed: int, mode: str) -> FoldAssignment:
    if mode == SLCV:
        return slcv_partition(session, k, seed)
    if mode == ILCV:
        return ilcv_partition(session, k, seed)
    raise ConfigurationError(f"unknown partition mode {mode!r}; expected one of {MODES}")


def bind_folds(assignments: Sequence[FoldAssignment], trial_index: int) -> TrialPlan:
    """Bind fold `trial_index` across sessions into one trial's splits."""
    if not assignments:
        raise ConfigurationError("bind_folds needs at least one assignment")
    k = assignments[0].k
    mode = assignments[0].mode
    for a in assignments:
        if a.k != k or a.mode != mode:
            raise ConfigurationError(
                f"assignments disagree on (k, mode): session {a.session_index} "
                f"has ({a.k}, {a.mode}), expected ({k}, {mode})")
    if not 1 <= trial_index <= k:
        raise IndexError(f"trial index {trial_index} out of range 1..{k}")
    splits = []
    for a in assignments:
        test_ids = a.fold_ids(trial_index)
        train_ids = frozenset(a.fold_of) - test_ids
        splits.append(SessionSplit(session_index=a.session_index,
                                   train_ids=train_ids, test_ids=test_ids))
    return TrialPlan(trial_index=trial_index, splits=tuple(splits))


def cumulative_test_ids(plan: TrialPlan, t: int) -> set[tuple[int, str]]:
    """Union of the bound test folds of sessions 1..t, tagged by session."""
    if not 1 <= t <= len(plan.splits):
        raise IndexError(f"session index {t} out of range 1..{len(plan.splits)}")
    out: set[tuple[int, str]] = set()
    for split in plan.splits[:t]:
        out.update((split.session_index, sid) for sid in split.test_ids)
    return out
