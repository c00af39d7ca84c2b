"""Incremental learners behind one contract: update on a session, predict over
everything seen so far.

Two variants mirror the benchmark's baselines at linear desk scale:

* ``finetune`` — a trainable square feature map (the stand-in for a
  fine-tuned backbone) plus the current session's head rows, trained with
  mini-batch SGD on cross-entropy over the full cumulative label space.
  Earlier sessions' head groups are frozen; forgetting enters through the
  shared feature map and through new rows competing in the softmax.

* ``prototype`` — a frozen random projection followed by a nonlinearity,
  with per-session second-moment and per-class sum statistics solved by
  ridge regression into that session's head rows. The projection is drawn
  once and never changes, so all adaptation lives in the heads.

The default learning rate is 0.05: the published schedule (batch 16,
60 epochs then 10 per later session) is kept, but its 2e-5 rate targets
pre-trained deep backbones and would barely move a from-scratch linear
model.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import AbstractSet, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import ConfigurationError, NumericalError, ProtocolError, Sample
from .rch import InitSpec, RCHState, softmax_rows
from .rng import derive_seed, substream

FINETUNE = "finetune"
PROTOTYPE = "prototype"
VARIANTS = (FINETUNE, PROTOTYPE)

RIDGE_RESIDUAL_RTOL = 1e-8


@dataclass(frozen=True)
class LearnerConfig:
    learning_rate: float = 0.05
    batch_size: int = 16
    epochs_first: int = 60
    epochs_later: int = 10
    ridge_lambda: float = 1.0
    projection_dim: int | None = None  # default 4*d, resolved at construction
    projection_seed: int | None = None  # default derived from the experiment seed
    nonlinearity: str = "relu"  # "relu" | "identity"
    feature_map: bool = True  # finetune trains a d->d map every session
    head_init: str = "zeros"  # "zeros" | "gaussian"
    head_init_std: float = 0.01
    bias_feature: bool = False  # append a constant-1 feature before the heads
    prototype_stats: str = "per_session"  # "per_session" | "cumulative"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs_first < 0 or self.epochs_later < 0:
            raise ConfigurationError("batch size and epoch counts must be positive")
        if self.ridge_lambda <= 0:
            raise ConfigurationError("ridge_lambda must be > 0")
        if self.projection_dim is not None and self.projection_dim < 1:
            raise ConfigurationError("projection_dim must be >= 1")
        if self.nonlinearity not in ("relu", "identity"):
            raise ConfigurationError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.head_init not in ("zeros", "gaussian"):
            raise ConfigurationError(f"unknown head init {self.head_init!r}")
        if self.prototype_stats not in ("per_session", "cumulative"):
            raise ConfigurationError(f"unknown prototype stats mode {self.prototype_stats!r}")


class Learner(ABC):
    """Contract used by the pipeline: sequential updates, cumulative prediction."""

    rch: RCHState

    @abstractmethod
    def update(self, train: Sequence[Sample], label_set: AbstractSet[int]) -> None:
        """Consume session t's training split; afterwards the learner predicts
        over every class seen in sessions 1..t."""

    @abstractmethod
    def transform(self, features: np.ndarray) -> np.ndarray:
        """Map raw feature rows (N, d) into the space the heads live in."""

    @property
    def known_classes(self) -> frozenset[int]:
        return self.rch.known_classes

    def predict(self, x: np.ndarray) -> int:
        return self.rch.predict(self.transform(np.atleast_2d(x))[0])

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return self.rch.predict_proba(self.transform(np.atleast_2d(x))[0])

    def predict_many(self, features: np.ndarray) -> np.ndarray:
        return self.rch.predict_many(self.transform(features))


def _stack(train: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    features = np.stack([s.features for s in train]).astype(np.float64)
    labels = np.array([s.label for s in train], dtype=np.int64)
    return features, labels


def _append_bias(rows: np.ndarray) -> np.ndarray:
    return np.hstack([rows, np.ones((rows.shape[0], 1))])


def finetune_loss_and_grads(
    features: np.ndarray,
    labels_pos: np.ndarray,
    remap_matrix: np.ndarray,
    feature_map: np.ndarray | None = None,
    bias_feature: bool = False,
) -> tuple[float, np.ndarray, np.ndarray | None]:
    """Cross-entropy over the remapped logits, with analytic gradients.

    Returns (loss, d_loss/d_remap_row per class, d_loss/d_feature_map or None).
    The gradient w.r.t. a remapped row equals the gradient w.r.t. any single
    session's row of that class, because remapping is a per-class sum.
    """
    batch = features.shape[0]
    hidden = features @ feature_map.T if feature_map is not None else features
    inputs = _append_bias(hidden) if bias_feature else hidden
    logits = inputs @ remap_matrix.T
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    log_probs = shifted - log_norm[:, None]
    loss = float(-np.mean(log_probs[np.arange(batch), labels_pos]))
    d_logits = softmax_rows(logits)
    d_logits[np.arange(batch), labels_pos] -= 1.0
    d_logits /= batch
    d_remap = d_logits.T @ inputs
    d_map = None
    if feature_map is not None:
        d_hidden = d_logits @ remap_matrix
        if bias_feature:
            d_hidden = d_hidden[:, :-1]
        d_map = d_hidden.T @ features
    return loss, d_remap, d_map


class FinetuneLearner(Learner):
    """Naive sequential fine-tuning: SGD on the newest head group (and the
    shared feature map, when enabled) with everything earlier frozen."""

    def __init__(self, feature_dim: int, cfg: LearnerConfig,
                 experiment_seed: int = 0, trial_index: int = 1):
        self.feature_dim = feature_dim
        self.cfg = cfg
        self._seed = experiment_seed
        self._trial = trial_index
        self.feature_map = np.eye(feature_dim) if cfg.feature_map else None
        head_dim = feature_dim + (1 if cfg.bias_feature else 0)
        self.rch = RCHState(head_dim)

    def transform(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        hidden = features @ self.feature_map.T if self.feature_map is not None else features
        return _append_bias(hidden) if self.cfg.bias_feature else hidden

    def update(self, train: Sequence[Sample], label_set: AbstractSet[int]) -> None:
        if not train:
            raise ProtocolError("empty training split: a bound fold consumed the whole session")
        t = len(self.rch.head_groups) + 1
        init = InitSpec(self.cfg.head_init, self.cfg.head_init_std)
        init_rng = substream(self._seed, "finetune", self._trial, t, "head-init")
        self.rch.add_session(label_set, init=init, rng=init_rng)

        features, labels = _stack(train)
        if features.shape[1] != self.feature_dim:
            raise ValueError(f"training features have dimension {features.shape[1]}, "
                             f"expected {self.feature_dim}")
        order = self.rch.class_order
        position = {c: i for i, c in enumerate(order)}
        labels_pos = np.array([position[y] for y in labels])
        session_classes = sorted(label_set)

        epochs = self.cfg.epochs_first if t == 1 else self.cfg.epochs_later
        shuffle_rng = substream(self._seed, "finetune", self._trial, t, "shuffle")
        indices = list(range(len(train)))
        for epoch in range(epochs):
            shuffle_rng.shuffle(indices)
            for start in range(0, len(indices), self.cfg.batch_size):
                batch = indices[start:start + self.cfg.batch_size]
                self._step(features[batch], labels_pos[batch], t, session_classes,
                           position, epoch)

    def _step(self, batch_features, batch_labels_pos, t, session_classes,
              position, epoch) -> None:
        loss, d_remap, d_map = finetune_loss_and_grads(
            batch_features, batch_labels_pos, self.rch.remap(),
            self.feature_map, self.cfg.bias_feature)
        if not np.isfinite(loss):
            raise NumericalError(
                f"non-finite loss at session {t}, epoch {epoch}, "
                f"trial {self._trial} (lr={self.cfg.learning_rate})")
        lr = self.cfg.learning_rate
        deltas = {c: -lr * d_remap[position[c]] for c in session_classes}
        self.rch.add_to_rows(t, deltas)
        if self.feature_map is not None:
            self.feature_map = self.feature_map - lr * d_map


class KahanSum:
    """Compensated accumulator so statistic sums are order-insensitive to ~1e-15."""

    def __init__(self, shape: int | tuple[int, ...]):
        self._sum = np.zeros(shape)
        self._comp = np.zeros(shape)

    def add(self, value: np.ndarray) -> None:
        y = value - self._comp
        t = self._sum + y
        self._comp = (t - self._sum) - y
        self._sum = t

    @property
    def value(self) -> np.ndarray:
        return self._sum.copy()


def ridge_solve(gram: np.ndarray, targets: np.ndarray, lam: float) -> np.ndarray:
    """Solve (gram + lam*I) W = targets via Cholesky and verify the residual."""
    m = gram.shape[0]
    system = gram + lam * np.eye(m)
    solution = cho_solve(cho_factor(system), targets)
    residual = np.linalg.norm(system @ solution - targets)
    bound = RIDGE_RESIDUAL_RTOL * (np.linalg.norm(gram) + lam) * max(
        np.linalg.norm(solution), 1e-30)
    if residual > bound and residual > 1e-12:
        raise NumericalError(
            f"ridge solve residual {residual:.3e} exceeds tolerance {bound:.3e}")
    return solution


class PrototypeLearner(Learner):
    """Frozen random features plus per-session class statistics and ridge heads."""

    def __init__(self, feature_dim: int, cfg: LearnerConfig,
                 experiment_seed: int = 0, trial_index: int = 1):
        self.feature_dim = feature_dim
        self.cfg = cfg
        self._trial = trial_index
        proj_dim = cfg.projection_dim if cfg.projection_dim is not None else 4 * feature_dim
        proj_seed = (cfg.projection_seed if cfg.projection_seed is not None
                     else derive_seed(experiment_seed, "projection"))
        rng = substream(proj_seed, "projection-matrix")
        self.projection = rng.normals((proj_dim, feature_dim)) / np.sqrt(feature_dim)
        self.projection.flags.writeable = False
        self.head_dim = proj_dim + (1 if cfg.bias_feature else 0)
        self.rch = RCHState(self.head_dim)
        self._cumulative_gram: KahanSum | None = None
        self._cumulative_sums: dict[int, KahanSum] = {}
        self.last_residual: float = 0.0

    def transform(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        hidden = features @ self.projection.T
        if self.cfg.nonlinearity == "relu":
            hidden = np.maximum(hidden, 0.0)
        return _append_bias(hidden) if self.cfg.bias_feature else hidden

    def update(self, train: Sequence[Sample], label_set: AbstractSet[int]) -> None:
        if not train:
            raise ProtocolError("empty training split: a bound fold consumed the whole session")
        t = len(self.rch.head_groups) + 1
        previous_rows = {c: self._summed_rows(c) for c in sorted(label_set)}
        self.rch.add_session(label_set)

        features, labels = _stack(train)
        hidden = self.transform(features)
        cumulative = self.cfg.prototype_stats == "cumulative"
        if cumulative:
            if self._cumulative_gram is None:
                self._cumulative_gram = KahanSum((self.head_dim, self.head_dim))
            gram_acc = self._cumulative_gram
            sums = self._cumulative_sums
        else:
            gram_acc = KahanSum((self.head_dim, self.head_dim))
            sums = {}
        for h, y in zip(hidden, labels):
            gram_acc.add(np.outer(h, h))
            if y not in sums:
                sums[y] = KahanSum(self.head_dim)
            sums[y].add(h)

        classes = sorted(label_set)
        targets = np.zeros((self.head_dim, len(classes)))
        for i, c in enumerate(classes):
            if c in sums:
                targets[:, i] = sums[c].value
        solution = ridge_solve(gram_acc.value, targets, self.cfg.ridge_lambda)
        system = gram_acc.value + self.cfg.ridge_lambda * np.eye(self.head_dim)
        self.last_residual = float(np.linalg.norm(system @ solution - targets))
        if cumulative:
            # Set rows so the remapped (summed) row equals the global ridge
            # solution for every class present in this session.
            updates = {c: solution[:, i] - previous_rows[c] for i, c in enumerate(classes)}
        else:
            updates = {c: solution[:, i] for i, c in enumerate(classes)}
        self.rch.set_rows(t, updates)

    def _summed_rows(self, c: int) -> np.ndarray:
        total = np.zeros(self.head_dim)
        for group in self.rch.head_groups:
            if c in group.classes:
                total += group.row(c)
        return total


def make_learner(variant: str, feature_dim: int, cfg: LearnerConfig | None = None,
                 experiment_seed: int = 0, trial_index: int = 1) -> Learner:
    cfg = cfg if cfg is not None else LearnerConfig()
    if variant == FINETUNE:
        return FinetuneLearner(feature_dim, cfg, experiment_seed, trial_index)
    if variant == PROTOTYPE:
        return PrototypeLearner(feature_dim, cfg, experiment_seed, trial_index)
    raise ConfigurationError(f"unknown learner variant {variant!r}; expected one of {VARIANTS}")


def config_with_defaults(cfg: LearnerConfig, feature_dim: int,
                         experiment_seed: int) -> LearnerConfig:
    """Resolve the derived defaults (projection dim/seed) for reporting."""
    resolved = cfg
    if resolved.projection_dim is None:
        resolved = replace(resolved, projection_dim=4 * feature_dim)
    if resolved.projection_seed is None:
        resolved = replace(resolved, projection_seed=derive_seed(experiment_seed, "projection"))
    return resolved
