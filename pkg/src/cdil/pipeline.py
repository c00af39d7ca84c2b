"""Experiment orchestration: sessions in order, folds bound across sessions,
trials aggregated.

A trial is one complete incremental run: a fresh learner trains on the bound
training split of each session in turn and, after each session, is evaluated
on the union of the bound test folds of every session seen so far. A k-fold
experiment runs exactly k such trials (one per fold index), so the total
number of session evaluations is k*n rather than a cross-session product.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .core import ConfigurationError, ProtocolError, SessionSequence
from .learners import LearnerConfig, Learner, VARIANTS, config_with_defaults, make_learner
from .metrics import ExperimentReport, TrialResult, aggregate
from .rng import derive_seed
from .splitters import FoldAssignment, MODES, TrialPlan, bind_folds, cumulative_test_ids, partition
from .synth import SynthSpec, generate_stream

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "CDIL_THREADS"


@dataclass
class ExperimentConfig:
    protocol: str = "slcv"
    k: int = 5
    learner: str = "finetune"
    learner_config: LearnerConfig = field(default_factory=LearnerConfig)
    seed: int = 0
    synth: SynthSpec | None = None
    manifest: str | Path | None = None
    out: str | Path | None = None
    deterministic: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.protocol not in MODES:
            raise ConfigurationError(f"unknown protocol {self.protocol!r}; expected one of {MODES}")
        if self.k < 2:
            raise ConfigurationError(f"fold count must be >= 2, got {self.k}")
        if self.learner not in VARIANTS:
            raise ConfigurationError(
                f"unknown learner {self.learner!r}; expected one of {VARIANTS}")
        if (self.synth is None) == (self.manifest is None):
            raise ConfigurationError("exactly one of synth spec or manifest path is required")

    def echo(self, feature_dim: int) -> dict[str, Any]:
        """Full configuration echo for reports (derived defaults resolved)."""
        learner_cfg = config_with_defaults(self.learner_config, feature_dim, self.seed)
        data: dict[str, Any] = ({"synthetic": self.synth.to_dict()} if self.synth is not None
                                else {"manifest": str(self.manifest)})
        return {
            "protocol": self.protocol,
            "k": self.k,
            "seed": self.seed,
            "learner": {"variant": self.learner, **_learner_config_dict(learner_cfg)},
            "data": data,
            "deterministic": self.deterministic,
        }


def _learner_config_dict(cfg: LearnerConfig) -> dict[str, Any]:
    return {
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "epochs_first": cfg.epochs_first,
        "epochs_later": cfg.epochs_later,
        "ridge_lambda": cfg.ridge_lambda,
        "projection_dim": cfg.projection_dim,
        "projection_seed": cfg.projection_seed,
        "nonlinearity": cfg.nonlinearity,
        "feature_map": cfg.feature_map,
        "head_init": cfg.head_init,
        "head_init_std": cfg.head_init_std,
        "bias_feature": cfg.bias_feature,
        "prototype_stats": cfg.prototype_stats,
    }


def split_seed(experiment_seed: int, mode: str, session_index: int) -> int:
    """Per-session fold seed; SLCV and ILCV runs over the same data stay independent."""
    return derive_seed(experiment_seed, "split", mode, session_index)


def partition_sequence(seq: SessionSequence, k: int, seed: int,
                       mode: str) -> list[FoldAssignment]:
    return [partition(session, k, split_seed(seed, mode, session.session_index), mode)
            for session in seq.sessions]


def run_session(learner: Learner, seq: SessionSequence, plan: TrialPlan,
                t: int) -> tuple[int, int]:
    """Train on session t's bound split, evaluate cumulatively; returns (correct, total)."""
    session = seq.session(t)
    split = plan.split(t)
    train = [s for s in session.samples if s.sample_id in split.train_ids]
    if not train:
        raise ProtocolError(
            f"session {t}, trial {plan.trial_index}: empty training split")
    trained_labels = {s.label for s in train}
    for c in sorted(session.label_set - trained_labels):
        logger.warning(
            "session %d, trial %d: class %d has no training samples in the "
            "bound split; nothing trains it this session", t, plan.trial_index, c)

    learner.update(train, session.label_set)

    expected_space = seq.cumulative_label_space(t)
    if learner.known_classes != expected_space:
        raise ProtocolError(
            f"session {t}: learner knows {sorted(learner.known_classes)}, "
            f"expected cumulative label space {sorted(expected_space)}")

    eval_ids = cumulative_test_ids(plan, t)
    if not eval_ids:
        raise ProtocolError(f"session {t}, trial {plan.trial_index}: empty cumulative test set")
    eval_samples = [seq.session(i).by_id[sid]
                    for i in range(1, t + 1)
                    for sid in sorted(plan.split(i).test_ids)]
    features = np.stack([s.features for s in eval_samples])
    labels = np.array([s.label for s in eval_samples])
    predictions = learner.predict_many(features)
    correct = int(np.sum(predictions == labels))
    return correct, len(eval_samples)


LearnerFactory = Callable[[int], Learner]


def run_trial(cfg: ExperimentConfig, seq: SessionSequence,
              assignments: Sequence[FoldAssignment], trial_index: int,
              learner_factory: LearnerFactory | None = None) -> TrialResult:
    """One complete incremental run over all sessions with fold `trial_index` bound."""
    plan = bind_folds(assignments, trial_index)
    if learner_factory is not None:
        learner = learner_factory(trial_index)
    else:
        learner = make_learner(cfg.learner, seq.feature_dim, cfg.learner_config,
                               cfg.seed, trial_index)
    correct: list[int] = []
    total: list[int] = []
    for t in range(1, seq.n + 1):
        c, m = run_session(learner, seq, plan, t)
        correct.append(c)
        total.append(m)
        logger.info("trial %d session %d: accuracy %.4f (%d/%d)",
                    trial_index, t, c / m, c, m)
    return TrialResult(trial_index=trial_index, correct=tuple(correct), total=tuple(total))


def _thread_budget(cfg: ExperimentConfig) -> int:
    if cfg.deterministic:
        return 1
    if cfg.threads is not None:
        return max(1, cfg.threads)
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV_VAR}={env!r} is not an integer") from None
    return min(cfg.k, os.cpu_count() or 1)


def build_sequence(cfg: ExperimentConfig) -> SessionSequence:
    if cfg.synth is not None:
        return generate_stream(cfg.synth)
    from .interface import load_sequence  # local import to avoid a cycle
    return load_sequence(cfg.manifest)


def run_experiment(cfg: ExperimentConfig,
                   learner_factory: LearnerFactory | None = None) -> ExperimentReport:
    """Build the stream, partition every session, run all k trials, aggregate.

    Any trial failure aborts the whole experiment: a partial fold average
    would silently bias the reported means.
    """
    seq = build_sequence(cfg)
    assignments = partition_sequence(seq, cfg.k, cfg.seed, cfg.protocol)
    workers = _thread_budget(cfg)
    trial_indices = list(range(1, cfg.k + 1))
    if workers <= 1:
        trials = [run_trial(cfg, seq, assignments, tau, learner_factory)
                  for tau in trial_indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(
                lambda tau: run_trial(cfg, seq, assignments, tau, learner_factory),
                trial_indices))
    report = aggregate(trials, config=cfg.echo(seq.feature_dim), expect_k=cfg.k)
    logger.info("experiment done: mean final %.4f, mean average %.4f",
                report.mean_final, report.mean_average)
    if cfg.out is not None:
        from .interface import write_report
        write_report(report, cfg.out)
    return report
