"""Lazy option rewards: skip a rollout when a precise classifier says it will succeed.

One classifier per nominal option, trained on the outcomes of rollouts that
actually ran.  It is only trusted once its precision on held-out data clears
``precision_target``; even then a fixed fraction of confident calls still run
the rollout, which keeps the training data flowing and doubles as an audit.
Negative rewards are never cached.
"""

from __future__ import annotations

import enum
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from .fastgbt import CompiledGBT, make_classifier
from .sim import ContractViolation, Observation


class GateDecision(str, enum.Enum):
    LAZY_POSITIVE = "LazyPositive"
    DO_ROLLOUT = "DoRollout"


@dataclass(frozen=True)
class LazyConfig:
    precision_target: float = 0.95
    forced_rollout_prob: float = 0.2
    min_samples: int = 50
    holdout_fraction: float = 0.2
    retrain_every: int = 10  # policy updates
    n_estimators: int = 100
    max_depth: int = 3
    seed: int = 0


@dataclass(frozen=True)
class ClassifierSnapshot:
    """Immutable published state of one option's classifier."""

    option_index: int
    model: Optional[object] = None
    threshold: float = 1.0
    holdout_precision: float = 0.0
    enabled: bool = False
    num_samples: int = 0
    compiled: Optional[CompiledGBT] = field(default=None, repr=False, compare=False)

    def prob(self, x: np.ndarray) -> float:
        if self.compiled is None:
            return 0.0
        return self.compiled.prob(x)


def select_threshold(probs: np.ndarray, labels: np.ndarray, target: float) -> tuple[Optional[float], float]:
    """Smallest threshold whose predicted-positive set has precision >= target.

    Returns (threshold or None, precision at that threshold).
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    for tau in np.unique(probs):
        sel = probs >= tau
        prec = labels[sel].mean()
        if prec >= target - 1e-12:
            return float(tau), float(prec)
    return None, 0.0


@dataclass
class _AuditStats:
    audits: int = 0
    audit_successes: int = 0


class PreconditionClassifier:
    """Growing training set plus the current snapshot for one option."""

    def __init__(self, option_index: int, config: LazyConfig):
        self.option_index = option_index
        self.config = config
        self.features: list[np.ndarray] = []
        self.labels: list[int] = []
        self.snapshot = ClassifierSnapshot(option_index)
        self._trained_on = 0

    def add(self, x: np.ndarray, y: int) -> None:
        self.features.append(np.asarray(x, dtype=float))
        self.labels.append(int(y))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def enabled(self) -> bool:
        return self.snapshot.enabled

    @property
    def threshold(self) -> float:
        return self.snapshot.threshold

    @property
    def holdout_precision(self) -> float:
        return self.snapshot.holdout_precision

    def retrain(self) -> ClassifierSnapshot:
        c = self.config
        n = len(self.labels)
        self._trained_on = n
        y = np.asarray(self.labels, dtype=int)
        if n < c.min_samples or y.min() == y.max():
            self.snapshot = ClassifierSnapshot(self.option_index, num_samples=n)
            return self.snapshot
        X = np.stack(self.features)
        rng = np.random.default_rng([c.seed, self.option_index, n])
        perm = rng.permutation(n)
        n_hold = max(1, int(round(c.holdout_fraction * n)))
        hold, train = perm[:n_hold], perm[n_hold:]
        if y[train].min() == y[train].max():
            self.snapshot = ClassifierSnapshot(self.option_index, num_samples=n)
            return self.snapshot
        model = make_classifier(c.n_estimators, c.max_depth, c.seed)
        model.fit(X[train], y[train])
        probs = model.predict_proba(X[hold])[:, 1]
        tau, prec = select_threshold(probs, y[hold], c.precision_target)
        fast = CompiledGBT(model, X.shape[1])
        if tau is None:
            self.snapshot = ClassifierSnapshot(self.option_index, model, 1.0, prec, False, n, fast)
        else:
            self.snapshot = ClassifierSnapshot(self.option_index, model, tau, prec, True, n, fast)
        return self.snapshot

    @property
    def stale(self) -> bool:
        return len(self.labels) != self._trained_on


class LazyGate:
    """All per-option classifiers plus the gate used by the recovery MDP."""

    def __init__(self, num_options: int, config: LazyConfig | None = None):
        self.config = config or LazyConfig()
        self.classifiers = {i: PreconditionClassifier(i, self.config) for i in range(1, num_options + 1)}
        self._audit = {i: _AuditStats() for i in self.classifiers}
        self._updates = 0
        self.retrain_count = 0

    def _clf(self, i: int) -> PreconditionClassifier:
        if i not in self.classifiers:
            raise ContractViolation(f"no classifier for option {i}")
        return self.classifiers[i]

    def record_outcome(self, i: int, obs: Observation, success: int, audited: bool = False,
                       provenance: str = "rollout") -> None:
        """Add a genuine rollout outcome.  ``audited`` marks a forced rollout on a confident state."""
        if provenance != "rollout":
            raise ContractViolation("only rollout outcomes may train the lazy classifiers")
        if success not in (0, 1):
            raise ContractViolation(f"success must be 0 or 1, got {success!r}")
        self._clf(i).add(obs.to_vector(), success)
        if audited:
            st = self._audit[i]
            st.audits += 1
            st.audit_successes += int(success)

    def retrain(self, i: int) -> ClassifierSnapshot:
        self.retrain_count += 1
        return self._clf(i).retrain()

    def on_policy_update(self, _round: int = 0) -> bool:
        """Call once per policy update; retrains stale classifiers at the cadence."""
        self._updates += 1
        if self._updates % self.config.retrain_every:
            return False
        for i, clf in self.classifiers.items():
            if clf.stale:
                self.retrain(i)
        return True

    def decide(self, i: int, obs: Observation, rng: np.random.Generator) -> tuple[bool, bool]:
        """(lazy positive?, confident?).  Confident calls that still roll out are audits."""
        snap = self._clf(i).snapshot
        if not snap.enabled:
            return False, False
        if snap.prob(obs.to_vector()) < snap.threshold:
            return False, False
        if rng.random() < self.config.forced_rollout_prob:
            return False, True
        return True, True

    def gate(self, i: int, obs: Observation, rng: np.random.Generator) -> GateDecision:
        lazy, _ = self.decide(i, obs, rng)
        return GateDecision.LAZY_POSITIVE if lazy else GateDecision.DO_ROLLOUT

    # -- reporting ----------------------------------------------------------
    def audit_counts(self) -> tuple[int, int]:
        """(audited rollouts, of which successful), summed over options."""
        n = sum(s.audits for s in self._audit.values())
        k = sum(s.audit_successes for s in self._audit.values())
        return n, k

    def audit_precision(self) -> float:
        n, k = self.audit_counts()
        return k / n if n else float("nan")

    def stats(self) -> dict:
        out = {}
        for i, clf in self.classifiers.items():
            a = self._audit[i]
            out[i] = {"samples": len(clf), "enabled": clf.enabled, "threshold": clf.threshold,
                      "holdout_precision": clf.holdout_precision, "audits": a.audits,
                      "audit_successes": a.audit_successes}
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(pickle.dumps(self))

    @staticmethod
    def load(path: str | Path) -> "LazyGate":
        gate = pickle.loads(Path(path).read_bytes())
        if not isinstance(gate, LazyGate):
            raise ContractViolation(f"{path} does not hold a LazyGate")
        return gate
