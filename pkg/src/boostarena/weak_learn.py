"""Single-threshold classifiers and the best-fitting-hypothesis solver.

A hypothesis predicts ``action_above`` when ``direction . p >= offset`` and
``action_below`` otherwise.  The candidate set for a finite point cloud puts
thresholds at midpoints between consecutive projected values (plus one below
the minimum and one above the maximum) and pairs each threshold with every
ordered pair of receiver actions.  In one dimension this realises every
distinct behaviour a threshold rule can have on the points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .stage_game import TOL, as_point


@dataclass(frozen=True)
class ThresholdHypothesis:
    direction: tuple
    offset: float
    action_above: object
    action_below: object

    def __post_init__(self):
        norm = math.sqrt(sum(x * x for x in self.direction))
        if abs(norm - 1.0) > TOL:
            raise ValueError("direction must be a unit vector")

    def __call__(self, p):
        p = as_point(p)
        proj = sum(a * b for a, b in zip(self.direction, p))
        return self.action_above if proj >= self.offset else self.action_below

    def to_dict(self) -> dict:
        return {"direction": list(self.direction), "offset": self.offset,
                "action_above": self.action_above, "action_below": self.action_below}


@dataclass(frozen=True)
class WeightedSupport:
    points: tuple
    weights: np.ndarray
    labels: tuple
    actions: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.points) == 0:
            raise ValueError("support must be nonempty")
        if w.shape != (len(self.points),) or len(self.labels) != len(self.points):
            raise ValueError("points, weights and labels must have equal length")
        if np.any(w < -TOL) or abs(w.sum() - 1.0) > TOL:
            raise ValueError("weights must be a probability vector")
        if any(y not in self.actions for y in self.labels):
            raise ValueError("labels must be receiver actions")
        object.__setattr__(self, "points", tuple(as_point(p) for p in self.points))
        object.__setattr__(self, "weights", np.clip(w, 0.0, None))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "actions", tuple(self.actions))

    @classmethod
    def uniform(cls, points, labels, actions):
        n = len(points)
        return cls(tuple(points), np.full(n, 1.0 / n), tuple(labels), tuple(actions))

    @property
    def label_index(self) -> np.ndarray:
        return np.array([self.actions.index(y) for y in self.labels])

    def costs(self) -> np.ndarray:
        """0/1 misclassification cost rows."""
        c = np.ones((len(self.points), len(self.actions)))
        c[np.arange(len(self.points)), self.label_index] = 0.0
        return c


@dataclass(frozen=True)
class CostedSupport:
    """Points with a cost row per point; ``labels`` name the correct action.

    When ``labels`` is omitted the correct action of a row is its cheapest one.
    """

    points: tuple
    weights: np.ndarray
    costs: np.ndarray
    actions: tuple
    labels: tuple | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        c = np.asarray(self.costs, dtype=float)
        if len(self.points) == 0:
            raise ValueError("support must be nonempty")
        if w.shape != (len(self.points),) or c.shape != (len(self.points), len(self.actions)):
            raise ValueError("shape mismatch between points, weights and costs")
        if np.any(w < -TOL) or abs(w.sum() - 1.0) > TOL:
            raise ValueError("weights must be a probability vector")
        if not np.all(np.isfinite(c)):
            raise ValueError("cost rows must be finite")
        object.__setattr__(self, "points", tuple(as_point(p) for p in self.points))
        object.__setattr__(self, "weights", np.clip(w, 0.0, None))
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "actions", tuple(self.actions))

    @property
    def label_index(self) -> np.ndarray:
        if self.labels is None:
            return np.argmin(self.costs, axis=1)
        return np.array([self.actions.index(y) for y in self.labels])


@dataclass(frozen=True)
class EdgeReport:
    """Best in-class fit versus the uniform random guesser.

    For labelled supports ``best_accuracy`` and ``random_guess_baseline`` are
    accuracies; for costed supports (``objective == "cost"``) both are
    expected costs and lower is better.
    """

    best_accuracy: float
    random_guess_baseline: float
    edge: float
    n_actions: int
    objective: str = "accuracy"

    def to_dict(self) -> dict:
        return {"best_accuracy": self.best_accuracy,
                "random_guess_baseline": self.random_guess_baseline,
                "edge": self.edge, "n_actions": self.n_actions,
                "objective": self.objective}


def axis_directions(dim: int) -> list:
    return [tuple(1.0 if i == j else 0.0 for i in range(dim)) for j in range(dim)]


def _unit(d) -> tuple:
    d = np.asarray(d, dtype=float)
    n = np.linalg.norm(d)
    if n == 0:
        raise ValueError("zero direction")
    return tuple(float(x) for x in d / n)


def enumerate_candidates(points: Sequence, actions: Sequence, directions: Sequence | None = None) -> list:
    """All threshold hypotheses that behave distinctly on ``points``.

    Ordering (which fixes tie-breaks downstream): direction, then threshold
    ascending, then (action_above, action_below) in lexicographic index order.
    """
    pts = np.array([as_point(p) for p in points], dtype=float)
    if len(pts) == 0:
        raise ValueError("points must be nonempty")
    if directions is None:
        directions = axis_directions(pts.shape[1])
    if len(directions) == 0:
        raise ValueError("direction set must be nonempty")
    out = []
    for d in directions:
        d = _unit(d)
        proj = np.unique(pts @ np.asarray(d))
        mids = (proj[:-1] + proj[1:]) / 2.0
        offsets = np.concatenate([[proj[0] - 1.0], mids, [proj[-1] + 1.0]])
        for w in offsets:
            for a_plus in actions:
                for a_minus in actions:
                    out.append(ThresholdHypothesis(d, float(w), a_plus, a_minus))
    return out


def prediction_matrix(candidates: Sequence[ThresholdHypothesis], points: Sequence, actions: Sequence) -> np.ndarray:
    """Action index predicted by each candidate (rows) at each point (columns)."""
    pts = np.array([as_point(p) for p in points], dtype=float)
    dirs = np.array([h.direction for h in candidates], dtype=float)
    offs = np.array([h.offset for h in candidates])
    index = {a: i for i, a in enumerate(actions)}
    above = np.array([index[h.action_above] for h in candidates])
    below = np.array([index[h.action_below] for h in candidates])
    is_above = (dirs @ pts.T) >= offs[:, None]
    return np.where(is_above, above[:, None], below[:, None])


def _best_row(scores: np.ndarray, maximize: bool) -> int:
    # first index attaining the optimum (within TOL) keeps the tie-break
    # independent of floating noise in the reduction
    target = scores.max() if maximize else scores.min()
    hit = scores >= target - TOL if maximize else scores <= target + TOL
    return int(np.flatnonzero(hit)[0])


def best_index(support, preds: np.ndarray):
    """Row of ``preds`` that fits ``support`` best, with its objective value.

    Labelled supports maximise weighted accuracy; costed supports minimise
    weighted cost.
    """
    if len(preds) == 0:
        raise ValueError("candidate set is empty")
    if isinstance(support, WeightedSupport):
        acc = (preds == support.label_index[None, :]) @ support.weights
        k = _best_row(acc, maximize=True)
        return k, float(min(max(acc[k], 0.0), 1.0))
    n = len(support.points)
    cost = support.costs[np.arange(n)[None, :], preds] @ support.weights
    k = _best_row(cost, maximize=False)
    return k, float(cost[k])


def fit_best(support: WeightedSupport, candidates: Sequence[ThresholdHypothesis], preds=None):
    """Candidate with the highest weighted accuracy; returns ``(h, accuracy)``."""
    if len(candidates) == 0:
        raise ValueError("candidate set is empty")
    if preds is None:
        preds = prediction_matrix(candidates, support.points, support.actions)
    k, acc = best_index(support, preds)
    return candidates[k], acc


def fit_best_costed(support: CostedSupport, candidates: Sequence[ThresholdHypothesis], preds=None):
    """Candidate minimising sum_j w_j c[j, h(p_j)]; returns ``(h, expected_cost)``."""
    if len(candidates) == 0:
        raise ValueError("candidate set is empty")
    if preds is None:
        preds = prediction_matrix(candidates, support.points, support.actions)
    k, cost = best_index(support, preds)
    return candidates[k], cost


def random_guess_baseline(support, rho: float = 0.0) -> float:
    """Expected cost of a uniform guesser flipped to the correct label w.p. ``rho``.

    For labelled supports the cost is 0/1, so this is an error rate.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    costs = support.costs() if isinstance(support, WeightedSupport) else support.costs
    n = len(support.points)
    row_mean = costs.mean(axis=1)
    correct = costs[np.arange(n), support.label_index]
    return float(support.weights @ ((1.0 - rho) * row_mean + rho * correct))


def measure_edge(support, candidates: Sequence[ThresholdHypothesis], preds=None) -> EdgeReport:
    """Edge of the best in-class hypothesis over random guessing.

    Two actions: ``edge = best accuracy - 1/2``.  More than two: the largest
    rho such that the best cost does not exceed the rho-flipped uniform
    guesser's cost.  Costed supports always use the rho form.
    """
    k = len(support.actions)
    if isinstance(support, WeightedSupport):
        _, acc = fit_best(support, candidates, preds)
        base = 1.0 / k
        if k == 2:
            edge = acc - 0.5
        else:
            err = 1.0 - acc
            edge = 1.0 - err * k / (k - 1)
        return EdgeReport(acc, base, float(edge), k)
    _, best = fit_best_costed(support, candidates, preds)
    guess = random_guess_baseline(support, 0.0)
    oracle = random_guess_baseline(support, 1.0)
    span = guess - oracle
    edge = (guess - best) / span if span > TOL else 0.0
    return EdgeReport(best, guess, float(edge), k, objective="cost")
