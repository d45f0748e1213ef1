"""Binary AdaBoost and the multiclass cost-sensitive boosting variant.

Both learners work on a finite labelled support and call the exact
single-threshold solver of :mod:`boostarena.weak_learn` once per round.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .stage_game import TOL
from .weak_learn import (
    CostedSupport,
    ThresholdHypothesis,
    WeightedSupport,
    best_index,
    measure_edge,
    prediction_matrix,
    random_guess_baseline,
)

EPS_CLAMP = 1e-12


class WeakLearnabilityError(RuntimeError):
    pass


class EdgeAssumptionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Ensemble:
    hypotheses: tuple
    weights: tuple
    actions: tuple

    def __post_init__(self):
        if len(self.hypotheses) != len(self.weights):
            raise ValueError("one weight per hypothesis")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")

    def __len__(self):
        return len(self.hypotheses)

    def votes(self, p) -> np.ndarray:
        tally = np.zeros(len(self.actions))
        for h, w in zip(self.hypotheses, self.weights):
            tally[self.actions.index(h(p))] += w
        return tally

    def predict_indices(self, points: Sequence) -> np.ndarray:
        if not self.hypotheses:
            raise ValueError("empty ensemble")
        preds = prediction_matrix(self.hypotheses, points, self.actions)
        tally = np.zeros((len(points), len(self.actions)))
        for row, w in zip(preds, self.weights):
            tally[np.arange(len(points)), row] += w
        return _first_argmax(tally)

    def to_json(self) -> str:
        rows = [dict(h.to_dict(), alpha=w) for h, w in zip(self.hypotheses, self.weights)]
        return json.dumps({"actions": list(self.actions), "hypotheses": rows})

    @classmethod
    def from_json(cls, text: str) -> "Ensemble":
        doc = json.loads(text)
        hyps, ws = [], []
        for r in doc["hypotheses"]:
            hyps.append(ThresholdHypothesis(tuple(r["direction"]), r["offset"],
                                            r["action_above"], r["action_below"]))
            ws.append(r["alpha"])
        return cls(tuple(hyps), tuple(ws), tuple(doc["actions"]))


def _first_argmax(tally: np.ndarray) -> np.ndarray:
    top = tally.max(axis=1, keepdims=True)
    return np.argmax(tally >= top - TOL, axis=1)


def ensemble_predict(ensemble: Ensemble, p):
    """Weighted plurality vote; ties go to the lowest-indexed action."""
    if not ensemble.hypotheses:
        raise ValueError("empty ensemble")
    tally = ensemble.votes(p)
    return ensemble.actions[int(_first_argmax(tally[None, :])[0])]


@dataclass(frozen=True)
class RoundRecord:
    round: int
    epsilon_or_cost: float
    alpha_or_eta: float
    z_or_ltilde: float
    train_error: float
    edge: float


@dataclass(frozen=True)
class BoostConfig:
    max_rounds: int = 200
    edge_floor: float = 1e-9
    gamma: float | None = None
    stop_on_zero_error: bool = True

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.edge_floor <= 0:
            raise ValueError("edge_floor must be positive")
        if self.gamma is not None and not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")


@dataclass(frozen=True)
class BoostState:
    round: int
    distribution: np.ndarray
    cumulative_scores: np.ndarray
    hypotheses: tuple = ()
    alphas: tuple = ()
    round_log: tuple = ()
    terminal: bool = False
    eta: float = 0.0
    gamma: float | None = None

    @classmethod
    def initial(cls, support: WeightedSupport, eta: float = 0.0) -> "BoostState":
        n, k = len(support.points), len(support.actions)
        return cls(0, support.weights.copy(), np.zeros((n, k)), eta=eta)

    def ensemble(self, actions) -> Ensemble:
        return Ensemble(tuple(self.hypotheses), tuple(self.alphas), tuple(actions))

    def train_error(self, support: WeightedSupport) -> float:
        pred = _first_argmax(self.cumulative_scores)
        return float(support.weights @ (pred != support.label_index))

    @property
    def ltilde(self) -> float:
        return self.round_log[-1].z_or_ltilde if self.round_log else math.nan


def round_log_csv(log: Sequence[RoundRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "epsilon_or_cost", "alpha_or_eta", "Z_or_Ltilde", "train_error"])
    for r in log:
        w.writerow([r.round] + [f"{x:.9g}" for x in (r.epsilon_or_cost, r.alpha_or_eta, r.z_or_ltilde, r.train_error)])
    return buf.getvalue()


# --- binary ------------------------------------------------------------------

def _signs(support: WeightedSupport) -> np.ndarray:
    # first action maps to +1, second to -1
    return np.where(support.label_index == 0, 1.0, -1.0)


def adaboost_round(state: BoostState, support: WeightedSupport, candidates, preds=None) -> BoostState:
    """One AdaBoost round under the current distribution ``state.distribution``."""
    if len(support.actions) != 2:
        raise ValueError("adaboost needs exactly two receiver actions")
    if preds is None:
        preds = prediction_matrix(candidates, support.points, support.actions)
    current = replace(support, weights=state.distribution)
    j, acc = best_index(current, preds)
    h = candidates[j]
    k = state.round + 1
    eps = max(1.0 - acc, 0.0)
    hp = np.where(preds[j] == 0, 1.0, -1.0)
    weighted = state.distribution > 0
    # decide perfection on predictions, since 1 - acc can be rounding noise
    if np.all(preds[j][weighted] == support.label_index[weighted]):
        scores = np.zeros_like(state.cumulative_scores)
        scores[np.arange(len(hp)), (hp < 0).astype(int)] = 1.0
        rec = RoundRecord(k, 0.0, 1.0, 0.0, 0.0, 0.5)
        return BoostState(k, state.distribution, scores, (h,), (1.0,),
                          state.round_log + (rec,), terminal=True)
    if eps >= 0.5 - TOL:
        raise WeakLearnabilityError(f"weak learnability violated: epsilon={eps}")
    alpha = 0.5 * math.log((1.0 - max(eps, EPS_CLAMP)) / max(eps, EPS_CLAMP))
    y = _signs(support)
    unnorm = state.distribution * np.exp(-alpha * y * hp)
    Z = float(unnorm.sum())
    scores = state.cumulative_scores.copy()
    scores[np.arange(len(hp)), (hp < 0).astype(int)] += alpha
    new = BoostState(k, unnorm / Z, scores, state.hypotheses + (h,), state.alphas + (alpha,),
                     state.round_log, eta=state.eta)
    rec = RoundRecord(k, eps, alpha, Z, new.train_error(support), 0.5 - eps)
    return replace(new, round_log=state.round_log + (rec,))


def adaboost_train(support: WeightedSupport, candidates, config: BoostConfig = BoostConfig(),
                   return_state: bool = False):
    preds = prediction_matrix(candidates, support.points, support.actions)
    state = BoostState.initial(support)
    while state.round < config.max_rounds and not state.terminal:
        state = adaboost_round(state, support, candidates, preds)
        if config.stop_on_zero_error and state.round_log[-1].train_error == 0.0:
            break
    ens = state.ensemble(support.actions)
    return (ens, state) if return_state else ens


# --- multiclass --------------------------------------------------------------

def z_factor(k: int, gamma: float) -> float:
    """Per-round contraction of the surrogate loss with eta = log(1 + gamma)."""
    good = (1.0 - gamma) / k + gamma
    return 1.0 + good * (1.0 / (1.0 + gamma) - 1.0) + (1.0 - gamma) / k * gamma


def _pointwise_loss(F: np.ndarray, y: np.ndarray, eta: float) -> np.ndarray:
    n = len(y)
    diff = F - F[np.arange(n), y][:, None]
    terms = np.exp(eta * diff)
    terms[np.arange(n), y] = 0.0
    return terms.sum(axis=1)


def multiclass_costs(F: np.ndarray, y: np.ndarray, eta: float) -> np.ndarray:
    n = len(y)
    diff = F - F[np.arange(n), y][:, None]
    costs = (math.exp(eta) - 1.0) * np.exp(eta * diff)
    loss = _pointwise_loss(F, y, eta)
    costs[np.arange(n), y] = (math.exp(-eta) - 1.0) * loss
    return costs


def multiclass_round(state: BoostState, support: WeightedSupport, candidates, eta: float,
                     gamma: float | None = None, preds=None) -> BoostState:
    """One round; if ``gamma`` is given the round's cost must beat the gamma-guesser."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if preds is None:
        preds = prediction_matrix(candidates, support.points, support.actions)
    y = support.label_index
    F = state.cumulative_scores
    weights = support.weights
    costed = CostedSupport(support.points, weights, multiclass_costs(F, y, eta),
                           support.actions, support.labels)
    j, cost = best_index(costed, preds)
    h = candidates[j]
    if gamma is not None:
        baseline = random_guess_baseline(costed, gamma)
        if cost > baseline + 1e-12:
            raise EdgeAssumptionError(
                f"edge assumption violated; lower gamma (cost {cost:.3g} > baseline {baseline:.3g})")
    row = preds[j]
    F_new = F.copy()
    F_new[np.arange(len(y)), row] += 1.0
    k = state.round + 1
    new_ltilde = float(weights @ _pointwise_loss(F_new, y, eta))
    span = random_guess_baseline(costed, 0.0) - random_guess_baseline(costed, 1.0)
    edge = (random_guess_baseline(costed, 0.0) - cost) / span if span > TOL else 0.0
    new = BoostState(k, weights, F_new, state.hypotheses + (h,), state.alphas + (1.0,),
                     state.round_log, eta=eta)
    rec = RoundRecord(k, cost, eta, new_ltilde, new.train_error(support), edge)
    return replace(new, round_log=state.round_log + (rec,))


def initial_gamma(support: WeightedSupport, candidates, preds=None) -> float:
    """Edge (rho form) of the best hypothesis on the initial 0/1 problem."""
    costed = CostedSupport(support.points, support.weights, support.costs(),
                           support.actions, support.labels)
    return measure_edge(costed, candidates, preds).edge


def multiclass_train(support: WeightedSupport, candidates, config: BoostConfig = BoostConfig(),
                     return_state: bool = False):
    """Plurality-vote ensemble with eta = log(1 + gamma).

    With ``config.gamma`` unset, gamma starts at the measured initial edge and
    is halved (training restarts) whenever a round fails to beat the
    gamma-flipped random guesser.  A user-supplied gamma is never adjusted.
    """
    preds = prediction_matrix(candidates, support.points, support.actions)
    auto = config.gamma is None
    gamma = initial_gamma(support, candidates, preds) if auto else config.gamma
    if gamma <= 0:
        raise EdgeAssumptionError("no positive edge on the initial distribution")
    while True:
        eta = math.log1p(gamma)
        state = BoostState.initial(support, eta=eta)
        try:
            while state.round < config.max_rounds:
                state = multiclass_round(state, support, candidates, eta, gamma, preds)
                if config.stop_on_zero_error and state.round_log[-1].train_error == 0.0:
                    break
        except EdgeAssumptionError:
            if not auto or gamma < config.edge_floor:
                raise
            gamma /= 2.0
            continue
        break
    state = replace(state, eta=eta, gamma=gamma)
    ens = state.ensemble(support.actions)
    return (ens, state) if return_state else ens


def train(support: WeightedSupport, candidates, config: BoostConfig = BoostConfig(), method: str = "auto"):
    """AdaBoost for two actions, the multiclass variant otherwise."""
    if method == "auto":
        method = "adaboost" if len(support.actions) == 2 else "multiclass"
    if method == "adaboost":
        return adaboost_train(support, candidates, config, return_state=True)
    return multiclass_train(support, candidates, config, return_state=True)
