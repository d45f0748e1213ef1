"""Estimated rational labels from observed ex-post payoffs.

The ledger keeps, for every observed sender action, the number of
observations and the cumulative payoff each receiver action would have
earned.  The estimated label is the action with the largest cumulative
payoff; with two actions this is the sign rule "first action iff the
cumulative payoff difference is >= 0".
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .sampling import draw_plays, map_replications, replication_rng
from .stage_game import StageGame, SenderStrategy, as_point, rational_label


class NoDataError(LookupError):
    pass


class NonStrictLabelWarning(UserWarning):
    pass


@dataclass
class PayoffLedger:
    """Per-sender-action observation counts and cumulative payoff sums.

    ``first_hits[p]`` counts the records after which the estimated label at
    ``p`` was the first receiver action; ``first_hits / counts`` is the
    running frequency f_t^y(p).
    """

    actions: tuple
    states: tuple = ()
    points: list = field(default_factory=list)
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sums: np.ndarray = None
    state_counts: np.ndarray = None
    first_hits: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.actions = tuple(self.actions)
        self.states = tuple(self.states)
        if len(self.actions) < 2:
            raise ValueError("at least two receiver actions are required")
        n = len(self.points)
        if self.sums is None:
            self.sums = np.zeros((n, len(self.actions)))
        if self.state_counts is None:
            self.state_counts = np.zeros((n, len(self.states)), dtype=np.int64)
        self.points = [as_point(p) for p in self.points]
        self._index = {p: i for i, p in enumerate(self.points)}

    def __len__(self):
        return len(self.points)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row(self, p) -> int:
        p = as_point(p)
        if p not in self._index:
            raise NoDataError(f"no data at {p}")
        return self._index[p]

    def _ensure(self, points) -> np.ndarray:
        rows = []
        for p in points:
            p = as_point(p)
            i = self._index.get(p)
            if i is None:
                i = len(self.points)
                self._index[p] = i
                self.points.append(p)
                self.counts = np.append(self.counts, 0)
                self.first_hits = np.append(self.first_hits, 0)
                self.sums = np.vstack([self.sums, np.zeros((1, len(self.actions)))])
                self.state_counts = np.vstack(
                    [self.state_counts, np.zeros((1, len(self.states)), dtype=np.int64)])
            rows.append(i)
        return np.asarray(rows, dtype=int)

    def record(self, p, payoffs, state=None) -> "PayoffLedger":
        """Add one observation; ``payoffs`` has one entry per receiver action."""
        payoffs = np.asarray(payoffs, dtype=float)
        if payoffs.shape != (len(self.actions),):
            raise ValueError("payoff vector must cover every receiver action")
        if not np.all(np.isfinite(payoffs)):
            raise ValueError("payoffs must be finite")
        i = self._ensure([p])[0]
        self.counts[i] += 1
        self.sums[i] += payoffs
        if state is not None:
            self.state_counts[i, self.states.index(state)] += 1
        self.first_hits[i] += int(np.argmax(self.sums[i]) == 0)
        return self

    def record_many(self, points: Sequence, payoffs: np.ndarray, states: Sequence | None = None) -> "PayoffLedger":
        """Bulk version of :meth:`record`; sums match sequential recording up to rounding.

        The running label frequency is updated from per-record prefix sums,
        so it agrees with sequential recording as well.
        """
        payoffs = np.asarray(payoffs, dtype=float).reshape(len(points), len(self.actions))
        if not np.all(np.isfinite(payoffs)):
            raise ValueError("payoffs must be finite")
        rows = self._ensure(points)
        for i in np.unique(rows):
            sel = rows == i
            prefix = self.sums[i] + np.cumsum(payoffs[sel], axis=0)
            self.first_hits[i] += int(np.sum(np.argmax(prefix, axis=1) == 0))
        self.counts += np.bincount(rows, minlength=len(self.points))
        np.add.at(self.sums, rows, payoffs)
        if states is not None:
            s_idx = np.array([self.states.index(s) for s in states], dtype=int)
            np.add.at(self.state_counts, (rows, s_idx), 1)
        return self

    def to_json(self) -> str:
        return json.dumps({
            "actions": list(self.actions), "states": list(self.states),
            "points": [list(p) for p in self.points],
            "counts": self.counts.tolist(), "sums": self.sums.tolist(),
            "state_counts": self.state_counts.tolist(),
            "first_hits": self.first_hits.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "PayoffLedger":
        d = json.loads(text)
        n, k, s = len(d["points"]), len(d["actions"]), len(d["states"])
        return cls(tuple(d["actions"]), tuple(d["states"]), [tuple(p) for p in d["points"]],
                   np.asarray(d["counts"], dtype=np.int64),
                   np.asarray(d["sums"], dtype=float).reshape(n, k),
                   np.asarray(d["state_counts"], dtype=np.int64).reshape(n, s),
                   np.asarray(d["first_hits"], dtype=np.int64))


@dataclass(frozen=True)
class LabelEstimate:
    labels: dict
    first_frequency: dict
    counts: dict


def _argmax_first(sums: np.ndarray) -> int:
    # exact comparison: with two actions this is "first iff s0 - s1 >= 0"
    return int(np.argmax(sums))


def infer_label(ledger: PayoffLedger, p):
    """Estimated rational label at ``p``."""
    i = ledger.row(p)
    if ledger.counts[i] < 1:
        raise NoDataError(f"no data at {as_point(p)}")
    return ledger.actions[_argmax_first(ledger.sums[i])]


def estimate_labels(ledger: PayoffLedger) -> LabelEstimate:
    labels, freq, counts = {}, {}, {}
    for i, p in enumerate(ledger.points):
        if ledger.counts[i] < 1:
            continue
        labels[p] = ledger.actions[_argmax_first(ledger.sums[i])]
        freq[p] = float(ledger.first_hits[i] / ledger.counts[i])
        counts[p] = int(ledger.counts[i])
    return LabelEstimate(labels, freq, counts)


def empirical_posterior(ledger: PayoffLedger, p) -> np.ndarray:
    """Relative state frequencies among state-revealing records at ``p``."""
    i = ledger.row(p)
    c = ledger.state_counts[i]
    if c.sum() == 0:
        raise NoDataError(f"no state data at {as_point(p)}")
    return c / c.sum()


# --- large-deviation monitor -------------------------------------------------

@dataclass(frozen=True)
class LdpReport:
    """Label-estimation error per checkpoint.

    ``error_rate`` averages Pr(estimate != y^R) over support points with a
    strict rational label (weighted by how often each is played); it is NaN
    when no support point is strict.  ``error_rate_all`` covers every support
    point.  ``lambda_hat`` is None when fewer than two checkpoints have
    positive error.
    """

    checkpoints: tuple
    error_rate: np.ndarray
    error_rate_all: np.ndarray
    per_point: dict
    lambda_hat: float | None
    window: tuple
    replications: int
    warnings: tuple = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["checkpoint", "error_rate", "lambda_hat", "error_rate_all"])
        lam = "not estimable" if self.lambda_hat is None else f"{self.lambda_hat:.9g}"
        for t, e, ea in zip(self.checkpoints, self.error_rate, self.error_rate_all):
            w.writerow([t, f"{e:.9g}", lam, f"{ea:.9g}"])
        return buf.getvalue()


def fit_decay_rate(checkpoints: Sequence[int], errors: Sequence[float]):
    """Least-squares slope of -log(error) against t over positive-error checkpoints.

    Returns ``(lambda_hat, window)``; ``lambda_hat`` is None when fewer than
    two checkpoints have positive error.
    """
    t = np.asarray(checkpoints, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = np.isfinite(e) & (e > 0)
    if keep.sum() < 2:
        return None, tuple(int(x) for x in t[keep])
    slope = np.polyfit(t[keep], np.log(e[keep]), 1)[0]
    return float(-slope), tuple(int(x) for x in t[keep])


def _estimate_path(game: StageGame, sigma: SenderStrategy, rng, checkpoints, support) -> np.ndarray:
    """Estimated label index per (checkpoint, support point); default action before data."""
    T = max(checkpoints)
    theta, p_idx, _ = draw_plays(game, sigma, rng, T)
    rows = game.V[theta, p_idx, :]
    cps = np.asarray(checkpoints) - 1
    default = game.receiver_index(game.default_action)
    out = np.empty((len(checkpoints), len(support)), dtype=int)
    for g, j in enumerate(support):
        hit = p_idx == j
        cum = np.cumsum(np.where(hit[:, None], rows, 0.0), axis=0)[cps]
        n = np.cumsum(hit)[cps]
        out[:, g] = np.where(n > 0, np.argmax(cum, axis=1), default)
    return out


def ldp_monitor(game: StageGame, sigma: SenderStrategy, algorithm: str = "sign",
                checkpoints: Sequence[int] = (50, 100, 200, 400), replications: int = 2000,
                seed: int = 0) -> LdpReport:
    """Monte Carlo error of the label estimator at each checkpoint."""
    if algorithm != "sign":
        raise ValueError("only the cumulative-payoff ('sign') estimator is available")
    checkpoints = tuple(sorted(int(t) for t in checkpoints))
    if not checkpoints or checkpoints[0] < 1:
        raise ValueError("checkpoints must be positive")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    y = rational_label(game, sigma)
    support = list(sigma.support_indices)
    target = np.array([game.receiver_index(y[game.sender_actions[j]]) for j in support])
    strict = np.array([y.strict[game.sender_actions[j]] for j in support])
    mass = sigma.marginal[support]
    notes = []
    if not strict.all():
        bad = [game.sender_actions[j] for j, s in zip(support, strict) if not s]
        msg = f"rational label is not strict at {bad}; exponential decay is not guaranteed there"
        warnings.warn(msg, NonStrictLabelWarning, stacklevel=2)
        notes.append(msg)

    paths = map_replications(
        lambda i: _estimate_path(game, sigma, replication_rng(seed, i), checkpoints, support),
        replications)
    wrong = np.zeros((len(checkpoints), len(support)))
    for path in paths:
        wrong += path != target[None, :]
    per_point_rate = wrong / replications
    err_all = per_point_rate @ mass / mass.sum()
    if strict.any():
        err = per_point_rate[:, strict] @ mass[strict] / mass[strict].sum()
    else:
        err = np.full(len(checkpoints), math.nan)
    lam, window = fit_decay_rate(checkpoints, err)
    if lam is None:
        notes.append("decay rate not estimable")
    per_point = {game.sender_actions[j]: per_point_rate[:, g] for g, j in enumerate(support)}
    return LdpReport(checkpoints, err, err_all, per_point, lam, window, replications, tuple(notes))
