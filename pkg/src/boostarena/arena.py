"""The repeated algorithm game: a committed sender against a learning receiver.

Each round a state is drawn from the prior, the sender draws an action from
its strategy, and the receiver answers with the prediction of its current
classifier.  The full ex-post receiver payoff vector is recorded and the
classifier is retrained on a fixed schedule.  A classifier trained after
round ``r`` answers from round ``r + 1`` on.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .action_space import build_partition, cells_of
from .boosting import BoostConfig, train
from .sampling import (
    draw_plays,
    geometric_grid,
    map_replications,
    mean_and_se,
    replication_rng,
)
from .stage_game import (
    TOL,
    GameError,
    SenderStrategy,
    StageGame,
    rational_benchmark,
    rational_label,
)
from .weak_learn import (
    WeightedSupport,
    enumerate_candidates,
    fit_best,
    measure_edge,
    prediction_matrix,
)

KINDS = ("tau_A", "tau_Ahat", "tau_lambda_Ahat", "fixed_single_threshold")


class InfeasibleExploitError(GameError):
    pass


@dataclass(frozen=True)
class ReceiverAlgorithm:
    """How the receiver labels its data and when it retrains.

    ``tau_A`` boosts on the true rational labels, ``tau_Ahat`` on labels
    inferred from cumulative payoffs and ``tau_lambda_Ahat`` on inferred
    labels pooled over cells of width ``lam``.  ``fixed_single_threshold``
    fits one threshold rule weighted by observed frequencies, to inferred
    labels or (``labels="known"``) to the true ones.
    """

    kind: str = "tau_Ahat"
    boosting: BoostConfig = field(default_factory=BoostConfig)
    retrain: str = "geometric"
    first_retrain: int = 10
    lam: float | None = None
    labels: str = "inferred"
    method: str = "auto"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown receiver kind {self.kind!r}; expected one of {KINDS}")
        if self.retrain not in ("geometric", "every"):
            raise ValueError("retrain must be 'geometric' or 'every'")
        if self.first_retrain < 1:
            raise ValueError("first_retrain must be >= 1")
        if self.kind == "tau_lambda_Ahat" and not (self.lam and self.lam > 0):
            raise ValueError("tau_lambda_Ahat needs a positive cell width lam")
        if self.labels not in ("inferred", "known"):
            raise ValueError("labels must be 'inferred' or 'known'")

    def retrain_rounds(self, rounds: int) -> list:
        if self.retrain == "every":
            return list(range(self.first_retrain, rounds))
        return [r for r in geometric_grid(self.first_retrain, rounds) if r < rounds]

    @property
    def uses_known_labels(self) -> bool:
        return self.kind == "tau_A" or (self.kind == "fixed_single_threshold" and self.labels == "known")


def default_checkpoints(rounds: int, first: int = 50) -> list:
    return geometric_grid(min(first, rounds), rounds)


@dataclass(frozen=True)
class LabelTargets:
    """Rational replies of a strategy laid out over the game's sender actions."""

    reply: np.ndarray
    best: np.ndarray
    strict: np.ndarray
    mass: np.ndarray

    @classmethod
    def of(cls, game: StageGame, sigma: SenderStrategy) -> "LabelTargets":
        y = rational_label(game, sigma)
        n, k = len(game.sender_actions), len(game.receiver_actions)
        reply = np.full(n, game.receiver_index(game.default_action))
        best = np.ones((n, k), dtype=bool)
        strict = np.zeros(n, dtype=bool)
        for j in sigma.support_indices:
            p = game.sender_actions[j]
            reply[j] = game.receiver_index(y.actions[p])
            best[j] = [a in y.best_set[p] for a in game.receiver_actions]
            strict[j] = y.strict[p]
        return cls(reply, best, strict, sigma.marginal.copy())

    def disagreement(self, table: np.ndarray):
        """(single-valued, strict-points, set-valued) misclassification probabilities."""
        wrong = table != self.reply
        single = float(self.mass @ wrong)
        outside = ~self.best[np.arange(len(table)), table]
        as_set = float(self.mass @ outside)
        m = self.mass * self.strict
        strict = float(m @ wrong / m.sum()) if m.sum() > TOL else math.nan
        return single, strict, as_set


@dataclass(frozen=True)
class RunMetrics:
    checkpoints: tuple
    misclass: np.ndarray
    Us_avg: np.ndarray
    Ur_avg: np.ndarray
    min_edge: np.ndarray
    misclass_strict: np.ndarray
    misclass_set: np.ndarray
    final_table: tuple
    sender_payoffs: np.ndarray | None = None
    receiver_payoffs: np.ndarray | None = None

    COLUMNS = ("checkpoint", "misclass", "Us_avg", "Ur_avg", "min_edge",
               "misclass_strict", "misclass_set")

    def rows(self):
        for i, t in enumerate(self.checkpoints):
            yield (t, self.misclass[i], self.Us_avg[i], self.Ur_avg[i], self.min_edge[i],
                   self.misclass_strict[i], self.misclass_set[i])

    def to_csv(self) -> str:
        return _csv(self.COLUMNS, self.rows())


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([x if isinstance(x, str) else _fmt(x) for x in r])
    return buf.getvalue()


class _Learner:
    """Turns the ledger into a lookup table of predicted action indices."""

    def __init__(self, game: StageGame, receiver: ReceiverAlgorithm, targets: LabelTargets):
        self.game = game
        self.receiver = receiver
        self.targets = targets
        self.points = np.asarray(game.sender_actions, dtype=float)
        if receiver.kind == "tau_lambda_Ahat":
            bounds = list(zip(self.points.min(axis=0), self.points.max(axis=0)))
            self.partition = build_partition(bounds, receiver.lam)
            self.cells = cells_of(self.partition, game.sender_actions)

    def labels(self, sums: np.ndarray, counts: np.ndarray, observed: np.ndarray) -> np.ndarray:
        if self.receiver.uses_known_labels:
            return self.targets.reply[observed]
        if self.receiver.kind == "tau_lambda_Ahat":
            pooled = np.zeros((self.partition.n_cells, sums.shape[1]))
            np.add.at(pooled, self.cells[observed], sums[observed])
            return np.argmax(pooled[self.cells[observed]], axis=1)
        return np.argmax(sums[observed], axis=1)

    def fit(self, sums: np.ndarray, counts: np.ndarray):
        """Returns (prediction table over all sender actions, minimum round edge)."""
        game, rcv = self.game, self.receiver
        observed = np.flatnonzero(counts > 0)
        A = game.receiver_actions
        pts = [game.sender_actions[j] for j in observed]
        labels = [A[i] for i in self.labels(sums, counts, observed)]
        cands = enumerate_candidates(pts, A)
        if rcv.kind == "fixed_single_threshold":
            w = counts[observed] / counts[observed].sum()
            support = WeightedSupport(tuple(pts), w, tuple(labels), A)
            preds = prediction_matrix(cands, pts, A)
            h, _ = fit_best(support, cands, preds)
            edge = measure_edge(support, cands, preds).edge
            table = prediction_matrix([h], game.sender_actions, A)[0]
            return table, edge
        support = WeightedSupport.uniform(tuple(pts), tuple(labels), A)
        ens, state = train(support, cands, rcv.boosting, rcv.method)
        edge = min(r.edge for r in state.round_log)
        return ens.predict_indices(game.sender_actions), edge


def _simulate(game: StageGame, sigma: SenderStrategy, receiver: ReceiverAlgorithm, rounds: int,
              rng: np.random.Generator, checkpoints: Sequence[int], targets: LabelTargets,
              keep_trace: bool = False) -> RunMetrics:
    theta, pj, ty = draw_plays(game, sigma, rng, rounds)
    rational = game.rational_type_mask[ty]
    learner = _Learner(game, receiver, targets)
    n, k = len(game.sender_actions), len(game.receiver_actions)
    table = np.full(n, game.receiver_index(game.default_action))
    sums = np.zeros((n, k))
    counts = np.zeros(n, dtype=np.int64)
    us = np.empty(rounds)
    ur = np.empty(rounds)
    retrains = set(receiver.retrain_rounds(rounds))
    cps = set(checkpoints)
    out = {c: [] for c in RunMetrics.COLUMNS[1:]}
    min_edge = math.nan
    start = 0
    for e in sorted(retrains | cps):
        sl = slice(start, e)
        a = np.where(rational[sl], targets.reply[pj[sl]], table[pj[sl]])
        us[sl] = game.U[theta[sl], pj[sl], a, ty[sl]]
        ur[sl] = game.V[theta[sl], pj[sl], a]
        np.add.at(sums, pj[sl], game.V[theta[sl], pj[sl], :])
        counts += np.bincount(pj[sl], minlength=n)
        start = e
        if e in retrains:
            table, edge = learner.fit(sums, counts)
            min_edge = edge if math.isnan(min_edge) else min(min_edge, edge)
        if e in cps:
            single, strict, as_set = targets.disagreement(table)
            out["misclass"].append(single)
            out["misclass_strict"].append(strict)
            out["misclass_set"].append(as_set)
            out["Us_avg"].append(float(np.mean(us[:e])))
            out["Ur_avg"].append(float(np.mean(ur[:e])))
            out["min_edge"].append(min_edge)
    arrays = {key: np.asarray(v, dtype=float) for key, v in out.items()}
    return RunMetrics(tuple(sorted(cps)), final_table=tuple(int(x) for x in table),
                      sender_payoffs=us if keep_trace else None,
                      receiver_payoffs=ur if keep_trace else None, **arrays)


def _check_inputs(game, sigma, rounds, checkpoints):
    if sigma.game is not game:
        raise GameError("strategy belongs to a different game")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    checkpoints = sorted(set(int(c) for c in (checkpoints or default_checkpoints(rounds))))
    if checkpoints[0] < 1 or checkpoints[-1] > rounds:
        raise ValueError("checkpoints must lie in [1, rounds]")
    return checkpoints


def run_algorithm_game(game: StageGame, sigma: SenderStrategy, receiver: ReceiverAlgorithm,
                       rounds: int, seed: int, checkpoints: Sequence[int] | None = None,
                       keep_trace: bool = False) -> RunMetrics:
    """One seeded run; identical inputs give identical metrics."""
    checkpoints = _check_inputs(game, sigma, rounds, checkpoints)
    return _simulate(game, sigma, receiver, rounds, np.random.default_rng(seed), checkpoints,
                     LabelTargets.of(game, sigma), keep_trace)


@dataclass(frozen=True)
class ReplicatedMetrics:
    """Per-replication metrics stacked as (replication, checkpoint) arrays."""

    checkpoints: tuple
    runs: tuple

    def stack(self, name: str) -> np.ndarray:
        return np.vstack([getattr(r, name) for r in self.runs])

    def mean(self, name: str) -> np.ndarray:
        return self.stack(name).mean(axis=0)

    def se(self, name: str) -> np.ndarray:
        x = self.stack(name)
        if len(x) < 2:
            return np.full(x.shape[1], math.nan)
        return x.std(axis=0, ddof=1) / math.sqrt(len(x))

    def to_csv(self) -> str:
        cols = RunMetrics.COLUMNS[1:]
        means = [self.mean(c) for c in cols]
        ses = [self.se(c) for c in ("misclass", "Us_avg", "Ur_avg")]
        header = RunMetrics.COLUMNS + ("misclass_se", "Us_se", "Ur_se")
        rows = ((t, *[m[i] for m in means], *[s[i] for s in ses])
                for i, t in enumerate(self.checkpoints))
        return _csv(header, rows)


def run_replications(game: StageGame, sigma: SenderStrategy, receiver: ReceiverAlgorithm,
                     rounds: int, replications: int, seed: int,
                     checkpoints: Sequence[int] | None = None) -> ReplicatedMetrics:
    """Replication ``i`` is seeded with splitmix64(seed xor i)."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    checkpoints = _check_inputs(game, sigma, rounds, checkpoints)
    targets = LabelTargets.of(game, sigma)
    runs = map_replications(
        lambda i: _simulate(game, sigma, receiver, rounds, replication_rng(seed, i),
                            checkpoints, targets),
        replications)
    return ReplicatedMetrics(tuple(checkpoints), tuple(runs))


# --- exploitation strategy -----------------------------------------------------

@dataclass(frozen=True)
class ExploitStrategy:
    """Three-point pricing rule that no single threshold can answer rationally.

    State L posts ``vL - eps_L`` with probability ``1 - eps`` and ``p_tilde``
    with probability ``eps``; state H always posts ``vH - eps_H``.  ``eta``
    is the buyer's loss from buying at ``p_tilde`` in state L.
    """

    game: StageGame
    sigma: SenderStrategy
    eps: float
    eps_L: float
    eps_H: float
    p_tilde: float
    eta: float
    interval: tuple

    @property
    def prices(self) -> tuple:
        vL, vH = self.game.params["vL"], self.game.params["vH"]
        return (vL - self.eps_L, self.p_tilde, vH - self.eps_H)

    def to_dict(self) -> dict:
        return {"eps": self.eps, "eps_L": self.eps_L, "eps_H": self.eps_H,
                "p_tilde": self.p_tilde, "eta": self.eta, "interval": list(self.interval),
                "prices": list(self.prices)}


def extend_prices(game: StageGame, prices) -> StageGame:
    """``game`` with ``prices`` added to its sender actions (sorted, deduplicated)."""
    merged = sorted(set(game.sender_actions) | {(float(p),) for p in prices})
    return game.with_sender_actions(merged)


def build_exploit_strategy(game: StageGame, eps_H: float = 0.01, eps_L: float = 0.05,
                           p_tilde: float = 1.9, eps: float | None = None) -> ExploitStrategy:
    """Exploitation strategy on ``game`` extended by its three prices.

    ``eps`` defaults to the midpoint of the feasible open interval.
    """
    if game.name != "rubinstein":
        raise GameError("exploitation strategy needs a Rubinstein-form game")
    vL, vH = game.params["vL"], game.params["vH"]
    piL, piH = game.prior
    if not (eps_H > 0 and eps_L > 0):
        raise InfeasibleExploitError("infeasible exploit parameters: eps_H and eps_L must be positive")
    if not vL < p_tilde < vH:
        raise InfeasibleExploitError("infeasible exploit parameters: p_tilde must lie in (vL, vH)")
    if not piH * eps_H < piL * eps_L:
        raise InfeasibleExploitError("infeasible exploit parameters: need pi_H eps_H < pi_L eps_L")
    eta = p_tilde - vL
    lo = eps_L / (eps_L + eta)
    hi = (piL * eps_L - piH * eps_H) / (piL * eps_L)
    if not lo < hi:
        raise InfeasibleExploitError(f"infeasible exploit parameters: empty interval ({lo:.6g}, {hi:.6g})")
    if eps is None:
        eps = (lo + hi) / 2.0
    elif not lo < eps < hi:
        raise InfeasibleExploitError(f"infeasible exploit parameters: eps must lie in ({lo:.6g}, {hi:.6g})")
    low_price, high_price = vL - eps_L, vH - eps_H
    if not low_price < p_tilde < high_price:
        raise InfeasibleExploitError("infeasible exploit parameters: need vL - eps_L < p_tilde < vH - eps_H")
    ext = extend_prices(game, (low_price, p_tilde, high_price))
    sigma = SenderStrategy.from_dict(ext, {"L": {low_price: 1.0 - eps, p_tilde: eps},
                                           "H": {high_price: 1.0}})
    return ExploitStrategy(ext, sigma, float(eps), eps_L, eps_H, p_tilde, float(eta),
                           (float(lo), float(hi)))


# --- sender best response over candidates -------------------------------------

@dataclass(frozen=True)
class RankedCandidate:
    index: int
    name: str
    us_mean: float
    us_se: float


def best_response_search(game: StageGame, receiver: ReceiverAlgorithm, candidates: Sequence,
                         rounds: int, replications: int, seed: int, names: Sequence[str] | None = None):
    """Rank candidate strategies by simulated long-run sender payoff.

    Every candidate sees the same replication seeds (common random numbers).
    Ties keep the input order.
    """
    if len(candidates) == 0:
        raise ValueError("candidate list is empty")
    names = list(names) if names is not None else [f"candidate_{i}" for i in range(len(candidates))]
    ranked = []
    for i, sigma in enumerate(candidates):
        res = run_replications(game, sigma, receiver, rounds, replications, seed, [rounds])
        m, se = mean_and_se(res.stack("Us_avg")[:, -1])
        ranked.append(RankedCandidate(i, names[i], m, se))
    return sorted(ranked, key=lambda r: -r.us_mean)


# --- emulation ---------------------------------------------------------------

@dataclass(frozen=True)
class EmulationVerdict:
    emulates: bool
    strategy_matches: bool
    measure: str
    tolerance: float
    confidence: float
    share_within: float
    mean_disagreement: float
    replications: int
    rounds: int

    def to_json(self) -> str:
        d = dict(self.__dict__)
        d["verdict"] = "emulates" if self.emulates else "does not emulate"
        return json.dumps(d, sort_keys=True)


MEASURES = {"single": 0, "strict": 1, "set": 2}


def emulation_check(game: StageGame, sigma: SenderStrategy, receiver: ReceiverAlgorithm,
                    rounds: int, tolerance: float = 0.05, confidence: float = 0.05,
                    replications: int = 500, seed: int = 0, measure: str = "set",
                    sigma_r: SenderStrategy | None = None) -> EmulationVerdict:
    """Does (sigma, receiver) reproduce the rational benchmark pair?

    Emulation requires ``sigma`` to equal the benchmark strategy and the
    final classifier to disagree with the benchmark's rational labels by
    less than ``tolerance`` in at least a ``1 - confidence`` share of runs.
    ``measure`` picks the disagreement notion: ``single`` compares with the
    chosen rational reply, ``strict`` restricts to strict-label points and
    ``set`` accepts any best reply.
    """
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {sorted(MEASURES)}")
    if sigma_r is None:
        sigma_r = rational_benchmark(game)
    matches = sigma.is_close(sigma_r)
    ref = LabelTargets.of(sigma_r.game, sigma_r)
    if sigma_r.game is not game:
        raise GameError("benchmark strategy belongs to a different game")
    res = run_replications(game, sigma, receiver, rounds, replications, seed, [rounds])
    d = np.array([ref.disagreement(np.asarray(r.final_table))[MEASURES[measure]] for r in res.runs])
    share = float(np.mean(d < tolerance)) if np.all(np.isfinite(d)) else math.nan
    ok = bool(matches and share >= 1.0 - confidence)
    return EmulationVerdict(ok, bool(matches), measure, tolerance, confidence, share,
                            float(np.mean(d)), replications, rounds)


# --- exploitation contrast ----------------------------------------------------

@dataclass(frozen=True)
class ContrastTable:
    """Sender payoffs for {rational, exploit} x {single threshold, boosted}."""

    rows: tuple  # (strategy, receiver, mean, se)
    exploit: ExploitStrategy
    rounds: int
    replications: int

    def value(self, strategy: str, receiver: str):
        for s, r, m, se in self.rows:
            if s == strategy and r == receiver:
                return m, se
        raise KeyError((strategy, receiver))

    def separation(self, receiver: str, better: str, worse: str) -> float:
        """Gap between two strategies against ``receiver`` in standard errors."""
        m1, s1 = self.value(better, receiver)
        m2, s2 = self.value(worse, receiver)
        return (m1 - m2) / math.sqrt(s1 * s1 + s2 * s2)

    def to_csv(self) -> str:
        return _csv(("strategy", "receiver", "Us_mean", "Us_se"), self.rows)


def contrast_table(game: StageGame | None = None, rounds: int = 2000, replications: int = 500,
                   seed: int = 0, eps_H: float = 0.01, eps_L: float = 0.05,
                   p_tilde: float = 1.9, boosting: BoostConfig | None = None) -> ContrastTable:
    """Rational versus exploitation strategy against both receivers."""
    from .stage_game import canonical_r1

    game = canonical_r1() if game is None else game
    ex = build_exploit_strategy(game, eps_H, eps_L, p_tilde)
    g = ex.game
    vL, vH = g.params["vL"], g.params["vH"]
    sigma_r = SenderStrategy.from_dict(g, {"L": {vL: 1.0}, "H": {vH: 1.0}})
    cfg = boosting or BoostConfig()
    receivers = {"threshold": ReceiverAlgorithm("fixed_single_threshold", cfg),
                 "boosted": ReceiverAlgorithm("tau_Ahat", cfg)}
    rows = []
    for s_name, sigma in (("rational", sigma_r), ("exploit", ex.sigma)):
        for r_name, rcv in receivers.items():
            res = run_replications(g, sigma, rcv, rounds, replications, seed, [rounds])
            m, se = mean_and_se(res.stack("Us_avg")[:, -1])
            rows.append((s_name, r_name, m, se))
    return ContrastTable(tuple(rows), ex, rounds, replications)
