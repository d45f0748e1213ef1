"""One-shot sender-receiver games, Bayesian posteriors and the rational label.

A :class:`StageGame` is finite: a finite state space with a prior, a finite
list of sender actions (points in R^n) and a finite list of receiver actions.
Payoffs are supplied as callables and tabulated once at construction, so
every downstream computation works on dense numpy arrays.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

TOL = 1e-9

Point = tuple  # a sender action, always stored as a tuple of floats


class GameError(ValueError):
    """Raised for malformed games, strategies or builtin parameters."""


def as_point(p) -> Point:
    if isinstance(p, (int, float, np.integer, np.floating)):
        return (float(p),)
    return tuple(float(x) for x in p)


@dataclass(frozen=True)
class StateSpace:
    states: tuple
    prior: np.ndarray

    def __post_init__(self):
        prior = np.asarray(self.prior, dtype=float)
        if len(self.states) == 0:
            raise GameError("state space must be nonempty")
        if prior.shape != (len(self.states),):
            raise GameError("prior length must match the number of states")
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > TOL:
            raise GameError("prior must be a probability vector")
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "prior", prior)

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class ReceiverType:
    weight: float
    kind: str  # "algorithmic" or "rational"


@dataclass(frozen=True, eq=False)
class StageGame:
    """Finite stage game with tabulated payoffs.

    ``sender_payoff`` is called as ``u(theta, p, a)``, or ``u(theta, p, a, i)``
    when ``receiver_types`` is given (``i`` indexes the receiver type).
    ``receiver_payoff`` is always ``v(theta, p, a)``.

    ``U`` has shape (states, sender actions, receiver actions, receiver types)
    and ``V`` has shape (states, sender actions, receiver actions).
    """

    state_space: StateSpace
    sender_actions: tuple
    receiver_actions: tuple
    sender_payoff: Callable
    receiver_payoff: Callable
    receiver_types: tuple | None = None
    default_action: Any = None
    name: str = "custom"
    params: Mapping = field(default_factory=dict)
    U: np.ndarray = field(init=False, repr=False)
    V: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = tuple(as_point(p) for p in self.sender_actions)
        A = tuple(self.receiver_actions)
        if len(P) < 1:
            raise GameError("at least one sender action is required")
        if len(set(P)) != len(P):
            raise GameError("duplicate sender actions")
        if len(A) < 2:
            raise GameError("at least two receiver actions are required")
        if len({len(p) for p in P}) != 1:
            raise GameError("sender actions must share one dimension")
        types = self.receiver_types
        if types is not None:
            types = tuple(ReceiverType(float(w), str(k)) for w, k in types)
            if abs(sum(t.weight for t in types) - 1.0) > TOL or any(t.weight < 0 for t in types):
                raise GameError("receiver type weights must sum to 1")
            for t in types:
                if t.kind not in ("algorithmic", "rational"):
                    raise GameError(f"unknown receiver kind {t.kind!r}")
        n_types = 1 if types is None else len(types)
        states = self.state_space.states
        U = np.empty((len(states), len(P), len(A), n_types))
        V = np.empty((len(states), len(P), len(A)))
        for (s, th), (j, p), (k, a) in itertools.product(enumerate(states), enumerate(P), enumerate(A)):
            V[s, j, k] = self.receiver_payoff(th, _unwrap(p), a)
            for i in range(n_types):
                if types is None:
                    U[s, j, k, i] = self.sender_payoff(th, _unwrap(p), a)
                else:
                    U[s, j, k, i] = self.sender_payoff(th, _unwrap(p), a, i)
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(V))):
            raise GameError("payoffs must be finite")
        default = A[0] if self.default_action is None else self.default_action
        if default not in A:
            raise GameError("default action must be a receiver action")
        object.__setattr__(self, "sender_actions", P)
        object.__setattr__(self, "receiver_actions", A)
        object.__setattr__(self, "receiver_types", types)
        object.__setattr__(self, "default_action", default)
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    @property
    def states(self):
        return self.state_space.states

    @property
    def prior(self):
        return self.state_space.prior

    @property
    def dim(self) -> int:
        return len(self.sender_actions[0])

    @property
    def type_weights(self) -> np.ndarray:
        if self.receiver_types is None:
            return np.ones(1)
        return np.array([t.weight for t in self.receiver_types])

    @property
    def rational_type_mask(self) -> np.ndarray:
        if self.receiver_types is None:
            return np.zeros(1, dtype=bool)
        return np.array([t.kind == "rational" for t in self.receiver_types])

    def action_index(self, p) -> int:
        try:
            return self.sender_actions.index(as_point(p))
        except ValueError:
            raise GameError(f"{p!r} is not a sender action of this game") from None

    def receiver_index(self, a) -> int:
        try:
            return self.receiver_actions.index(a)
        except ValueError:
            raise GameError(f"{a!r} is not a receiver action of this game") from None

    def with_sender_actions(self, actions) -> "StageGame":
        """Same game over a different sender action list (payoffs re-tabulated)."""
        return StageGame(
            state_space=self.state_space,
            sender_actions=tuple(actions),
            receiver_actions=self.receiver_actions,
            sender_payoff=self.sender_payoff,
            receiver_payoff=self.receiver_payoff,
            receiver_types=None if self.receiver_types is None
            else tuple((t.weight, t.kind) for t in self.receiver_types),
            default_action=self.default_action,
            name=self.name,
            params=self.params,
        )


def _unwrap(p: Point):
    return p[0] if len(p) == 1 else p


@dataclass(frozen=True, eq=False)
class SenderStrategy:
    """Per-state distributions over the sender actions of ``game``.

    ``probs[s, j]`` is sigma(p_j : theta_s).
    """

    game: StageGame
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        expected = (len(self.game.states), len(self.game.sender_actions))
        if probs.shape != expected:
            raise GameError(f"strategy table must have shape {expected}")
        if np.any(probs < -TOL) or np.any(np.abs(probs.sum(axis=1) - 1.0) > TOL):
            raise GameError("each per-state distribution must sum to 1")
        object.__setattr__(self, "probs", np.clip(probs, 0.0, None))

    @classmethod
    def from_dict(cls, game: StageGame, table: Mapping) -> "SenderStrategy":
        """Build from ``{state: {price: prob}}``; unspecified entries are zero."""
        probs = np.zeros((len(game.states), len(game.sender_actions)))
        for th, dist in table.items():
            s = game.states.index(th)
            for p, q in dist.items():
                probs[s, game.action_index(p)] += q
        return cls(game, probs)

    @property
    def marginal(self) -> np.ndarray:
        """Unconditional probability of each sender action."""
        return self.game.prior @ self.probs

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.marginal > TOL)

    @property
    def support(self) -> list:
        return [self.game.sender_actions[j] for j in self.support_indices]

    @property
    def G(self) -> int:
        return len(self.support_indices)

    def is_close(self, other: "SenderStrategy", tol: float = 1e-6) -> bool:
        """Equal as distributions over points (game action lists may differ)."""
        def as_map(sig):
            out = {}
            for s in range(len(sig.game.states)):
                for j in np.flatnonzero(sig.probs[s] > tol):
                    out[(s, sig.game.sender_actions[j])] = sig.probs[s, j]
            return out
        a, b = as_map(self), as_map(other)
        if a.keys() != b.keys():
            return False
        return all(abs(a[k] - b[k]) <= tol for k in a)


@dataclass(frozen=True)
class Posterior:
    probs: np.ndarray
    on_path: bool


@dataclass(frozen=True)
class RationalLabel:
    """Rational replies on the support of a strategy.

    ``actions[p]`` is the chosen reply; ``best_set[p]`` lists every action
    attaining the maximal posterior-expected receiver payoff.
    """

    actions: dict
    margin: dict
    strict: dict
    best_set: dict

    def __getitem__(self, p):
        return self.actions[as_point(p)]


def posterior(game: StageGame, sigma: SenderStrategy, p) -> Posterior:
    j = game.action_index(p)
    joint = game.prior * sigma.probs[:, j]
    total = joint.sum()
    if total <= TOL:
        return Posterior(game.prior.copy(), on_path=False)
    return Posterior(joint / total, on_path=True)


def _label_from_values(values, sender_values, tie_break):
    best = values.max()
    ties = np.flatnonzero(values >= best - TOL)
    if len(ties) == 1 or tie_break == "index":
        choice = int(ties[0])
    else:
        # sender-preferred among the receiver's best replies, then lowest index
        sv = sender_values[ties]
        choice = int(ties[np.flatnonzero(sv >= sv.max() - TOL)[0]])
    rest = np.delete(values, choice)
    margin = float(best - rest.max())
    return choice, max(margin, 0.0), ties


def label_at(game: StageGame, sigma: SenderStrategy, p, tie_break: str = "sender"):
    """Reply index, margin and best-reply index set at a single sender action."""
    post = posterior(game, sigma, p).probs
    j = game.action_index(p)
    values = post @ game.V[:, j, :]
    sender_values = post @ (game.U[:, j, :, :] @ game.type_weights)
    return _label_from_values(values, sender_values, tie_break)


def rational_label(game: StageGame, sigma: SenderStrategy, tie_break: str = "sender") -> RationalLabel:
    """Rational receiver reply at every support point of ``sigma``.

    Exact ties in the receiver's posterior-expected payoff are resolved in
    the sender's favour (type-weighted expected sender payoff), then by the
    lowest receiver-action index.  ``tie_break="index"`` skips the sender
    step; that is the reply a ``>= 0`` sign-rule estimator converges to.
    """
    if tie_break not in ("sender", "index"):
        raise ValueError("tie_break must be 'sender' or 'index'")
    actions, margin, strict, best = {}, {}, {}, {}
    for j in sigma.support_indices:
        p = game.sender_actions[j]
        k, m, ties = label_at(game, sigma, p, tie_break)
        actions[p] = game.receiver_actions[k]
        margin[p] = m
        strict[p] = m > TOL
        best[p] = tuple(game.receiver_actions[t] for t in ties)
    return RationalLabel(actions, margin, strict, best)


def sender_expected_payoff(game: StageGame, sigma: SenderStrategy, reply: Mapping) -> float:
    """Ex-ante sender payoff when algorithmic receivers answer with ``reply``.

    Rational receiver types (if the game has a type mix) answer with y^R.
    """
    reply = {as_point(p): a for p, a in reply.items()}
    support = sigma.support_indices
    missing = [game.sender_actions[j] for j in support if game.sender_actions[j] not in reply]
    if missing:
        raise GameError(f"incomplete reply: no action for {missing}")
    weights = game.type_weights
    rational = game.rational_type_mask
    y_r = rational_label(game, sigma).actions if rational.any() else {}
    total = 0.0
    for j in support:
        p = game.sender_actions[j]
        a_alg = game.receiver_index(reply[p])
        mass = game.prior * sigma.probs[:, j]
        for i, w in enumerate(weights):
            k = game.receiver_index(y_r[p]) if rational[i] else a_alg
            total += w * float(mass @ game.U[:, j, k, i])
    return total


def pure_strategies(game: StageGame):
    """Every deterministic strategy (one sender action per state)."""
    n_s, n_p = len(game.states), len(game.sender_actions)
    for choice in itertools.product(range(n_p), repeat=n_s):
        probs = np.zeros((n_s, n_p))
        probs[np.arange(n_s), choice] = 1.0
        yield SenderStrategy(game, probs)


def rational_benchmark(game: StageGame) -> SenderStrategy:
    """Sender best reply against a Bayesian receiver.

    Rubinstein games use the closed form; other games are solved by
    enumerating pure strategies (first maximiser in enumeration order).
    """
    if game.name == "rubinstein":
        vL, vH = game.params["vL"], game.params["vH"]
        return SenderStrategy.from_dict(game, {"L": {vL: 1.0}, "H": {vH: 1.0}})
    best, best_val = None, -math.inf
    for sigma in pure_strategies(game):
        y = rational_label(game, sigma).actions
        val = sender_expected_payoff(game, sigma, y)
        if val > best_val + TOL:
            best, best_val = sigma, val
    return best


# --- builtin games -----------------------------------------------------------

BUY, NOT_BUY = 1, -1


def make_rubinstein(vL=1.0, vH=2.0, cL=0.5, c1=3.0, c2=1.5, r=0.5,
                    prices=(0.9, 1.0, 1.4, 1.9, 2.0), prior=(0.5, 0.5),
                    mixed: bool = False) -> StageGame:
    """Monopoly market with lemons.

    States are ``"L"`` and ``"H"``; receiver actions are buy (+1, listed
    first) and not-buy (-1).  With ``mixed=False`` the seller faces a single
    algorithmic buyer population and the cost of serving in state H is the
    type-averaged ``r*c1 + (1-r)*c2``.  With ``mixed=True`` type 1 (weight r)
    is algorithmic and type 2 (weight 1-r) is rational.
    """
    checks = [
        (c1 > vH, "c1 > vH violated"),
        (vH > c2, "vH > c2 violated"),
        (c2 > vL, "c2 > vL violated"),
        (vL > cL, "vL > cL violated"),
        (0 < r < 1, "0 < r < 1 violated"),
        (r * c1 + (1 - r) * c2 > vH, "severe lemon violated"),
    ]
    for ok, msg in checks:
        if not ok:
            raise GameError(msg)
    values = {"L": vL, "H": vH}
    avg_cost = r * c1 + (1 - r) * c2

    def v(theta, p, a):
        return values[theta] - p if a == BUY else 0.0

    if mixed:
        def u(theta, p, a, i):
            if a != BUY:
                return 0.0
            return p - (cL if theta == "L" else (c1, c2)[i])
        types = ((r, "algorithmic"), (1 - r, "rational"))
    else:
        def u(theta, p, a):
            if a != BUY:
                return 0.0
            return p - (cL if theta == "L" else avg_cost)
        types = None

    return StageGame(
        state_space=StateSpace(("L", "H"), prior),
        sender_actions=tuple(prices),
        receiver_actions=(BUY, NOT_BUY),
        sender_payoff=u,
        receiver_payoff=v,
        receiver_types=types,
        default_action=NOT_BUY,
        name="rubinstein",
        params=dict(vL=vL, vH=vH, cL=cL, c1=c1, c2=c2, r=r, mixed=mixed),
    )


ACCEPT, REJECT = 1, -1


def make_insurance(f: Callable = math.sqrt, income=4.0, loss=3.0, risk_probs=(0.1, 0.9),
                   contracts=((3.0, 1.0), (1.0, 0.2), (2.0, 1.0), (0.0, 0.0)),
                   prior=(0.5, 0.5)) -> StageGame:
    """Informed-principal insurance game; sender actions are contracts (x, q)."""
    lo, hi = risk_probs
    if not 0 < lo < hi < 1:
        raise GameError("risk probabilities must satisfy 0 < theta_L < theta_H < 1")

    def util(w):
        if w < 0:
            raise GameError(f"utility domain: wealth {w} is negative")
        return f(w)

    def u(theta, p, a):
        x, q = p
        if a == ACCEPT:
            return (1 - theta) * util(income - q) + theta * util(income - q - loss + x)
        return (1 - theta) * util(income) + theta * util(income - loss)

    def v(theta, p, a):
        x, q = p
        return q - theta * x if a == ACCEPT else 0.0

    return StageGame(
        state_space=StateSpace((lo, hi), prior),
        sender_actions=tuple(tuple(c) for c in contracts),
        receiver_actions=(ACCEPT, REJECT),
        sender_payoff=u,
        receiver_payoff=v,
        default_action=REJECT,
        name="insurance",
        params=dict(income=income, loss=loss, risk_probs=tuple(risk_probs)),
    )


def wage_grid(theta_values, spacing) -> tuple:
    if spacing <= 0:
        raise GameError("wage grid spacing must be positive")
    top = 1.0 + max(theta_values)
    n = int(math.floor(top / spacing + TOL))
    return tuple(round(k * spacing, 12) for k in range(n + 1))


def make_signaling(theta_values=(0.0, 1.0), education_levels=(0.0, 1.0, 2.0),
                   spacing=0.5, prior=None) -> StageGame:
    """Spence signalling with a discretised wage grid {0, D, 2D, ..., 1 + max theta}."""
    thetas = tuple(float(t) for t in theta_values)
    if prior is None:
        prior = np.full(len(thetas), 1.0 / len(thetas))

    def u(theta, p, a):
        return a - p / (theta + 1.0)

    def v(theta, p, a):
        return -(theta - a) ** 2

    return StageGame(
        state_space=StateSpace(thetas, prior),
        sender_actions=tuple(education_levels),
        receiver_actions=wage_grid(thetas, spacing),
        sender_payoff=u,
        receiver_payoff=v,
        name="signaling",
        params=dict(spacing=spacing),
    )


def canonical_r1(**overrides) -> StageGame:
    return make_rubinstein(**overrides)


BUILTINS = {
    "rubinstein": make_rubinstein,
    "insurance": make_insurance,
    "signaling": make_signaling,
}


def builtin_game(name: str, **params) -> StageGame:
    if name not in BUILTINS:
        raise GameError(f"unknown builtin game {name!r}")
    return BUILTINS[name](**params)


# --- JSON documents ----------------------------------------------------------

def game_from_json(doc: Mapping | str) -> StageGame:
    """Load a tabulated game.

    Payoff tables are nested lists indexed ``[state][sender action][receiver action]``.
    A document ``{"builtin": name, "params": {...}}`` loads a builtin instead.
    """
    if isinstance(doc, str):
        doc = json.loads(doc)
    if "builtin" in doc:
        return builtin_game(doc["builtin"], **doc.get("params", {}))
    try:
        states = tuple(doc["states"])
        P = tuple(as_point(p) for p in doc["sender_actions"])
        A = tuple(doc["receiver_actions"])
        u_tab = np.asarray(doc["payoffs"]["u"], dtype=float)
        v_tab = np.asarray(doc["payoffs"]["v"], dtype=float)
        prior = doc["prior"]
    except KeyError as exc:
        raise GameError(f"missing key {exc}") from None
    shape = (len(states), len(P), len(A))
    if u_tab.shape != shape or v_tab.shape != shape:
        raise GameError(f"payoff tables must have shape {shape}")
    s_idx = {s: i for i, s in enumerate(states)}
    p_idx = {p: i for i, p in enumerate(P)}
    a_idx = {a: i for i, a in enumerate(A)}

    def u(theta, p, a):
        return u_tab[s_idx[theta], p_idx[as_point(p)], a_idx[a]]

    def v(theta, p, a):
        return v_tab[s_idx[theta], p_idx[as_point(p)], a_idx[a]]

    return StageGame(StateSpace(states, prior), P, A, u, v,
                     default_action=doc.get("default_action"), name=doc.get("name", "custom"))


def strategy_from_json(game: StageGame, doc) -> SenderStrategy:
    """``{"probs": [[...], ...]}`` (state x action) or ``{state: {price: prob}}``."""
    if isinstance(doc, Mapping) and "probs" in doc:
        return SenderStrategy(game, np.asarray(doc["probs"], dtype=float))
    table = {}
    for th, dist in doc.items():
        key = th if th in game.states else _coerce_state(game, th)
        table[key] = {float(p) if _is_number(p) else tuple(json.loads(p)): q for p, q in dist.items()}
    return SenderStrategy.from_dict(game, table)


def _is_number(s) -> bool:
    try:
        float(s)
        return True
    except (TypeError, ValueError):
        return False


def _coerce_state(game, th):
    for s in game.states:
        if str(s) == str(th) or (_is_number(th) and _is_number(s) and float(s) == float(th)):
            return s
    raise GameError(f"unknown state {th!r}")
