"""Discretisation and smoothing of continuous sender-action spaces.

Two routes from a continuum of sender actions to finitely many labelled
points:

* a product partition into cells of width ``lam``, whose labels aggregate
  the payoff ledger over every observed action in the cell;
* a mollifier perturbation of the observed actions followed by a density
  filter that sends rarely-seen actions to a default reply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .label_infer import NoDataError, PayoffLedger
from .stage_game import as_point

BOUNDS_TOL = 1e-9
KEEP = "keep"
RECOMMEND_DEFAULT = "recommend-default"


@dataclass(frozen=True)
class Partition:
    """Product of per-dimension half-open cells; the last cell per dimension is closed."""

    lows: tuple
    highs: tuple
    lam: float
    shape: tuple

    @property
    def dim(self) -> int:
        return len(self.lows)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def intervals(self, j: int) -> list:
        lo, hi = self.lows[j], self.highs[j]
        edges = [lo + k * self.lam for k in range(self.shape[j])] + [hi]
        return [(edges[k], min(edges[k + 1], hi)) for k in range(self.shape[j])]


def build_partition(bounds, lam: float) -> Partition:
    """``bounds`` is ``(lo, hi)`` or a sequence of per-dimension ``(lo, hi)``."""
    if not lam > 0:
        raise ValueError("cell width must be positive")
    if len(bounds) == 0:
        raise ValueError("bounds must be nonempty")
    if np.isscalar(bounds[0]):
        bounds = [bounds]
    lows, highs, shape = [], [], []
    for lo, hi in bounds:
        lo, hi = float(lo), float(hi)
        if not hi >= lo:
            raise ValueError("each bound needs lo <= hi")
        lows.append(lo)
        highs.append(hi)
        shape.append(max(1, math.ceil((hi - lo) / lam - BOUNDS_TOL)))
    return Partition(tuple(lows), tuple(highs), float(lam), tuple(shape))


def cell_coords(partition: Partition, points) -> np.ndarray:
    """Per-dimension cell coordinates of each row of ``points``."""
    pts = np.atleast_2d(np.asarray([as_point(p) for p in points], dtype=float))
    lo, hi = np.asarray(partition.lows), np.asarray(partition.highs)
    if pts.shape[1] != partition.dim:
        raise ValueError("point dimension does not match the partition")
    if np.any(pts < lo - BOUNDS_TOL) or np.any(pts > hi + BOUNDS_TOL):
        raise ValueError("point lies outside the partition bounds")
    pts = np.clip(pts, lo, hi)
    # snapping by BOUNDS_TOL puts points sitting on a cell edge into the
    # cell that starts there, whatever the rounding of (p - lo) / lam
    k = np.floor((pts - lo) / partition.lam + BOUNDS_TOL).astype(int)
    return np.minimum(k, np.asarray(partition.shape) - 1)


def cell_of(partition: Partition, p) -> int:
    coords = cell_coords(partition, [p])[0]
    return int(np.ravel_multi_index(tuple(coords), partition.shape))


def cells_of(partition: Partition, points) -> np.ndarray:
    coords = cell_coords(partition, points)
    return np.ravel_multi_index(tuple(coords.T), partition.shape)


def cell_sums(ledger: PayoffLedger, partition: Partition):
    """Cumulative payoff sums and observation counts aggregated per cell."""
    sums = np.zeros((partition.n_cells, len(ledger.actions)))
    counts = np.zeros(partition.n_cells, dtype=np.int64)
    if len(ledger):
        idx = cells_of(partition, ledger.points)
        np.add.at(sums, idx, ledger.sums)
        np.add.at(counts, idx, ledger.counts)
    return sums, counts


def cell_label(ledger: PayoffLedger, partition: Partition, cell: int):
    """Action with the largest payoff summed over all observations in ``cell``."""
    if not 0 <= cell < partition.n_cells:
        raise IndexError("cell index out of range")
    sums, counts = cell_sums(ledger, partition)
    if counts[cell] == 0:
        raise NoDataError(f"no data in cell {cell}")
    return ledger.actions[int(np.argmax(sums[cell]))]


def cell_labels(ledger: PayoffLedger, partition: Partition) -> dict:
    sums, counts = cell_sums(ledger, partition)
    return {int(c): ledger.actions[int(np.argmax(sums[c]))] for c in np.flatnonzero(counts)}


# --- mollifier ---------------------------------------------------------------

def _bump(r2: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r2, dtype=float)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


@lru_cache(maxsize=None)
def bump_mass(m: int) -> float:
    """Integral of exp(-1/(1-|u|^2)) over the unit ball in R^m."""
    if m < 1:
        raise ValueError("dimension must be >= 1")
    sphere = 2.0 * math.pi ** (m / 2) / special.gamma(m / 2)
    radial, _ = integrate.quad(lambda r: r ** (m - 1) * math.exp(-1.0 / (1.0 - r * r)),
                               0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
    return sphere * radial


@dataclass(frozen=True)
class Mollifier:
    eta: float
    m: int = 1

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("bandwidth must be positive")
        if self.m < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def K(self) -> float:
        return bump_mass(self.m)

    def pdf(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.m == 1 and (z.ndim == 0 or z.shape[-1] != 1):
            r2 = (z / self.eta) ** 2
        else:
            r2 = np.sum((z / self.eta) ** 2, axis=-1)
        return _bump(np.asarray(r2)) / (self.K * self.eta ** self.m)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` draws of shape (n, m) by rejection from the enclosing cube."""
        out = np.empty((0, self.m))
        while len(out) < n:
            need = n - len(out)
            batch = max(64, 4 * need * 2 ** self.m)
            u = rng.uniform(-1.0, 1.0, size=(batch, self.m))
            accept = rng.random(batch) < _bump(np.sum(u * u, axis=1)) * math.e
            out = np.vstack([out, u[accept][:need]])
        return out * self.eta


def mollifier_pdf(mollifier: Mollifier, z) -> float:
    return float(mollifier.pdf(z))


def smooth_observations(observations, mollifier: Mollifier, seed: int) -> np.ndarray:
    """Shift every observation by an independent mollifier draw."""
    obs = np.asarray([as_point(p) for p in observations], dtype=float)
    if obs.size == 0:
        return obs.reshape(0, mollifier.m)
    if obs.shape[1] != mollifier.m:
        raise ValueError("observation dimension does not match the mollifier")
    rng = np.random.default_rng(seed)
    return obs + mollifier.sample(len(obs), rng)


# --- density filter ----------------------------------------------------------

@dataclass(frozen=True)
class DensityFilter:
    gamma: float = 0.01
    delta: float = 0.05
    default_action: object = None

    def __post_init__(self):
        if not (self.gamma > 0 and self.delta > 0):
            raise ValueError("gamma and delta must be positive")

    @classmethod
    def for_mollifier(cls, mollifier: Mollifier, gamma: float = 0.01, default_action=None):
        return cls(gamma, mollifier.eta / 2.0, default_action)


def window_frequency(ledger: PayoffLedger, delta: float, p) -> float:
    """Share of recorded observations within max-norm distance ``delta`` of ``p``."""
    if ledger.total == 0:
        raise NoDataError("ledger is empty")
    pts = np.asarray(ledger.points, dtype=float)
    near = np.all(np.abs(pts - np.asarray(as_point(p))) <= delta, axis=1)
    return float(ledger.counts[near].sum() / ledger.total)


def density_filter(ledger: PayoffLedger, filt: DensityFilter, p) -> str:
    """``KEEP`` when the window frequency reaches (2 delta)^m gamma, else ``RECOMMEND_DEFAULT``."""
    m = len(as_point(p))
    cutoff = (2.0 * filt.delta) ** m * filt.gamma
    return KEEP if window_frequency(ledger, filt.delta, p) >= cutoff else RECOMMEND_DEFAULT


def filtered_label(ledger: PayoffLedger, filt: DensityFilter, p, label_fn):
    """``label_fn(p)`` when ``p`` passes the filter, otherwise the filter's default action."""
    if density_filter(ledger, filt, p) == KEEP:
        return label_fn(p)
    if filt.default_action is None:
        raise ValueError("filter has no default action")
    return filt.default_action
