import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from boostarena.action_space import (
    KEEP,
    RECOMMEND_DEFAULT,
    DensityFilter,
    Mollifier,
    build_partition,
    cell_label,
    cell_labels,
    cell_of,
    cells_of,
    density_filter,
    filtered_label,
    mollifier_pdf,
    smooth_observations,
)
from boostarena.label_infer import NoDataError, PayoffLedger, infer_label

A2 = (1, -1)


class TestPartition:
    def test_unit_interval(self):
        part = build_partition((0.0, 1.0), 0.4)
        assert part.shape == (3,)
        got = part.intervals(0)
        np.testing.assert_allclose(got, [(0.0, 0.4), (0.4, 0.8), (0.8, 1.0)])

    def test_wide_cell(self):
        assert build_partition((0.0, 1.0), 2.0).shape == (1,)

    def test_product(self):
        part = build_partition([(0.0, 1.0), (0.0, 1.0)], 0.5)
        assert part.n_cells == 4

    def test_bad_width(self):
        with pytest.raises(ValueError):
            build_partition((0.0, 1.0), 0.0)

    def test_cell_of(self):
        part = build_partition((0.0, 1.0), 0.4)
        assert cell_of(part, 0.4) == 1
        assert cell_of(part, 1.0) == 2
        assert cell_of(part, 0.0) == 0
        assert cell_of(part, 1.0 + 1e-12) == 2

    def test_outside(self):
        with pytest.raises(ValueError):
            cell_of(build_partition((0.0, 1.0), 0.4), 1.1)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-5, 5), st.floats(0.01, 5), st.floats(0.01, 2), st.lists(st.floats(0, 1), min_size=1, max_size=20))
    def test_cover_and_disjoint(self, lo, width, lam, us):
        part = build_partition((lo, lo + width), lam)
        pts = [lo + u * width for u in us]
        idx = cells_of(part, pts)
        assert np.all((0 <= idx) & (idx < part.n_cells))
        for p, k in zip(pts, idx):
            a, b = part.intervals(0)[k]
            last = k == part.n_cells - 1
            assert a - 1e-9 <= p and (p <= b + 1e-9 if last else p < b + 1e-9)


class TestCellLabel:
    def test_single_point_matches_point_label(self):
        led = PayoffLedger(A2).record(0.3, [0.2, 0.0])
        part = build_partition((0.0, 1.0), 0.25)
        assert cell_label(led, part, cell_of(part, 0.3)) == infer_label(led, 0.3)

    def test_aggregate_sign(self):
        led = PayoffLedger(A2).record(0.3, [0.4, 0.0]).record(0.45, [-0.3, 0.0])
        part = build_partition((0.0, 1.0), 0.5)
        assert cell_label(led, part, 0) == 1

    def test_empty_cell(self):
        led = PayoffLedger(A2).record(0.3, [0.4, 0.0])
        with pytest.raises(NoDataError, match="no data"):
            cell_label(led, build_partition((0.0, 1.0), 0.5), 1)

    def test_refinement_below_separation(self):
        rng = np.random.default_rng(0)
        pts = [0.9, 1.0, 1.4, 1.9, 2.0]
        led = PayoffLedger(A2)
        for _ in range(200):
            p = pts[rng.integers(5)]
            led.record(p, [rng.normal(), rng.normal()])
        part = build_partition((0.9, 2.0), 0.09)
        labels = cell_labels(led, part)
        for p in pts:
            assert labels[cell_of(part, p)] == infer_label(led, p)


class TestMollifier:
    @pytest.mark.parametrize("eta", [0.05, 0.1, 0.5])
    def test_normalised_1d(self, eta):
        mol = Mollifier(eta, 1)
        total, _ = integrate.quad(lambda z: mollifier_pdf(mol, z), -eta, eta, epsabs=1e-13, limit=200)
        assert abs(total - 1.0) < 1e-6

    @pytest.mark.parametrize("eta", [0.05, 0.1, 0.5])
    def test_normalised_2d(self, eta):
        mol = Mollifier(eta, 2)
        total, _ = integrate.dblquad(
            lambda y, x: float(mol.pdf(np.array([x, y]))), -eta, eta,
            lambda x: -math.sqrt(max(eta * eta - x * x, 0.0)),
            lambda x: math.sqrt(max(eta * eta - x * x, 0.0)), epsabs=1e-12)
        assert abs(total - 1.0) < 1e-6

    def test_zero_outside(self):
        mol = Mollifier(0.5)
        assert mollifier_pdf(mol, 0.5) == 0.0
        assert mollifier_pdf(mol, -0.7) == 0.0

    def test_centre(self):
        mol = Mollifier(1.0)
        assert mollifier_pdf(mol, 0.0) == pytest.approx(math.exp(-1) / mol.K)

    def test_draws_bounded_and_centred(self):
        mol = Mollifier(0.1)
        z = mol.sample(100_000, np.random.default_rng(2))[:, 0]
        assert np.all(np.abs(z) < 0.1)
        assert abs(z.mean()) < 3 * z.std() / math.sqrt(len(z))

    def test_draw_histogram_matches_density(self):
        mol = Mollifier(1.0)
        z = mol.sample(200_000, np.random.default_rng(4))[:, 0]
        hist, edges = np.histogram(z, bins=20, range=(-1, 1), density=True)
        mids = (edges[:-1] + edges[1:]) / 2
        np.testing.assert_allclose(hist, mol.pdf(mids), atol=0.05)

    def test_smoothing_reproducible(self):
        mol = Mollifier(0.05)
        a = smooth_observations([0.9, 1.4, 1.9], mol, seed=11)
        b = smooth_observations([0.9, 1.4, 1.9], mol, seed=11)
        np.testing.assert_array_equal(a, b)
        assert np.all(np.abs(a[:, 0] - [0.9, 1.4, 1.9]) < 0.05)

    def test_smoothing_preserves_cell_labels(self):
        rng = np.random.default_rng(3)
        pts = np.array([0.9, 1.4, 1.9])
        obs = pts[rng.integers(3, size=300)]
        pay = np.where(obs[:, None] == 1.4, [[-0.1, 0.0]], [[0.2, 0.0]])
        mol = Mollifier(0.02)
        smoothed = smooth_observations(obs, mol, seed=1)
        led = PayoffLedger(A2).record_many([tuple(p) for p in smoothed], pay)
        part = build_partition((0.85, 1.95), 0.1)
        labels = cell_labels(led, part)
        assert [labels[cell_of(part, p)] for p in pts] == [1, -1, 1]


class TestDensityFilter:
    def test_frequent_point_kept(self):
        led = PayoffLedger(A2)
        led.record_many([0.5] * 500 + list(np.linspace(0, 1, 500)), np.zeros((1000, 2)))
        assert density_filter(led, DensityFilter(gamma=1e-3, delta=0.01), 0.5) == KEEP

    def test_isolated_point_dropped(self):
        led = PayoffLedger(A2).record_many([0.1] * 100, np.zeros((100, 2)))
        filt = DensityFilter(gamma=0.01, delta=0.01, default_action=-1)
        assert density_filter(led, filt, 0.9) == RECOMMEND_DEFAULT
        assert filtered_label(led, filt, 0.9, lambda p: 1) == -1

    def test_for_mollifier_defaults(self):
        filt = DensityFilter.for_mollifier(Mollifier(0.2))
        assert filt.delta == pytest.approx(0.1)
        assert filt.gamma == 0.01

    def test_uniform_all_discarded_above_density(self):
        rng = np.random.default_rng(0)
        led = PayoffLedger(A2).record_many(rng.uniform(0, 1, 4000), np.zeros((4000, 2)))
        # cutoff twice the uniform density: every window falls short
        filt = DensityFilter(gamma=2.0, delta=0.05)
        probes = rng.uniform(0.05, 0.95, 200)
        dropped = np.mean([density_filter(led, filt, p) == RECOMMEND_DEFAULT for p in probes])
        assert dropped == 1.0
        assert dropped <= 1.0 * filt.gamma

    def test_validation(self):
        with pytest.raises(ValueError):
            DensityFilter(gamma=0.0)


class TestOscillatingDensity:
    """Sender actions with density proportional to 1 + sin(1/p) on (0, 1]."""

    @staticmethod
    def draw(rng, n):
        out = np.empty(0)
        while len(out) < n:
            p = rng.uniform(1e-3, 1.0, 4 * n)
            keep = rng.uniform(0.0, 2.0, 4 * n) < 1.0 + np.sin(1.0 / p)
            out = np.concatenate([out, p[keep]])
        return out[:n]

    def test_discard_share_within_bound(self):
        rng = np.random.default_rng(0)
        ledger = PayoffLedger(A2)
        obs = np.round(self.draw(rng, 3000), 3)
        ledger.record_many([(float(x),) for x in obs], np.zeros((len(obs), 2)))
        gamma = 0.3
        filt = DensityFilter(gamma, 0.02, -1)
        queries = self.draw(rng, 2000)
        discard = np.mean([density_filter(ledger, filt, (float(q),)) == RECOMMEND_DEFAULT
                           for q in queries])
        assert discard <= gamma + 3 * math.sqrt(gamma * (1 - gamma) / len(queries))

    def test_dense_region_kept(self):
        # 1/p = pi/2 is a density peak, 1/p = 3 pi/2 a zero of the density
        rng = np.random.default_rng(1)
        ledger = PayoffLedger(A2)
        obs = np.round(self.draw(rng, 5000), 3)
        ledger.record_many([(float(x),) for x in obs], np.zeros((len(obs), 2)))
        filt = DensityFilter(0.3, 0.01, -1)
        assert density_filter(ledger, filt, (2 / math.pi,)) == KEEP
        assert density_filter(ledger, filt, (2 / (3 * math.pi),)) == RECOMMEND_DEFAULT
